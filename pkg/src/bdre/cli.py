"""Config-driven command line front end.

One JSON config plus a command name per run, so every experiment is
reproducible from a single artifact.  Reports embed the resolved config,
the seed, the wall-clock duration, and the package version; outputs are
JSON (default) or a flattened key,value CSV, and the simulate command
dumps paths as CSV rows (replica, event_index, time, state).  Figure
rendering to PNG files is opt-in via --figures.

Exit codes: 0 success, 2 configuration errors, 3 domain errors
(including a check run whose law violates the model hypotheses).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

from . import __version__
from .analysis import compare_decomposition, velocity, _map_ordered, _mean_se
from .environment import EnvironmentLaw, check_conditions, window
from .errors import BdreError, ConfigError
from .matrices import classify_recurrence, lyapunov_top
from .simulate import (
    DEFAULT_STEP_CAP,
    HitState,
    StepCap,
    TimeHorizon,
    first_passage_time,
    simulate_path,
)
from ._rng import derive_seed

COMMANDS = (
    "check",
    "classify",
    "passage",
    "velocity",
    "verify-decomposition",
    "simulate",
)

# key -> (type tag, default); None default means required-or-rule-specific
_COMMON_KEYS = {
    "law": ("law", None),
    "seed": ("int", 0),
    "output_path": ("str", None),
    "output_format": ("str", None),
}

_COMMAND_KEYS: dict[str, dict] = {
    "check": {},
    "classify": {
        "steps": ("count", 10**5),
        "replicas": ("count", 4),
        "burn_in": ("int", 1000),
        "tolerance": ("unit", 1e-3),
    },
    "passage": {
        "target": ("count", 1),
        "replicas": ("count", 1000),
        "step_cap": ("count", DEFAULT_STEP_CAP),
    },
    "velocity": {
        "n_env": ("count", 100),
        "horizon": ("pos", 1000.0),
        "n_paths": ("count", 200),
        "steps": ("count", 20000),
        "replicas": ("count", 4),
        "burn_in": ("int", 1000),
        "tolerance": ("unit", 1e-3),
        "max_terms": ("count", 10**4),
        "rel_tol": ("unit", 1e-10),
    },
    "verify-decomposition": {
        "n_samples": ("count", 10**4),
        "step_cap": ("count", DEFAULT_STEP_CAP),
        "generation_cap": ("count", 10**4),
    },
    "simulate": {
        "start": ("int", 0),
        "replicas": ("count", 1),
        "target": ("count", None),
        "horizon": ("pos", None),
        "steps": ("count", None),
        "step_cap": ("count", DEFAULT_STEP_CAP),
    },
}


def _coerce(key: str, value, tag: str):
    if tag == "str":
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} must be a string")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {key!r} must be a number")
    if tag in ("int", "count"):
        if float(value) != int(value):
            raise ConfigError(f"config key {key!r} must be an integer")
        value = int(value)
        if tag == "count" and value < 1:
            raise ConfigError(f"config key {key!r} must be >= 1")
        return value
    value = float(value)
    if tag == "pos" and not value > 0:
        raise ConfigError(f"config key {key!r} must be > 0")
    if tag == "unit" and not 0 < value < 1:
        raise ConfigError(f"config key {key!r} must be in (0, 1)")
    return value


def resolve_config(command: str, config: dict) -> dict:
    """Validate against the command's schema and fill defaults.

    Unknown keys are rejected by name; the result is the exact dict the
    report embeds, so re-running it reproduces the numbers.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    schema = dict(_COMMON_KEYS)
    schema.update(_COMMAND_KEYS[command])
    unknown = sorted(set(config) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]!r}")
    if "law" not in config:
        raise ConfigError("missing config key 'law'")
    law = EnvironmentLaw.from_dict(config["law"])

    resolved: dict = {"law": law.to_dict()}
    for key, (tag, default) in schema.items():
        if key == "law":
            continue
        if key in config and config[key] is not None:
            resolved[key] = _coerce(key, config[key], tag)
        elif default is not None:
            resolved[key] = default
    if command == "simulate":
        rules = [k for k in ("target", "horizon", "steps") if k in resolved]
        if len(rules) != 1:
            raise ConfigError(
                "simulate needs exactly one stop rule key of 'target', "
                f"'horizon', 'steps'; got {rules or 'none'}"
            )
    fmt = resolved.get("output_format")
    if fmt is None:
        resolved["output_format"] = "csv" if command == "simulate" else "json"
    elif fmt not in ("json", "csv"):
        raise ConfigError("config key 'output_format' must be 'json' or 'csv'")
    return resolved


def _cmd_check(law, cfg, threads):
    report = check_conditions(law)
    code = 0 if report.all_hold else 3
    return code, report.to_dict(), None


def _cmd_classify(law, cfg, threads):
    est = lyapunov_top(
        law,
        steps=cfg["steps"],
        replicas=cfg["replicas"],
        burn_in=cfg["burn_in"],
        seed=cfg["seed"],
        threads=threads,
    )
    verdict = classify_recurrence(est, cfg["tolerance"])
    payload = ("classify", est)
    return 0, verdict.to_dict(), payload


def _cmd_passage(law, cfg, threads):
    seed = cfg["seed"]
    w = window(law, derive_seed(seed, 30), 0, 0)

    def one(r: int):
        return first_passage_time(
            w, cfg["target"], derive_seed(seed, 31, r), step_cap=cfg["step_cap"]
        )

    results = _map_ordered(one, range(cfg["replicas"]), threads)
    times = [t for t, censored in results if not censored]
    n_censored = cfg["replicas"] - len(times)
    result = {
        "target": cfg["target"],
        "n_samples": cfg["replicas"],
        "censored": n_censored,
        "censoring_rate": n_censored / cfg["replicas"],
    }
    if times:
        mean, se = _mean_se(times)
        ordered = sorted(times)

        def quantile(p: float) -> float:
            k = min(len(ordered) - 1, int(math.ceil(p * len(ordered))) - 1)
            return ordered[max(k, 0)]

        result.update(
            mean=mean,
            std_error=se,
            q50=quantile(0.50),
            q90=quantile(0.90),
            q99=quantile(0.99),
        )
    payload = ("passage", times)
    return 0, result, payload


def _cmd_velocity(law, cfg, threads):
    report = velocity(
        law,
        n_env=cfg["n_env"],
        horizon=cfg["horizon"],
        n_paths=cfg["n_paths"],
        seed=cfg["seed"],
        lyapunov_steps=cfg["steps"],
        lyapunov_replicas=cfg["replicas"],
        burn_in=cfg["burn_in"],
        tolerance=cfg["tolerance"],
        max_terms=cfg["max_terms"],
        rel_tol=cfg["rel_tol"],
        threads=threads,
    )
    result = report.to_dict()
    payload = ("velocity", result)
    return 0, result, payload


def _cmd_verify_decomposition(law, cfg, threads, keep_samples=False):
    report = compare_decomposition(
        law,
        n_samples=cfg["n_samples"],
        seed=cfg["seed"],
        step_cap=cfg["step_cap"],
        generation_cap=cfg["generation_cap"],
        threads=threads,
        keep_samples=keep_samples,
    )
    payload = ("decomposition", report)
    return 0, report.to_dict(), payload


def _cmd_simulate(law, cfg, threads):
    seed = cfg["seed"]
    w = window(law, derive_seed(seed, 40), 0, 0)
    if "target" in cfg:
        stop = HitState(cfg["target"])
    elif "horizon" in cfg:
        stop = TimeHorizon(cfg["horizon"])
    else:
        stop = StepCap(cfg["steps"])

    def one(r: int):
        return simulate_path(
            w, cfg["start"], stop, derive_seed(seed, 41, r), step_cap=cfg["step_cap"]
        )

    paths = _map_ordered(one, range(cfg["replicas"]), threads)
    result = {
        "paths": [
            {
                "replica": r,
                "start": p.start_state,
                "censored": p.censored,
                "final_state": p.final_state,
                "final_time": p.final_time,
                "n_events": p.n_events,
                "events": [[t, s] for t, s in p.events],
            }
            for r, p in enumerate(paths)
        ]
    }
    payload = ("simulate", paths)
    return 0, result, payload


_HANDLERS = {
    "check": _cmd_check,
    "classify": _cmd_classify,
    "passage": _cmd_passage,
    "velocity": _cmd_velocity,
    "verify-decomposition": _cmd_verify_decomposition,
    "simulate": _cmd_simulate,
}


def _render_figures(command, payload, figures_dir: str) -> list[str]:
    # Imported lazily so matplotlib loads only when rendering is requested.
    from . import figures

    os.makedirs(figures_dir, exist_ok=True)
    kind, data = payload
    if kind == "classify":
        est = data
        return [
            figures.replica_exponents(
                list(est.replica_gammas), est.gamma_top, est.std_error, figures_dir
            )
        ]
    if kind == "passage" and data:
        return [figures.passage_histogram(list(data), figures_dir)]
    if kind == "velocity":
        return [figures.velocity_bars(data, figures_dir)]
    if kind == "decomposition" and data.samples_direct:
        return [
            figures.decomposition_ecdf(
                list(data.samples_direct),
                list(data.samples_reconstructed),
                figures_dir,
            )
        ]
    if kind == "simulate":
        return [figures.trajectories(list(data), figures_dir)]
    return []


def run_command(
    command: str, config: dict, threads: int = 1, figures_dir: str | None = None
) -> tuple[int, dict]:
    """Run one command; never raises, errors come back as (code, report)."""
    started = time.monotonic()
    try:
        resolved = resolve_config(command, config)
        law = EnvironmentLaw.from_dict(resolved["law"])
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        handler = _HANDLERS[command]
        if command == "verify-decomposition":
            code, result, payload = handler(
                law, resolved, threads, keep_samples=figures_dir is not None
            )
        else:
            code, result, payload = handler(law, resolved, threads)
    except ConfigError as exc:
        return 2, _error_report(command, config, exc)
    except BdreError as exc:
        return 3, _error_report(command, config, exc)

    report = {
        "command": command,
        "version": __version__,
        "seed": resolved["seed"],
        "config": resolved,
        "duration_seconds": time.monotonic() - started,
        "result": result,
    }
    if figures_dir is not None and payload is not None:
        report["figures"] = _render_figures(command, payload, figures_dir)
    return code, report


def _error_report(command, config, exc) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": config,
        "error": {"type": type(exc).__name__, "message": str(exc)},
    }


def _flatten(obj, prefix: str, rows: list):
    if isinstance(obj, dict):
        for key, value in obj.items():
            _flatten(value, f"{prefix}{key}.", rows)
    elif isinstance(obj, (list, tuple)):
        rows.append((prefix[:-1], json.dumps(obj)))
    else:
        rows.append((prefix[:-1], obj))


def render_output(command: str, report: dict, fmt: str) -> str:
    """Serialize a report: JSON, key,value CSV, or the simulate path dump."""
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    if command == "simulate" and "result" in report:
        writer.writerow(["replica", "event_index", "time", "state"])
        for path in report["result"]["paths"]:
            writer.writerow([path["replica"], 0, 0.0, path["start"]])
            for k, (t, s) in enumerate(path["events"], start=1):
                writer.writerow([path["replica"], k, t, s])
        return out.getvalue()
    writer.writerow(["key", "value"])
    rows: list = []
    _flatten(report, "", rows)
    for key, value in rows:
        writer.writerow([key, value])
    return out.getvalue()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bdre",
        description=(
            "Simulation and numerical verification for birth-and-death "
            "processes in random environment"
        ),
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--output", help="write the report here instead of stdout")
    parser.add_argument("--format", choices=["json", "csv"], dest="fmt",
                        help="override the config's output_format")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker bound for replica fan-out (default 1)")
    parser.add_argument("--figures", metavar="DIR",
                        help="also render PNG figures into DIR")
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2

    code, report = run_command(
        args.command, config, threads=args.threads, figures_dir=args.figures
    )
    if "error" in report:
        err = report["error"]
        print(f"error: {err['type']}: {err['message']}", file=sys.stderr)
        return code

    fmt = args.fmt or report["config"]["output_format"]
    output_path = args.output or report["config"].get("output_path")
    rendered = render_output(args.command, report, fmt)
    if output_path:
        with open(output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(rendered)
    else:
        sys.stdout.write(rendered)
    return code


if __name__ == "__main__":
    sys.exit(main())
