import csv
import io
import json
import subprocess
import sys

import pytest

from bdre import __version__
from bdre.cli import main, render_output, resolve_config, run_command
from bdre.errors import ConfigError

GOOD_LAW = {
    "L": 2,
    "atoms": [{"weight": 1.0, "lambda": 4.0, "mu": [1.0, 1.0]}],
}
BAD_LAW = {
    "L": 2,
    "atoms": [{"weight": 1.0, "lambda": 4.0, "mu": [1.0, 0.0]}],
}
MIXED_LAW = {
    "L": 1,
    "atoms": [
        {"weight": 0.5, "lambda": 3.0, "mu": [1.0]},
        {"weight": 0.5, "lambda": 4.0, "mu": [1.0]},
    ],
}


class TestResolveConfig:
    def test_defaults_filled(self):
        cfg = resolve_config("classify", {"law": GOOD_LAW})
        assert cfg["steps"] == 10**5
        assert cfg["replicas"] == 4
        assert cfg["burn_in"] == 1000
        assert cfg["tolerance"] == 1e-3
        assert cfg["seed"] == 0
        assert cfg["output_format"] == "json"
        assert cfg["law"]["atoms"][0]["lambda"] == 4.0

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="mystery"):
            resolve_config("check", {"law": GOOD_LAW, "mystery": 1})

    def test_first_unknown_key_in_sorted_order(self):
        with pytest.raises(ConfigError, match="alpha"):
            resolve_config("check", {"law": GOOD_LAW, "zeta": 1, "alpha": 2})

    def test_missing_law(self):
        with pytest.raises(ConfigError, match="law"):
            resolve_config("check", {})

    def test_unknown_command(self):
        with pytest.raises(ConfigError):
            resolve_config("frobnicate", {"law": GOOD_LAW})

    def test_type_checks(self):
        with pytest.raises(ConfigError, match="steps"):
            resolve_config("classify", {"law": GOOD_LAW, "steps": "many"})
        with pytest.raises(ConfigError, match="steps"):
            resolve_config("classify", {"law": GOOD_LAW, "steps": True})
        with pytest.raises(ConfigError, match="steps"):
            resolve_config("classify", {"law": GOOD_LAW, "steps": 2.5})
        with pytest.raises(ConfigError, match="replicas"):
            resolve_config("classify", {"law": GOOD_LAW, "replicas": 0})
        with pytest.raises(ConfigError, match="tolerance"):
            resolve_config("classify", {"law": GOOD_LAW, "tolerance": 2.0})

    def test_integral_float_accepted(self):
        cfg = resolve_config("classify", {"law": GOOD_LAW, "steps": 2000.0})
        assert cfg["steps"] == 2000
        assert isinstance(cfg["steps"], int)

    def test_simulate_requires_exactly_one_stop_rule(self):
        with pytest.raises(ConfigError, match="stop rule"):
            resolve_config("simulate", {"law": GOOD_LAW})
        with pytest.raises(ConfigError, match="stop rule"):
            resolve_config(
                "simulate", {"law": GOOD_LAW, "target": 1, "horizon": 2.0}
            )
        cfg = resolve_config("simulate", {"law": GOOD_LAW, "steps": 100})
        assert cfg["steps"] == 100

    def test_output_format_defaults(self):
        assert (
            resolve_config("simulate", {"law": GOOD_LAW, "target": 1})[
                "output_format"
            ]
            == "csv"
        )
        assert resolve_config("check", {"law": GOOD_LAW})["output_format"] == "json"
        with pytest.raises(ConfigError, match="output_format"):
            resolve_config("check", {"law": GOOD_LAW, "output_format": "yaml"})

    def test_resolved_config_is_rerunnable(self):
        cfg = resolve_config("passage", {"law": GOOD_LAW, "replicas": 7})
        assert resolve_config("passage", cfg) == cfg


class TestRunCommand:
    def test_check_passes(self):
        code, report = run_command("check", {"law": GOOD_LAW})
        assert code == 0
        assert report["command"] == "check"
        assert report["version"] == __version__
        assert report["result"]["c1"] and report["result"]["c3"]
        assert report["result"]["violations"] == []
        assert report["duration_seconds"] >= 0

    def test_check_violations_exit_code(self):
        code, report = run_command("check", {"law": BAD_LAW})
        assert code == 3
        assert "error" not in report
        assert report["result"]["c3"] is False
        assert report["result"]["violations"]

    def test_check_dead_law_reports_c1(self):
        dead = {"L": 1, "atoms": [{"weight": 1.0, "lambda": 0.0, "mu": [0.0]}]}
        code, report = run_command("check", {"law": dead})
        assert code == 3
        assert report["result"]["c1"] is False

    def test_classify(self):
        code, report = run_command(
            "classify", {"law": GOOD_LAW, "steps": 3000, "replicas": 2}
        )
        assert code == 0
        assert report["result"]["verdict"] == "TransientRight"

    def test_passage_summary(self):
        code, report = run_command(
            "passage", {"law": GOOD_LAW, "replicas": 200, "seed": 3}
        )
        assert code == 0
        res = report["result"]
        assert res["n_samples"] == 200
        assert res["censored"] == 0
        assert res["q50"] <= res["q90"] <= res["q99"]
        assert res["mean"] > 0

    def test_simulate_paths(self):
        code, report = run_command(
            "simulate", {"law": GOOD_LAW, "steps": 50, "replicas": 3, "seed": 1}
        )
        assert code == 0
        paths = report["result"]["paths"]
        assert [p["replica"] for p in paths] == [0, 1, 2]
        for p in paths:
            assert p["n_events"] == 50
            assert len(p["events"]) == 50
            assert not p["censored"]

    def test_config_error_exit_2(self):
        code, report = run_command("classify", {"law": GOOD_LAW, "bogus": 1})
        assert code == 2
        assert report["error"]["type"] == "ConfigError"
        assert "bogus" in report["error"]["message"]

    def test_domain_error_exit_3(self):
        code, report = run_command("classify", {"law": BAD_LAW})
        assert code == 3
        assert report["error"]["type"] == "ConditionsViolatedError"

    def test_thread_count_validated(self):
        code, report = run_command("check", {"law": GOOD_LAW}, threads=0)
        assert code == 2

    def test_rerun_from_embedded_config_is_identical(self):
        base = {"law": MIXED_LAW, "replicas": 150, "seed": 21}
        code, first = run_command("passage", base)
        assert code == 0
        code, second = run_command("passage", first["config"], threads=2)
        assert code == 0
        assert first["result"] == second["result"]
        assert first["config"] == second["config"]


class TestRenderOutput:
    def test_json_round_trip(self):
        code, report = run_command("check", {"law": GOOD_LAW})
        text = render_output("check", report, "json")
        assert json.loads(text)["result"]["c1"] is True

    def test_csv_flattening(self):
        code, report = run_command("check", {"law": GOOD_LAW})
        rows = list(csv.reader(io.StringIO(render_output("check", report, "csv"))))
        assert rows[0] == ["key", "value"]
        keys = {r[0] for r in rows[1:]}
        assert "result.c1" in keys
        assert "config.law.atoms" in keys

    def test_simulate_event_dump(self):
        code, report = run_command(
            "simulate", {"law": GOOD_LAW, "steps": 5, "replicas": 2, "seed": 4}
        )
        rows = list(csv.reader(io.StringIO(render_output("simulate", report, "csv"))))
        assert rows[0] == ["replica", "event_index", "time", "state"]
        assert rows[1] == ["0", "0", "0.0", "0"]
        # one seed row plus five events per replica
        assert len(rows) == 1 + 2 * 6
        first_events = [r for r in rows[1:] if r[0] == "0"]
        assert [int(r[1]) for r in first_events] == list(range(6))
        times = [float(r[2]) for r in first_events]
        assert times == sorted(times)


class TestMain:
    def write_config(self, tmp_path, payload):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    def test_stdout_json(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"law": GOOD_LAW})
        assert main(["check", "--config", cfg]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["command"] == "check"

    def test_output_file(self, tmp_path):
        cfg = self.write_config(tmp_path, {"law": GOOD_LAW})
        out = tmp_path / "report.json"
        assert main(["check", "--config", cfg, "--output", str(out)]) == 0
        assert json.loads(out.read_text())["result"]["c1"] is True

    def test_format_override(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"law": GOOD_LAW})
        assert main(["check", "--config", cfg, "--format", "csv"]) == 0
        assert capsys.readouterr().out.startswith("key,value")

    def test_output_path_from_config(self, tmp_path):
        out = tmp_path / "from_config.json"
        cfg = self.write_config(
            tmp_path, {"law": GOOD_LAW, "output_path": str(out)}
        )
        assert main(["check", "--config", cfg]) == 0
        assert out.exists()

    def test_bad_json_config(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["check", "--config", str(path)]) == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["check", "--config", str(tmp_path / "absent.json")]) == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_unknown_key_reported(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"law": GOOD_LAW, "shenanigans": 5})
        assert main(["check", "--config", cfg]) == 2
        assert "shenanigans" in capsys.readouterr().err

    def test_check_violations_exit_3_with_report(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"law": BAD_LAW})
        assert main(["check", "--config", cfg]) == 3
        report = json.loads(capsys.readouterr().out)
        assert report["result"]["c3"] is False

    def test_figures_written(self, tmp_path, capsys):
        cfg = self.write_config(
            tmp_path, {"law": GOOD_LAW, "replicas": 100, "seed": 2}
        )
        figdir = tmp_path / "figs"
        assert (
            main(["passage", "--config", cfg, "--figures", str(figdir)]) == 0
        )
        report = json.loads(capsys.readouterr().out)
        assert report["figures"]
        assert all(f.endswith(".png") for f in report["figures"])
        assert list(figdir.glob("*.png"))

    def test_module_entry_point(self, tmp_path):
        cfg = self.write_config(tmp_path, {"law": GOOD_LAW})
        proc = subprocess.run(
            [sys.executable, "-m", "bdre", "check", "--config", cfg],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["result"]["c1"] is True

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out
