"""Passage-time analytics, the law-of-large-numbers velocity, and stats.

The quenched mean passage time is a series over sites left of the
origin, each term one matrix-vector product cheaper than the last; its
annealed average feeds the velocity: reciprocal of a finite mean, zero
when the mean diverges.  A two-sample Kolmogorov-Smirnov test backs the
Monte Carlo cross-checks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .branching import (
    DEFAULT_GENERATION_CAP,
    reconstruct_passage_time,
    simulate_branching,
)
from .environment import EnvironmentLaw, EnvironmentWindow, check_conditions, window
from .errors import (
    ConditionsViolatedError,
    ConfigError,
    EmptySampleError,
    ExcessCensoringError,
    NoConvergenceError,
    ZeroLambdaAtSiteError,
)
from .matrices import (
    LyapunovEstimate,
    Verdict,
    classify_recurrence,
    lyapunov_top,
    transfer_matrix,
)
from .simulate import DEFAULT_STEP_CAP, TimeHorizon, first_passage_time, simulate_path
from ._rng import derive_seed

#: Asymptotic two-sample KS critical coefficient at the 1% level.
KS_CRIT_99 = 1.63


def _map_ordered(fn: Callable, items: Iterable, threads: int = 1) -> list:
    # Results in input order regardless of scheduling.
    items = list(items)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    if n == 0:
        raise EmptySampleError("mean of an empty sample")
    mean = math.fsum(xs) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class SeriesResult:
    """Outcome of summing the quenched mean passage-time series."""

    value: float
    terms_used: int
    tail_estimate: float
    converged: bool
    diverging: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "terms_used": self.terms_used,
            "tail_estimate": self.tail_estimate,
            "converged": self.converged,
            "diverging": self.diverging,
        }


def quenched_mean_passage_time(
    window: EnvironmentWindow,
    max_terms: int = 10**4,
    rel_tol: float = 1e-10,
) -> SeriesResult:
    """Sum the site series for the mean passage time of a fixed environment.

    The term at site i is the reciprocal up-rate there times the
    entrywise sum of the running product row vector, which starts at the
    unit vector (empty product) and picks up one transfer matrix per
    site.  Convergence requires L+3 consecutive terms below rel_tol of
    the partial sum and a geometric tail estimate within rel_tol of the
    value.  Divergence is declared on L+3 consecutive non-decreasing
    terms, or when the terms stop reaching new lows for 20*(L+3) terms
    running (oscillating critical products plateau without ever growing
    monotonically).
    """
    if not 0 < rel_tol < 1:
        raise ConfigError(f"rel_tol must be in (0, 1), got {rel_tol}")
    if max_terms < 1:
        raise ConfigError(f"max_terms must be >= 1, got {max_terms}")
    law_L = window.law.L
    span = law_L + 3
    stall_span = 20 * span
    vec = np.zeros(law_L)
    vec[0] = 1.0
    partial = 0.0
    comp = 0.0
    prev_term: float | None = None
    consec_small = 0
    consec_nondec = 0
    best_min = math.inf
    since_min = 0
    term = 0.0
    terms = 0
    for k in range(max_terms):
        i = -k
        site = window.rates(i)
        if not site.lam > 0:
            raise ZeroLambdaAtSiteError(f"zero up-rate at site {i}")
        term = float(vec.sum()) / site.lam
        terms = k + 1
        y = term - comp
        s = partial + y
        comp = (s - partial) - y
        partial = s

        ratio = term / prev_term if prev_term and prev_term > 0 else math.inf
        if prev_term is not None and term >= prev_term and term > 0:
            consec_nondec += 1
        else:
            consec_nondec = 0
        if term < best_min:
            best_min = term
            since_min = 0
        else:
            since_min += 1
        if consec_nondec >= span or since_min >= stall_span:
            return SeriesResult(
                value=partial,
                terms_used=terms,
                tail_estimate=math.inf,
                converged=False,
                diverging=True,
            )

        if partial > 0 and term < rel_tol * partial:
            consec_small += 1
        else:
            consec_small = 0
        if consec_small >= span:
            tail = term * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
            if tail <= rel_tol * abs(partial):
                return SeriesResult(
                    value=partial,
                    terms_used=terms,
                    tail_estimate=tail,
                    converged=True,
                )
        prev_term = term
        vec = vec @ transfer_matrix(site)

    ratio = term / prev_term if prev_term and prev_term > 0 else math.inf
    tail = term * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
    return SeriesResult(
        value=partial,
        terms_used=terms,
        tail_estimate=tail,
        converged=False,
    )


@dataclass(frozen=True)
class AnnealedResult:
    """Environment average of the quenched mean passage time.

    ``value`` includes the empty-product leading term of each quenched
    series; ``value_excluding_leading`` drops it, matching the variant
    that starts the site sum one step left of the origin.  Both are
    infinite when any sampled environment diverges.
    """

    value: float
    std_error: float
    n_env: int
    diverged: bool
    value_excluding_leading: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "n_env": self.n_env,
            "diverged": self.diverged,
            "value_excluding_leading": self.value_excluding_leading,
        }


def annealed_mean_passage_time(
    law: EnvironmentLaw,
    n_env: int = 100,
    max_terms: int = 10**4,
    rel_tol: float = 1e-10,
    seed: int = 0,
) -> AnnealedResult:
    """Average the quenched mean over independent environments.

    A single diverging environment flags the whole average as divergent
    (the annealed mean is then infinite).
    """
    report = check_conditions(law)
    if not report.all_hold:
        raise ConditionsViolatedError(
            "law fails hypothesis checks: " + "; ".join(report.violations)
        )
    if n_env < 1:
        raise ConfigError(f"n_env must be >= 1, got {n_env}")
    values: list[float] = []
    excluding: list[float] = []
    for r in range(n_env):
        env_seed = derive_seed(seed, 3, r)
        w = window(law, env_seed, 0, 0)
        result = quenched_mean_passage_time(w, max_terms=max_terms, rel_tol=rel_tol)
        if result.diverging:
            return AnnealedResult(
                value=math.inf,
                std_error=math.inf,
                n_env=n_env,
                diverged=True,
                value_excluding_leading=math.inf,
            )
        if not result.converged:
            raise NoConvergenceError(
                f"quenched series not converged within {max_terms} terms"
            )
        values.append(result.value)
        excluding.append(result.value - 1.0 / w.rates(0).lam)
    mean, se = _mean_se(values)
    mean_ex, _ = _mean_se(excluding)
    return AnnealedResult(
        value=mean,
        std_error=se,
        n_env=n_env,
        diverged=False,
        value_excluding_leading=mean_ex,
    )


class Regime(str, Enum):
    POSITIVE_SPEED = "PositiveSpeed"
    ZERO_SPEED = "ZeroSpeed"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class VelocityReport:
    """Predicted and measured long-run speed of the process."""

    regime: Regime
    speed: float | None
    es_estimate: float | None
    empirical_speed: float | None
    empirical_se: float | None
    verdict: Verdict
    gamma_estimate: LyapunovEstimate
    n_paths: int
    horizon: float

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "speed": self.speed,
            "es_estimate": self.es_estimate,
            "empirical_speed": self.empirical_speed,
            "empirical_se": self.empirical_se,
            "verdict": self.verdict.value,
            "gamma_estimate": self.gamma_estimate.to_dict(),
            "n_paths": self.n_paths,
            "horizon": self.horizon,
        }


def velocity(
    law: EnvironmentLaw,
    n_env: int = 100,
    horizon: float = 1000.0,
    n_paths: int = 200,
    seed: int = 0,
    lyapunov_steps: int = 20000,
    lyapunov_replicas: int = 4,
    burn_in: int = 1000,
    tolerance: float = 1e-3,
    max_terms: int = 10**4,
    rel_tol: float = 1e-10,
    threads: int = 1,
) -> VelocityReport:
    """Predict the long-run speed and measure it on simulated paths.

    Rightward-transient and recurrent laws get a prediction: reciprocal
    of the annealed mean passage time when finite, zero when it
    diverges.  Left-transient or inconclusive classifications yield
    NotApplicable with the measurement skipped.  Each measured path runs
    on a fresh environment, so the average is an annealed quantity.
    """
    est = lyapunov_top(
        law,
        steps=lyapunov_steps,
        replicas=lyapunov_replicas,
        burn_in=burn_in,
        seed=derive_seed(seed, 10),
        threads=threads,
    )
    verdict = classify_recurrence(est, tolerance).verdict
    if verdict not in (Verdict.TRANSIENT_RIGHT, Verdict.RECURRENT):
        return VelocityReport(
            regime=Regime.NOT_APPLICABLE,
            speed=None,
            es_estimate=None,
            empirical_speed=None,
            empirical_se=None,
            verdict=verdict,
            gamma_estimate=est,
            n_paths=0,
            horizon=horizon,
        )

    annealed = annealed_mean_passage_time(
        law, n_env=n_env, max_terms=max_terms, rel_tol=rel_tol, seed=derive_seed(seed, 11)
    )
    if annealed.diverged:
        regime = Regime.ZERO_SPEED
        speed = 0.0
        es = math.inf
    else:
        regime = Regime.POSITIVE_SPEED
        speed = 1.0 / annealed.value
        es = annealed.value

    def one_path(r: int) -> float:
        env_seed = derive_seed(seed, 12, r)
        w = window(law, env_seed, 0, 0)
        path = simulate_path(
            w,
            0,
            TimeHorizon(horizon),
            derive_seed(seed, 13, r),
            record_events=False,
        )
        return path.final_state / horizon

    speeds = _map_ordered(one_path, range(n_paths), threads)
    emp_mean, emp_se = _mean_se(speeds)
    return VelocityReport(
        regime=regime,
        speed=speed,
        es_estimate=es,
        empirical_speed=emp_mean,
        empirical_se=emp_se,
        verdict=verdict,
        gamma_estimate=est,
        n_paths=n_paths,
        horizon=horizon,
    )


@dataclass(frozen=True)
class DecompositionReport:
    """Direct passage times versus branching reconstructions, one window."""

    ks_stat: float
    ks_critical: float
    mean_direct: float
    se_direct: float
    mean_reconstructed: float
    se_reconstructed: float
    n_samples: int
    censored_direct: int
    censored_branching: int
    passed: bool
    #: raw samples, kept only on request; never serialized
    samples_direct: tuple[float, ...] | None = None
    samples_reconstructed: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "ks_stat": self.ks_stat,
            "ks_critical": self.ks_critical,
            "mean_direct": self.mean_direct,
            "se_direct": self.se_direct,
            "mean_reconstructed": self.mean_reconstructed,
            "se_reconstructed": self.se_reconstructed,
            "n_samples": self.n_samples,
            "censored_direct": self.censored_direct,
            "censored_branching": self.censored_branching,
            "pass": self.passed,
        }


def compare_decomposition(
    law: EnvironmentLaw,
    n_samples: int = 10**4,
    seed: int = 0,
    step_cap: int = DEFAULT_STEP_CAP,
    generation_cap: int = DEFAULT_GENERATION_CAP,
    threads: int = 1,
    keep_samples: bool = False,
) -> DecompositionReport:
    """Check the passage-time decomposition on one frozen environment.

    Samples the passage time to 1 directly and by branching
    reconstruction, then compares the two samples: the KS statistic must
    clear the asymptotic 1% critical value and the means must agree
    within three combined standard errors.
    """
    report = check_conditions(law)
    if not report.all_hold:
        raise ConditionsViolatedError(
            "law fails hypothesis checks: " + "; ".join(report.violations)
        )
    est = lyapunov_top(
        law, steps=20000, replicas=2, burn_in=1000, seed=derive_seed(seed, 20)
    )
    if classify_recurrence(est, 1e-3).verdict is Verdict.TRANSIENT_LEFT:
        raise ConditionsViolatedError(
            "law classifies as left-transient; the passage time to 1 "
            "has no finite comparison"
        )

    w = window(law, derive_seed(seed, 0), 0, 0)

    def direct(r: int) -> tuple[float, bool]:
        return first_passage_time(w, 1, derive_seed(seed, 1, r), step_cap=step_cap)

    def reconstructed(r: int) -> tuple[float, bool]:
        real = simulate_branching(
            w, generation_cap=generation_cap, seed=derive_seed(seed, 2, r)
        )
        if real.censored:
            return math.nan, True
        return reconstruct_passage_time(real, w, derive_seed(seed, 4, r)), False

    direct_results = _map_ordered(direct, range(n_samples), threads)
    recon_results = _map_ordered(reconstructed, range(n_samples), threads)

    direct_ok = [t for t, c in direct_results if not c]
    recon_ok = [t for t, c in recon_results if not c]
    cens_d = n_samples - len(direct_ok)
    cens_r = n_samples - len(recon_ok)
    if cens_d > 0.01 * n_samples or cens_r > 0.01 * n_samples:
        raise ExcessCensoringError(
            f"censoring exceeded 1%: direct {cens_d}/{n_samples}, "
            f"branching {cens_r}/{n_samples}"
        )

    ks = ks_two_sample(direct_ok, recon_ok)
    na, nb = len(direct_ok), len(recon_ok)
    critical = KS_CRIT_99 * math.sqrt((na + nb) / (na * nb))
    mean_d, se_d = _mean_se(direct_ok)
    mean_r, se_r = _mean_se(recon_ok)
    means_agree = abs(mean_d - mean_r) <= 3.0 * math.hypot(se_d, se_r)
    return DecompositionReport(
        ks_stat=ks,
        ks_critical=critical,
        mean_direct=mean_d,
        se_direct=se_d,
        mean_reconstructed=mean_r,
        se_reconstructed=se_r,
        n_samples=n_samples,
        censored_direct=cens_d,
        censored_branching=cens_r,
        passed=(ks < critical) and means_agree,
        samples_direct=tuple(direct_ok) if keep_samples else None,
        samples_reconstructed=tuple(recon_ok) if keep_samples else None,
    )


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic by sorted merge."""
    if len(a) == 0 or len(b) == 0:
        raise EmptySampleError("KS statistic needs two nonempty samples")
    xs = sorted(a)
    ys = sorted(b)
    na, nb = len(xs), len(ys)
    i = j = 0
    d = 0.0
    while i < na and j < nb:
        x = xs[i] if xs[i] <= ys[j] else ys[j]
        while i < na and xs[i] == x:
            i += 1
        while j < nb and ys[j] == x:
            j += 1
        gap = abs(i / na - j / nb)
        if gap > d:
            d = gap
    return d
