"""Structural matrices, the top Lyapunov exponent, and the recurrence test.

The transfer matrix of a site encodes its down/up rate ratios; products
of transfer matrices along the environment govern how likely deep
leftward excursions are, and the sign of their top Lyapunov exponent
decides transience versus recurrence.  The companion matrices and the
cumulative-sum conjugacy give an exact numerical regression check on
that correspondence.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .environment import EnvironmentLaw, SiteRates, check_conditions
from .errors import (
    ConditionsViolatedError,
    ConfigError,
    NoConvergenceError,
    NumericalUnderflowError,
    ZeroLambdaError,
    ZeroMuLError,
)
from ._rng import substream


def transfer_matrix(site: SiteRates) -> np.ndarray:
    """L x L transfer matrix of one site.

    Row 1 holds the down/up rate ratios ``mu[l]/lam``; row k (k >= 2) is
    row 1 plus a unit in column k-1.  Requires a positive up-rate.
    """
    if not site.lam > 0:
        raise ZeroLambdaError("transfer matrix undefined for zero up-rate")
    L = site.jump_bound
    ratios = np.array(site.mu, dtype=float) / site.lam
    m = np.tile(ratios, (L, 1))
    for k in range(1, L):
        m[k, k - 1] += 1.0
    return m


def companion_matrix(site: SiteRates) -> np.ndarray:
    """Companion form of the site recurrence; inverse of the hitting form."""
    b = _companion_coefficients(site)
    L = site.jump_bound
    m = np.zeros((L, L))
    for k in range(L - 1):
        m[k, k + 1] = 1.0
    m[L - 1, 0] = b[0]
    m[L - 1, 1:] = -b[1:]
    return m


def companion_inverse(site: SiteRates) -> np.ndarray:
    """Explicit inverse of :func:`companion_matrix`."""
    if not site.lam > 0:
        raise ZeroLambdaError("companion inverse undefined for zero up-rate")
    if not site.mu[-1] > 0:
        raise ZeroMuLError("companion inverse undefined for zero deepest down-rate")
    L = site.jump_bound
    mu = site.mu
    a = [sum(mu[k:]) / site.lam for k in range(L)]
    m = np.zeros((L, L))
    m[0, :] = a
    for k in range(1, L):
        m[k, k - 1] = 1.0
    return m


def _companion_coefficients(site: SiteRates) -> np.ndarray:
    if not site.lam > 0:
        raise ZeroLambdaError("companion matrix undefined for zero up-rate")
    mu_L = site.mu[-1]
    if not mu_L > 0:
        raise ZeroMuLError("companion matrix undefined for zero deepest down-rate")
    L = site.jump_bound
    b = np.empty(L)
    b[0] = site.lam / mu_L
    for k in range(2, L + 1):
        b[k - 1] = sum(site.mu[k - 2 :]) / mu_L
    return b


def cumulative_matrix(L: int) -> np.ndarray:
    """Lower-triangular all-ones matrix (prefix-sum operator)."""
    return np.tril(np.ones((L, L)))


def conjugacy_residual(sites: list[SiteRates]) -> float:
    """Max-norm gap of the companion/transfer conjugacy identity.

    The ordered product of companion inverses equals the prefix-sum
    conjugation of the ordered transfer-matrix product; the identity is
    exact, so the residual measures only floating-point error.
    """
    if not sites:
        raise ConfigError("conjugacy residual needs at least one site")
    L = sites[0].jump_bound
    lam = cumulative_matrix(L)
    lam_inv = np.linalg.inv(lam)
    prod_inv = np.eye(L)
    prod_transfer = np.eye(L)
    for site in sites:
        prod_inv = prod_inv @ companion_inverse(site)
        prod_transfer = prod_transfer @ transfer_matrix(site)
    return float(np.max(np.abs(prod_inv - lam_inv @ prod_transfer @ lam)))


def spectral_radius(m: np.ndarray, rel_tol: float = 1e-12, max_iter: int = 10**5) -> float:
    """Dominant eigenvalue of a primitive nonnegative matrix.

    Power iteration with 1-norm renormalization and a residual stopping
    test; raises :class:`NoConvergenceError` past the iteration budget.
    """
    m = np.asarray(m, dtype=float)
    L = m.shape[0]
    v = np.full(L, 1.0 / L)
    estimate = 0.0
    for _ in range(max_iter):
        w = v @ m
        norm = w.sum()
        if norm <= 0:
            raise NoConvergenceError("power iteration collapsed to zero")
        estimate = norm
        v_new = w / norm
        residual = float(np.abs(v_new @ m - estimate * v_new).sum())
        v = v_new
        if residual <= rel_tol * estimate:
            return float(estimate)
    raise NoConvergenceError(f"power iteration did not converge in {max_iter} steps")


@dataclass(frozen=True)
class LyapunovEstimate:
    """Monte Carlo estimate of the top Lyapunov exponent (nats/matrix)."""

    gamma_top: float
    std_error: float
    steps_per_replica: int
    replicas: int
    burn_in: int
    replica_gammas: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "gamma_top": self.gamma_top,
            "std_error": self.std_error,
            "steps_per_replica": self.steps_per_replica,
            "replicas": self.replicas,
            "burn_in": self.burn_in,
            "replica_gammas": list(self.replica_gammas),
        }


def _replica_gamma(
    law: EnvironmentLaw, steps: int, burn_in: int, seed: int, replica: int
) -> float:
    rng = substream(seed, 1, replica)
    transfers = [transfer_matrix(atom.rates) for atom in law.atoms]
    cum = np.cumsum([atom.weight for atom in law.atoms])
    last = len(transfers) - 1
    L = law.L
    v = np.full(L, 1.0 / L)
    logs: list[float] = []
    block = 4096
    done = 0
    while done < steps:
        n = min(block, steps - done)
        draws = rng.random(n)
        indices = np.searchsorted(cum, draws, side="right")
        for j in range(n):
            v = v @ transfers[min(int(indices[j]), last)]
            norm = v.sum()
            if norm <= 0 or not math.isfinite(norm):
                raise NumericalUnderflowError(
                    "renormalization factor vanished during vector iteration"
                )
            v /= norm
            if done + j >= burn_in:
                logs.append(math.log(norm))
        done += n
    return math.fsum(logs) / len(logs)


def lyapunov_top(
    law: EnvironmentLaw,
    steps: int,
    replicas: int,
    burn_in: int = 1000,
    seed: int = 0,
    threads: int = 1,
) -> LyapunovEstimate:
    """Estimate the top Lyapunov exponent of the transfer-matrix products.

    Each replica iterates a strictly positive row vector through fresh
    i.i.d. transfer matrices, renormalizing to unit 1-norm every step and
    averaging the post-burn-in log factors.  Replicas use derived streams
    and are combined in index order, so the result is independent of the
    thread count.
    """
    report = check_conditions(law)
    if not report.all_hold:
        raise ConditionsViolatedError(
            "law fails hypothesis checks: " + "; ".join(report.violations)
        )
    if steps < law.L:
        raise ConfigError(f"steps must be >= L={law.L}, got {steps}")
    if replicas < 1:
        raise ConfigError(f"replicas must be >= 1, got {replicas}")
    if not 0 <= burn_in < steps:
        raise ConfigError(f"burn_in must lie in [0, steps), got {burn_in}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            gammas = list(
                pool.map(
                    lambda r: _replica_gamma(law, steps, burn_in, seed, r),
                    range(replicas),
                )
            )
    else:
        gammas = [_replica_gamma(law, steps, burn_in, seed, r) for r in range(replicas)]

    mean = math.fsum(gammas) / replicas
    if replicas > 1:
        var = math.fsum((g - mean) ** 2 for g in gammas) / (replicas - 1)
        std_error = math.sqrt(var / replicas)
    else:
        std_error = 0.0
    return LyapunovEstimate(
        gamma_top=mean,
        std_error=std_error,
        steps_per_replica=steps,
        replicas=replicas,
        burn_in=burn_in,
        replica_gammas=tuple(gammas),
    )


class Verdict(str, Enum):
    TRANSIENT_RIGHT = "TransientRight"
    RECURRENT = "Recurrent"
    TRANSIENT_LEFT = "TransientLeft"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class RecurrenceVerdict:
    verdict: Verdict
    gamma_estimate: LyapunovEstimate
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "gamma_estimate": self.gamma_estimate.to_dict(),
            "tolerance": self.tolerance,
        }


def classify_recurrence(est: LyapunovEstimate, tolerance: float) -> RecurrenceVerdict:
    """Classify long-run behaviour from the exponent estimate.

    The sign of the exponent is decided only when the estimate clears the
    wider of the user tolerance and three standard errors; a vanishing
    exponent within tolerance reads as recurrent, anything else is
    inconclusive.
    """
    if not tolerance > 0:
        raise ConfigError(f"tolerance must be > 0, got {tolerance}")
    band = max(tolerance, 3.0 * est.std_error)
    if est.gamma_top + band < 0:
        verdict = Verdict.TRANSIENT_RIGHT
    elif est.gamma_top - band > 0:
        verdict = Verdict.TRANSIENT_LEFT
    elif abs(est.gamma_top) <= tolerance and 3.0 * est.std_error <= tolerance:
        verdict = Verdict.RECURRENT
    else:
        verdict = Verdict.INCONCLUSIVE
    return RecurrenceVerdict(verdict=verdict, gamma_estimate=est, tolerance=tolerance)
