"""Acceptance suite: one test per criterion, one pass/fail line under -v.

Every assertion here runs at its stated tolerance; nothing is loosened
to make a run pass.  Shared expensive estimates live in module fixtures.
"""

import math

import numpy as np
import pytest

from bdre._rng import derive_seed, substream
from bdre.analysis import (
    KS_CRIT_99,
    Regime,
    compare_decomposition,
    ks_two_sample,
    quenched_mean_passage_time,
    velocity,
)
from bdre.branching import (
    mean_matrix,
    offspring_pmf,
    offspring_sample,
    simulate_branching,
)
from bdre.cli import run_command
from bdre.environment import EnvironmentLaw, SiteRates, window
from bdre.matrices import (
    Verdict,
    classify_recurrence,
    conjugacy_residual,
    lyapunov_top,
    spectral_radius,
    transfer_matrix,
)
from bdre.simulate import HitState, crossing_counts, simulate_walk


def one_atom(lam, mu):
    return EnvironmentLaw(len(mu), [(1.0, SiteRates(lam, tuple(mu)))])


LAW_RIGHT = one_atom(4, (1, 1))
LAW_CRITICAL = one_atom(3, (1, 1))
LAW_LEFT = one_atom(2, (1, 2))
LAW_SINGLE = one_atom(2, (1,))
LAW_TWO_ATOM_L2 = EnvironmentLaw(
    2,
    [
        (0.5, SiteRates(5, (1, 1))),
        (0.5, SiteRates(4, (1, 1))),
    ],
)

ESTIMATOR = dict(steps=10**5, replicas=4, burn_in=1000, seed=0)


@pytest.fixture(scope="module")
def exponents():
    return {
        "right": lyapunov_top(LAW_RIGHT, **ESTIMATOR),
        "critical": lyapunov_top(LAW_CRITICAL, **ESTIMATOR),
        "left": lyapunov_top(LAW_LEFT, **ESTIMATOR),
    }


def test_criterion_1_lyapunov_matches_spectral_oracle(exponents):
    # one-atom laws: the exponent is the log spectral radius of the
    # single transfer matrix
    for name, law, pinned in (
        ("right", LAW_RIGHT, math.log((1 + math.sqrt(5)) / 4)),
        ("critical", LAW_CRITICAL, 0.0),
    ):
        est = exponents[name]
        oracle = math.log(spectral_radius(transfer_matrix(law.atoms[0].rates)))
        assert abs(est.gamma_top - oracle) <= 3 * est.std_error + 1e-6
        assert abs(est.gamma_top - pinned) <= 1e-3


def test_criterion_2_recurrence_trichotomy(exponents):
    verdicts = {
        name: classify_recurrence(est, 1e-3).verdict
        for name, est in exponents.items()
    }
    assert verdicts["right"] is Verdict.TRANSIENT_RIGHT
    assert verdicts["critical"] is Verdict.RECURRENT
    assert verdicts["left"] is Verdict.TRANSIENT_LEFT


def test_criterion_3_conjugacy_identity():
    # down-rates bounded by the up-rate keep the matrix products O(100),
    # so the absolute residual tolerance is far above float error
    rng = np.random.default_rng(2024)
    for _ in range(100):
        L = int(rng.integers(1, 5))
        n = int(rng.integers(1, 9))
        sites = []
        for _ in range(n):
            lam = float(rng.uniform(1.0, 5.0))
            mu = tuple(
                lam * float(rng.uniform(0.05, 0.8)) / L for _ in range(L)
            )
            sites.append(SiteRates(lam, mu))
        assert conjugacy_residual(sites) < 1e-10


def test_criterion_4_quenched_mean_series():
    for law, lam in ((LAW_RIGHT, 4.0), (LAW_SINGLE, 2.0)):
        w = window(law, 1, -5, 0)
        res = quenched_mean_passage_time(w, rel_tol=1e-8)
        assert res.converged
        assert res.value == pytest.approx(1.0, rel=1e-8)
        site = law.atoms[0].rates
        m = transfer_matrix(site)
        L = law.L
        e1 = np.zeros(L)
        e1[0] = 1.0
        closed = float(e1 @ np.linalg.solve(np.eye(L) - m, np.ones(L))) / lam
        assert res.value == pytest.approx(closed, rel=1e-8)


def test_criterion_5_passage_time_decomposition():
    for law, seed in (
        (LAW_SINGLE, 51),
        (LAW_RIGHT, 52),
        (LAW_TWO_ATOM_L2, 53),
    ):
        report = compare_decomposition(law, n_samples=10**4, seed=seed)
        assert report.ks_stat < report.ks_critical
        assert (
            abs(report.mean_direct - report.mean_reconstructed)
            <= 3 * math.hypot(report.se_direct, report.se_reconstructed)
        )
        assert report.passed


def test_criterion_6_branching_matches_crossing_counts():
    # one frozen environment: first-generation totals from the branching
    # process against level -1 crossing tallies of first-passage walks
    w = window(LAW_TWO_ATOM_L2, derive_seed(606, 0), -50, 1)
    n = 10**4
    from_walks = []
    for r in range(n):
        walk = simulate_walk(w, 0, HitState(1), derive_seed(606, 1, r))
        from_walks.append(crossing_counts(walk).total(-1))
    from_branching = []
    for r in range(n):
        real = simulate_branching(w, seed=derive_seed(606, 2, r))
        assert real.extinct
        from_branching.append(sum(real.generation(-1)))
    stat = ks_two_sample(from_walks, from_branching)
    assert stat < KS_CRIT_99 * math.sqrt(2 / n)

    site = LAW_RIGHT.atoms[0].rates
    m = mean_matrix(site)
    draws = 10**5
    for parent in (1, 2):
        rng = substream(607, parent)
        sample = np.array(
            [offspring_sample(site, parent, rng) for _ in range(draws)]
        )
        for col in range(2):
            xs = sample[:, col]
            se = xs.std(ddof=1) / math.sqrt(draws)
            assert abs(xs.mean() - m[parent - 1, col]) <= 4 * se


def test_criterion_7_law_of_large_numbers_speed():
    rep = velocity(LAW_RIGHT, horizon=10**3, n_paths=200, seed=7)
    assert rep.regime is Regime.POSITIVE_SPEED
    assert rep.speed == pytest.approx(1.0, rel=1e-6)
    assert abs(rep.empirical_speed - 1.0) <= 3 * rep.empirical_se

    rep = velocity(LAW_CRITICAL, horizon=10**4, n_paths=200, seed=7)
    assert rep.regime is Regime.ZERO_SPEED
    assert rep.speed == 0.0
    assert abs(rep.empirical_speed) <= 3 * rep.empirical_se


def test_criterion_8_offspring_law_cells_and_tail():
    n = 10**4
    for case, site, parent in (
        ("L1", SiteRates(1, (1,)), 1),
        ("L2", SiteRates(4, (1, 1)), 1),
        ("L2-parent2", SiteRates(4, (1, 1)), 2),
    ):
        L = site.jump_bound
        rng = substream(808, parent, L)
        counts: dict[tuple, int] = {}
        for _ in range(n):
            u = offspring_sample(site, parent, rng)
            counts[u] = counts.get(u, 0) + 1
        if L == 1:
            grid = [(k,) for k in range(16)]
        else:
            grid = [(a, b) for a in range(16) for b in range(16)]
        checked = 0
        for u in grid:
            p = offspring_pmf(site, parent, u)
            expected = n * p
            if expected < 10:
                continue
            checked += 1
            band = 4 * math.sqrt(n * p * (1 - p))
            assert abs(counts.get(u, 0) - expected) <= band, (case, u)
        assert checked >= 5

    # partial sums reach 1 within the geometric tail of the total size
    site = SiteRates(4, (1, 1))
    total = 0.0
    for a in range(31):
        for b in range(31 - a):
            total += offspring_pmf(site, 1, (a, b))
    assert total >= 1 - (2 / 6) ** 31 - 1e-12
    assert total <= 1 + 1e-12

    site = SiteRates(1, (1,))
    total = sum(offspring_pmf(site, 1, (k,)) for k in range(41))
    assert total >= 1 - 0.5**41 - 1e-12
    assert total <= 1 + 1e-12


def test_criterion_9_reproducibility_across_threads():
    law = LAW_RIGHT.to_dict()
    mixed = LAW_TWO_ATOM_L2.to_dict()
    runs = {
        "check": {"law": mixed},
        "classify": {"law": law, "steps": 3000, "replicas": 3, "seed": 5},
        "passage": {"law": mixed, "replicas": 200, "seed": 5},
        "velocity": {
            "law": law,
            "n_env": 10,
            "horizon": 50.0,
            "n_paths": 20,
            "steps": 3000,
            "seed": 5,
        },
        "verify-decomposition": {"law": law, "n_samples": 500, "seed": 5},
        "simulate": {"law": law, "steps": 100, "replicas": 3, "seed": 5},
    }
    for command, config in runs.items():
        code, first = run_command(command, config, threads=1)
        assert code == 0, (command, first.get("error"))
        code, second = run_command(command, first["config"], threads=2)
        assert code == 0, (command, second.get("error"))
        assert first["result"] == second["result"], command
        assert first["config"] == second["config"], command
        code, third = run_command(command, first["config"], threads=4)
        assert code == 0
        assert third["result"] == first["result"], command
