"""The multitype branching view of a first passage and its clock sum.

Individuals of type l at level i are down-crossings of i landing l-1
below it.  Each crossing of i spawns the crossings of i-1 that occur
during the walk's excursion below i, which makes the level-indexed
family a branching process whose offspring law at a site is read off the
site's jump probabilities: down-jump types accumulate until the first
up-jump, and a parent of type l >= 2 contributes one type-(l-1) child
deterministically because its jump already crosses the next level down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import EnvironmentWindow, SiteRates
from .errors import CensoredRealizationError, ConfigError, ZeroLambdaError
from .matrices import transfer_matrix
from ._rng import substream

DEFAULT_GENERATION_CAP = 10**4
DEFAULT_POPULATION_CAP = 10**6


@dataclass(frozen=True)
class OffspringLaw:
    """Category probabilities of one site: down depths 1..L, then up."""

    site: SiteRates
    p_down: tuple[float, ...]
    p_up: float

    @classmethod
    def from_site(cls, site: SiteRates) -> "OffspringLaw":
        q = site.total_rate
        if not q > 0:
            raise ConfigError("offspring law undefined for total rate 0")
        if not site.lam > 0:
            raise ZeroLambdaError(
                "offspring sampling would never terminate with zero up-rate"
            )
        p_down = tuple(m / q for m in site.mu)
        return cls(site=site, p_down=p_down, p_up=site.lam / q)


def offspring_sample(
    site: SiteRates, parent_type: int, rng: np.random.Generator
) -> tuple[int, ...]:
    """One offspring vector: category draws until the first up-draw.

    The accumulated down-type counts form the random part; a parent of
    type l >= 2 deterministically adds one child of type l-1 on top.
    """
    law = OffspringLaw.from_site(site)
    L = site.jump_bound
    if not 1 <= parent_type <= L:
        raise ConfigError(f"parent type must be in 1..{L}, got {parent_type}")
    q = site.total_rate
    lam = site.lam
    mu = site.mu
    counts = [0] * L
    while True:
        x = rng.random() * q
        if x < lam:
            break
        acc = lam
        chosen = L - 1
        for l in range(L):
            acc += mu[l]
            if x < acc:
                chosen = l
                break
        counts[chosen] += 1
    if parent_type >= 2:
        counts[parent_type - 2] += 1
    return tuple(counts)


def offspring_pmf(site: SiteRates, parent_type: int, u: tuple[int, ...]) -> float:
    """Exact offspring probability of the count vector u.

    Multinomial-geometric form: the number of down-draw orderings times
    the category probabilities times the terminating up-probability.
    Unreachable vectors get probability 0.
    """
    law = OffspringLaw.from_site(site)
    L = site.jump_bound
    if not 1 <= parent_type <= L:
        raise ConfigError(f"parent type must be in 1..{L}, got {parent_type}")
    if len(u) != L:
        raise ConfigError(f"count vector has length {len(u)}, expected {L}")
    counts = list(u)
    for c in counts:
        if c != int(c) or c < 0:
            raise ConfigError(f"counts must be nonnegative integers, got {u}")
    if parent_type >= 2:
        counts[parent_type - 2] -= 1
        if counts[parent_type - 2] < 0:
            return 0.0
    total = sum(counts)
    log_p = math.lgamma(total + 1) + math.log(law.p_up)
    for c, p in zip(counts, law.p_down):
        if c > 0:
            if p == 0.0:
                return 0.0
            log_p += c * math.log(p) - math.lgamma(c + 1)
    return math.exp(log_p)


def mean_matrix(site: SiteRates) -> np.ndarray:
    """Expected offspring counts by parent type; equals the transfer matrix.

    Row l is the mean offspring vector of a type-l parent: the random
    part contributes the down/up rate ratios, the deterministic child of
    a type-(l >= 2) parent adds the unit at l-1.
    """
    return transfer_matrix(site)


@dataclass(frozen=True)
class BranchingRealization:
    """Generations of the level-indexed branching process.

    ``generations[g]`` is the type-count vector at level -g, starting
    from the root e_1 at level 0 and ending with the first all-zero
    generation (extinction) or at a cap (censored).
    """

    generations: tuple[tuple[int, ...], ...]
    censored: bool
    cap: str | None = None

    @property
    def extinct(self) -> bool:
        return not self.censored

    @property
    def totals(self) -> tuple[int, ...]:
        return tuple(sum(g) for g in self.generations)

    def generation(self, i: int) -> tuple[int, ...]:
        """Type counts at level i <= 0; zero below the realized depth."""
        g = -i
        if g < 0:
            raise ConfigError(f"levels are <= 0, got {i}")
        if g < len(self.generations):
            return self.generations[g]
        L = len(self.generations[0])
        return (0,) * L


def simulate_branching(
    window: EnvironmentWindow,
    generation_cap: int = DEFAULT_GENERATION_CAP,
    seed: int = 0,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> BranchingRealization:
    """Run the branching process from the root e_1 down the environment.

    The generation at level i reproduces with the offspring law of site
    i, populating level i-1.  Stops at extinction, or censors at the
    generation or population cap.
    """
    if generation_cap < 1:
        raise ConfigError(f"generation cap must be >= 1, got {generation_cap}")
    rng = substream(seed)
    L = window.law.L
    root = (1,) + (0,) * (L - 1)
    generations: list[tuple[int, ...]] = [root]
    level = 0
    censored = False
    cap: str | None = None
    current = root
    while any(current):
        if len(generations) > generation_cap:
            censored = True
            cap = "generation_cap"
            break
        site = window.rates(level)
        nxt = [0] * L
        for parent_type in range(1, L + 1):
            for _ in range(current[parent_type - 1]):
                child = offspring_sample(site, parent_type, rng)
                for k in range(L):
                    nxt[k] += child[k]
        current = tuple(nxt)
        generations.append(current)
        level -= 1
        if sum(current) > population_cap:
            censored = True
            cap = "population_cap"
            break
    return BranchingRealization(
        generations=tuple(generations), censored=censored, cap=cap
    )


def reconstruct_passage_time(
    realization: BranchingRealization,
    window: EnvironmentWindow,
    seed: int,
) -> float:
    """Assemble a passage time from a realization plus fresh clocks.

    One clock at the root's site, then per level i <= -1 one clock at
    site i per type-1 individual and one clock at site i+1 per individual
    of any type, all exponential with the site's total rate and
    independent given the realization.
    """
    if realization.censored:
        raise CensoredRealizationError(
            "cannot reconstruct a passage time from a censored realization"
        )
    rng = substream(seed)
    total = rng.standard_exponential() / window.rates(0).total_rate
    parts = [total]
    for g in range(1, len(realization.generations)):
        gen = realization.generations[g]
        i = -g
        n_type1 = gen[0]
        n_all = sum(gen)
        if n_type1 > 0:
            q_i = window.rates(i).total_rate
            parts.append(float(rng.standard_exponential(n_type1).sum()) / q_i)
        if n_all > 0:
            q_up = window.rates(i + 1).total_rate
            parts.append(float(rng.standard_exponential(n_all).sum()) / q_up)
    return math.fsum(parts)
