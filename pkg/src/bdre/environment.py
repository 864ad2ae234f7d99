"""Site-random environments: laws, realizations, and hypothesis checks.

An environment assigns to every integer site an up-rate and a vector of
down-rates (one per jump depth 1..L).  Sites are independent draws from a
finite-support law.  Realizations are seed-reproducible: the rates at
site ``i`` are a pure function of ``(law, seed, i)``, so a window can be
extended lazily in either direction without disturbing realized sites.
"""

from __future__ import annotations

import json
import math
import threading
from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import ConfigError
from ._rng import site_uniform

#: Hard bound on site indices; extension past this is a configuration error.
MAX_SITE_INDEX = 2**40


@dataclass(frozen=True)
class SiteRates:
    """Jump rates at one site: up-rate ``lam``, down-rates ``mu``.

    ``mu[l-1]`` is the rate of a downward jump of size ``l``; the jump
    bound L is ``len(mu)``.
    """

    lam: float
    mu: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        object.__setattr__(self, "lam", float(self.lam))
        if not self.mu:
            raise ConfigError("mu must have at least one entry")
        for value in (self.lam, *self.mu):
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"rates must be finite and >= 0, got {value!r}")

    @property
    def jump_bound(self) -> int:
        return len(self.mu)

    @property
    def total_rate(self) -> float:
        return self.lam + sum(self.mu)


@dataclass(frozen=True)
class LawAtom:
    weight: float
    rates: SiteRates


class EnvironmentLaw:
    """Finite-support law of the per-site rates.

    Finite support keeps the model hypotheses decidable by inspecting
    atoms; continuous laws are a documented extension point.
    """

    def __init__(self, L: int, atoms: list[tuple[float, SiteRates]] | list[LawAtom]):
        if L < 1:
            raise ConfigError(f"jump bound L must be >= 1, got {L}")
        normalized: list[LawAtom] = []
        for atom in atoms:
            if not isinstance(atom, LawAtom):
                atom = LawAtom(float(atom[0]), atom[1])
            normalized.append(atom)
        if not normalized:
            raise ConfigError("environment law needs at least one atom")
        total = 0.0
        for k, atom in enumerate(normalized):
            if not math.isfinite(atom.weight) or atom.weight < 0:
                raise ConfigError(f"atom {k}: weight must be finite and >= 0")
            if atom.rates.jump_bound != L:
                raise ConfigError(
                    f"atom {k}: mu has length {atom.rates.jump_bound}, expected L={L}"
                )
            total += atom.weight
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"atom weights sum to {total!r}, expected 1")
        # Store exactly normalized weights so downstream cumulative sums
        # are watertight regardless of how the config rounded them.
        self.L = int(L)
        self.atoms = tuple(
            LawAtom(atom.weight / total, atom.rates) for atom in normalized
        )
        cum: list[float] = []
        acc = 0.0
        for atom in self.atoms:
            acc += atom.weight
            cum.append(acc)
        cum[-1] = 1.0
        self._cum = cum

    def __repr__(self) -> str:
        return f"EnvironmentLaw(L={self.L}, atoms={len(self.atoms)})"

    def atom_index(self, seed: int, index: int) -> int:
        """Atom chosen at a site: counter-based, order-independent."""
        u = site_uniform(seed, index)
        return min(bisect_right(self._cum, u), len(self.atoms) - 1)

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentLaw":
        if not isinstance(data, dict):
            raise ConfigError("law must be an object")
        unknown = set(data) - {"L", "atoms"}
        if unknown:
            raise ConfigError(f"unknown law key: {sorted(unknown)[0]!r}")
        try:
            L = int(data["L"])
            raw_atoms = data["atoms"]
        except KeyError as exc:
            raise ConfigError(f"law is missing key {exc.args[0]!r}") from None
        if not isinstance(raw_atoms, list):
            raise ConfigError("law atoms must be a list")
        atoms = []
        for k, raw in enumerate(raw_atoms):
            if not isinstance(raw, dict):
                raise ConfigError(f"atom {k} must be an object")
            unknown = set(raw) - {"weight", "lambda", "mu"}
            if unknown:
                raise ConfigError(f"atom {k}: unknown key {sorted(unknown)[0]!r}")
            try:
                weight = float(raw["weight"])
                lam = float(raw["lambda"])
                mu = [float(m) for m in raw["mu"]]
            except KeyError as exc:
                raise ConfigError(f"atom {k} is missing key {exc.args[0]!r}") from None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"atom {k}: {exc}") from None
            atoms.append((weight, SiteRates(lam, tuple(mu))))
        return cls(L, atoms)

    @classmethod
    def from_json(cls, text: str) -> "EnvironmentLaw":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"law config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "atoms": [
                {"weight": a.weight, "lambda": a.rates.lam, "mu": list(a.rates.mu)}
                for a in self.atoms
            ],
        }


def sample_site(law: EnvironmentLaw, seed: int, index: int) -> SiteRates:
    """Rates realized at one site; pure in (law, seed, index)."""
    return law.atoms[law.atom_index(seed, index)].rates


@dataclass
class ConditionReport:
    """Outcome of the model-hypothesis checks on a law.

    ``c1``: every atom has positive total rate (no absorbing sites).
    ``c2``: the reciprocal total-rate series along any trajectory diverge;
    certified here through the sufficient condition that a finite-support
    law with ``c1`` has rates bounded above.
    ``c3``: the log-moments of the up and deepest-down jump probabilities
    are finite, which for finite support means every atom has a positive
    up-rate and a positive depth-L down-rate.
    """

    c1: bool
    c2: bool
    c3: bool
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return self.c1 and self.c2 and self.c3

    def to_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "violations": list(self.violations),
            "notes": list(self.notes),
        }


def check_conditions(law: EnvironmentLaw) -> ConditionReport:
    """Check the law against the model hypotheses, atom by atom."""
    violations: list[str] = []
    notes: list[str] = []

    c1 = True
    for k, atom in enumerate(law.atoms):
        if not atom.rates.total_rate > 0:
            c1 = False
            violations.append(f"C1: atom {k} has total rate 0")

    if c1:
        c2 = True
        bound = max(atom.rates.total_rate for atom in law.atoms)
        notes.append(
            "C2 certified via bounded rates: finite support with total rates "
            f"<= {bound:g} makes both reciprocal-rate series diverge a.s."
        )
    else:
        c2 = False
        violations.append("C2: not certified because C1 fails")

    c3 = True
    for k, atom in enumerate(law.atoms):
        if not atom.rates.lam > 0:
            c3 = False
            violations.append(f"C3: atom {k} has zero up-rate (log-moment diverges)")
        if not atom.rates.mu[-1] > 0:
            c3 = False
            violations.append(
                f"C3: atom {k} has zero depth-{law.L} down-rate (log-moment diverges)"
            )

    return ConditionReport(c1=c1, c2=c2, c3=c3, violations=violations, notes=notes)


class EnvironmentWindow:
    """A realized stretch of environment, lazily extendable both ways.

    Site values are pure functions of ``(law, seed, index)``, so extension
    never changes already-realized sites; a lock serializes only the
    bookkeeping, making concurrent reads and extensions safe.
    """

    def __init__(self, law: EnvironmentLaw, seed: int, lo: int, hi: int):
        if lo > hi:
            raise ConfigError(f"window bounds reversed: [{lo}, {hi}]")
        self.law = law
        self.seed = int(seed)
        self._sites: dict[int, SiteRates] = {}
        self._lock = threading.Lock()
        self.lo = lo
        self.hi = hi
        self.ensure(lo, hi)

    def ensure(self, lo: int, hi: int) -> None:
        """Extend the realized range to cover [lo, hi]."""
        if lo < -MAX_SITE_INDEX or hi > MAX_SITE_INDEX:
            raise ConfigError(
                f"window extension to [{lo}, {hi}] exceeds the ±2^40 site limit"
            )
        with self._lock:
            for i in range(min(lo, self.lo), max(hi, self.hi) + 1):
                if i not in self._sites:
                    self._sites[i] = sample_site(self.law, self.seed, i)
            self.lo = min(lo, self.lo)
            self.hi = max(hi, self.hi)

    def rates(self, index: int) -> SiteRates:
        """Rates at a site, extending the window if needed."""
        site = self._sites.get(index)
        if site is None:
            self.ensure(min(index, self.lo), max(index, self.hi))
            site = self._sites[index]
        return site

    @property
    def bounds(self) -> tuple[int, int]:
        return (self.lo, self.hi)


def window(law: EnvironmentLaw, seed: int, lo: int, hi: int) -> EnvironmentWindow:
    """Realize the environment over [lo, hi] under the given seed."""
    return EnvironmentWindow(law, seed, lo, hi)
