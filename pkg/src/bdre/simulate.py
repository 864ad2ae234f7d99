"""Continuous-time simulation, the embedded walk, and crossing counts.

The process sits at a site for an exponential holding time with the
site's total rate, then jumps up one step or down up to L steps with
probabilities proportional to the individual rates.  The embedded walk
drops the clocks and keeps the jump chain.  Crossing counts tally, for a
walk stopped at its first visit of 1, the down-jumps from above each
negative level into each depth; they are the bridge to the branching
representation of the passage time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .environment import EnvironmentWindow
from .errors import (
    AbsorbedStateError,
    ConfigError,
    PathNotFirstPassageError,
    WindowOverflowError,
)
from ._rng import substream

DEFAULT_STEP_CAP = 10**7
DEFAULT_LEFT_CAP = 10**6

_BLOCK = 4096


@dataclass(frozen=True)
class HitState:
    """Stop on first arrival at the target state."""

    target: int


@dataclass(frozen=True)
class TimeHorizon:
    """Stop at a fixed time; the final state is the state then occupied."""

    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")


@dataclass(frozen=True)
class StepCap:
    """Stop after a fixed number of jumps."""

    max_steps: int

    def __post_init__(self):
        if self.max_steps < 0:
            raise ConfigError(f"step cap must be >= 0, got {self.max_steps}")


StopRule = HitState | TimeHorizon | StepCap


@dataclass(frozen=True)
class PathRecord:
    """A continuous-time trajectory: (time, new_state) per jump.

    ``events`` is empty when the path was generated without event
    recording; ``n_events`` always counts the jumps taken.  ``censored``
    is set when a guard cap (named in ``cap``) fired before the requested
    stop rule.
    """

    start_state: int
    events: tuple[tuple[float, int], ...]
    censored: bool
    final_state: int
    final_time: float
    n_events: int
    jump_bound: int
    cap: str | None = None

    @property
    def recorded(self) -> bool:
        return len(self.events) == self.n_events


@dataclass(frozen=True)
class DiscretePath:
    """The jump chain: successive states, differences +1 or -1..-L."""

    states: tuple[int, ...]
    jump_bound: int
    censored: bool = False

    def __post_init__(self):
        if not self.states:
            raise ConfigError("a discrete path needs at least its start state")
        L = self.jump_bound
        for a, b in zip(self.states, self.states[1:]):
            d = b - a
            if d != 1 and not (-L <= d <= -1):
                raise ConfigError(f"illegal step {a} -> {b} for jump bound {L}")

    @property
    def states_visited_left(self) -> int:
        """Distinct states strictly left of the start touched by the walk."""
        start = self.states[0]
        return len({s for s in self.states if s < start})


@dataclass(frozen=True)
class CrossingCounts:
    """Down-crossing tallies of a first-passage walk, by level and depth.

    ``counts[i][l-1]`` is the number of jumps from above level i landing
    at i-l+1, for i in [depth, -1]; the root generation at level 0 is the
    unit vector e_1 by convention.
    """

    jump_bound: int
    depth: int
    counts: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def root(self) -> tuple[int, ...]:
        return (1,) + (0,) * (self.jump_bound - 1)

    def at(self, i: int) -> tuple[int, ...]:
        if i == 0:
            return self.root
        return self.counts.get(i, (0,) * self.jump_bound)

    def total(self, i: int) -> int:
        return sum(self.at(i))


class _SiteCache:
    # Per-site jump thresholds, resolved once and reused every visit.
    def __init__(self, window: EnvironmentWindow, left_cap: int):
        self.window = window
        self.left_cap = left_cap
        self.cache: dict[int, tuple[float, float, list[tuple[float, int]]]] = {}

    def get(self, state: int) -> tuple[float, float, list[tuple[float, int]]]:
        entry = self.cache.get(state)
        if entry is not None:
            return entry
        if state < -self.left_cap:
            raise WindowOverflowError(
                f"path reached {state}, below the leftward growth cap "
                f"{-self.left_cap}"
            )
        rates = self.window.rates(state)
        q = rates.total_rate
        if not q > 0:
            raise AbsorbedStateError(f"total rate 0 at site {state}")
        channels: list[tuple[float, int]] = []
        acc = rates.lam
        if rates.lam > 0:
            channels.append((acc, 1))
        for l, mu in enumerate(rates.mu, start=1):
            if mu > 0:
                acc += mu
                channels.append((acc, -l))
        entry = (q, rates.lam, channels)
        self.cache[state] = entry
        return entry


def _pick(channels: list[tuple[float, int]], x: float) -> int:
    for threshold, delta in channels:
        if x < threshold:
            return delta
    return channels[-1][1]


def simulate_path(
    window: EnvironmentWindow,
    start: int,
    stop: StopRule,
    seed: int,
    step_cap: int = DEFAULT_STEP_CAP,
    left_cap: int = DEFAULT_LEFT_CAP,
    record_events: bool = True,
) -> PathRecord:
    """Generate one trajectory under the given stop rule.

    Holding times are exponential with the current site's total rate;
    jump directions follow the rate proportions.  ``step_cap`` guards
    hit-state and horizon runs against unbounded excursions and marks the
    result censored when it fires; with ``record_events`` off only the
    endpoint summary is kept, the draw sequence being identical either
    way.
    """
    if step_cap < 1:
        raise ConfigError(f"step_cap must be >= 1, got {step_cap}")
    rng = substream(seed)
    sites = _SiteCache(window, left_cap)
    events: list[tuple[float, int]] = []
    s = start
    t = 0.0
    comp = 0.0  # Kahan carry: 1e7-step sums must not drift
    steps = 0
    censored = False
    cap: str | None = None

    if isinstance(stop, HitState):
        target, horizon, max_steps = stop.target, None, None
    elif isinstance(stop, TimeHorizon):
        target, horizon, max_steps = None, stop.horizon, None
    elif isinstance(stop, StepCap):
        target, horizon, max_steps = None, None, stop.max_steps
    else:
        raise ConfigError(f"unknown stop rule {stop!r}")

    u_block: list[float] = []
    e_block: list[float] = []
    u_at = e_at = 0

    while True:
        if target is not None and s == target:
            break
        if max_steps is not None and steps >= max_steps:
            break
        if max_steps is None and steps >= step_cap:
            censored = True
            cap = "step_cap"
            break
        q, lam, channels = sites.get(s)
        if e_at >= len(e_block):
            e_block = rng.standard_exponential(_BLOCK).tolist()
            e_at = 0
        holding = e_block[e_at] / q
        e_at += 1
        # Kahan update of t += holding.
        y = holding - comp
        t_next = t + y
        if horizon is not None and t_next > horizon:
            t = horizon
            break
        comp = (t_next - t) - y
        t = t_next
        if u_at >= len(u_block):
            u_block = rng.random(_BLOCK).tolist()
            u_at = 0
        x = u_block[u_at] * q
        u_at += 1
        s += 1 if x < lam else _pick(channels, x)
        steps += 1
        if record_events:
            events.append((t, s))

    return PathRecord(
        start_state=start,
        events=tuple(events),
        censored=censored,
        final_state=s,
        final_time=t,
        n_events=steps,
        jump_bound=window.law.L,
        cap=cap,
    )


def first_passage_time(
    window: EnvironmentWindow,
    n: int,
    seed: int,
    step_cap: int = DEFAULT_STEP_CAP,
) -> tuple[float, bool]:
    """Time of first arrival at n starting from 0; censored at step_cap."""
    if n < 1:
        raise ConfigError(f"passage target must be >= 1, got {n}")
    path = simulate_path(
        window, 0, HitState(n), seed, step_cap=step_cap, record_events=False
    )
    return path.final_time, path.censored


def embedded_chain(path: PathRecord) -> DiscretePath:
    """State sequence at the jump times, prepended with the start state."""
    if not path.recorded:
        raise ConfigError("path was simulated without event recording")
    states = (path.start_state,) + tuple(s for _, s in path.events)
    return DiscretePath(states=states, jump_bound=path.jump_bound, censored=path.censored)


def simulate_walk(
    window: EnvironmentWindow,
    start: int,
    stop: StopRule,
    seed: int,
    step_cap: int = DEFAULT_STEP_CAP,
    left_cap: int = DEFAULT_LEFT_CAP,
) -> DiscretePath:
    """Discrete jump chain simulated directly, without clocks.

    Distributionally identical to taking the embedded chain of
    :func:`simulate_path` under the same stop rule.
    """
    if isinstance(stop, TimeHorizon):
        raise ConfigError("a clockless walk cannot stop at a time horizon")
    if step_cap < 1:
        raise ConfigError(f"step_cap must be >= 1, got {step_cap}")
    rng = substream(seed)
    sites = _SiteCache(window, left_cap)
    states = [start]
    s = start
    steps = 0
    censored = False
    if isinstance(stop, HitState):
        target, max_steps = stop.target, None
    else:
        target, max_steps = None, stop.max_steps

    u_block: list[float] = []
    u_at = 0
    while True:
        if target is not None and s == target:
            break
        if max_steps is not None and steps >= max_steps:
            break
        if max_steps is None and steps >= step_cap:
            censored = True
            break
        q, lam, channels = sites.get(s)
        if u_at >= len(u_block):
            u_block = rng.random(_BLOCK).tolist()
            u_at = 0
        x = u_block[u_at] * q
        u_at += 1
        s += 1 if x < lam else _pick(channels, x)
        steps += 1
        states.append(s)

    return DiscretePath(states=tuple(states), jump_bound=window.law.L, censored=censored)


def crossing_counts(path: DiscretePath, jump_bound: int | None = None) -> CrossingCounts:
    """Tally the down-crossings of a first-passage walk.

    A jump from a to b = a - j crosses levels b, b+1, ..., a-1; the
    crossing of level i lands a depth of i - b + 1 below it.  Only
    negative levels are tallied; the level-0 root is e_1 by convention.
    """
    states = path.states
    if states[0] != 0:
        raise PathNotFirstPassageError(f"path starts at {states[0]}, expected 0")
    if states[-1] != 1:
        raise PathNotFirstPassageError(f"path ends at {states[-1]}, expected 1")
    if 1 in states[:-1]:
        raise PathNotFirstPassageError("path visits 1 before its final step")
    L = jump_bound if jump_bound is not None else path.jump_bound
    depth = min(states)
    counts = {i: [0] * L for i in range(depth, 0)}
    for a, b in zip(states, states[1:]):
        j = a - b
        if j < 1:
            continue
        for l in range(1, j + 1):
            i = b + l - 1
            if i <= -1:
                counts[i][l - 1] += 1
    return CrossingCounts(
        jump_bound=L,
        depth=depth,
        counts={i: tuple(v) for i, v in counts.items()},
    )
