"""Non-learning controllers: fixed-time cycling, self-organizing lights, uniform random."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .sim import FlowModel, IntersectionSpec, SignalTimings


@dataclass(frozen=True)
class FixedTimePlan:
    """Ordered ``(phase, green frames)`` entries; clearance frames sit between consecutive entries."""

    entries: tuple[tuple[int, int], ...]
    transition: int = 5  # yellow + all-red frames

    def validate(self, action_count: int, green_min: int):
        if not self.entries:
            raise ValueError("a fixed-time plan needs at least one entry")
        for phase, dur in self.entries:
            if not 0 <= phase < action_count:
                raise ValueError(f"plan phase {phase} out of range")
            if dur < green_min:
                raise ValueError(f"plan green {dur} shorter than the minimum green {green_min}")
        if {p for p, _ in self.entries} != set(range(action_count)):
            raise ValueError("a plan must serve every phase at least once per cycle")

    def _gap(self, k: int) -> int:
        nxt = self.entries[(k + 1) % len(self.entries)][0]
        return self.transition if nxt != self.entries[k][0] else 0

    @property
    def cycle_length(self) -> int:
        return sum(d + self._gap(k) for k, (_, d) in enumerate(self.entries))


def ft_next_action(plan: FixedTimePlan, clock: int) -> int:
    """Phase to serve at ``clock``; during a clearance interval this is the phase being cleared into."""
    t = clock % plan.cycle_length
    n = len(plan.entries)
    for k, (phase, dur) in enumerate(plan.entries):
        if t < dur:
            return phase
        t -= dur
        gap = plan._gap(k)
        if t < gap:
            return plan.entries[(k + 1) % n][0]
        t -= gap
    return plan.entries[0][0]  # pragma: no cover


def default_ft_plan(spec: IntersectionSpec, flow: FlowModel, timings: SignalTimings,
                    cycle_green: int | None = None) -> FixedTimePlan:
    """Greens proportional to each phase's mean arrival rate, rounded to whole minimum-green windows."""
    tg = timings.green_min
    n = spec.action_count
    cycle_green = cycle_green or 3 * tg * n
    demand = np.zeros(n)
    for lane, (lo, hi) in zip(spec.lanes, flow.bounds):
        for g, group in enumerate(spec.movement_groups):
            if any((lane.approach, t) in group for t in lane.turns):
                demand[g] += 0.5 * (lo + hi)
    share = demand / demand.sum() if demand.sum() > 0 else np.full(n, 1.0 / n)
    windows = np.maximum(1, np.round(share * cycle_green / tg)).astype(int)
    return FixedTimePlan(tuple((g, int(w) * tg) for g, w in enumerate(windows)), timings.transition)


def ft_plan_grid(action_count: int, timings: SignalTimings, windows=(1, 2, 3, 4)):
    """Every plan serving phases in order with greens drawn from ``windows`` x Tg."""
    tg = timings.green_min
    for combo in product(windows, repeat=action_count):
        yield FixedTimePlan(tuple((g, w * tg) for g, w in enumerate(combo)), timings.transition)


@dataclass(frozen=True)
class SotlParams:
    threshold: int = 5
    min_hold: int = 10

    def validate(self, green_min: int):
        if self.threshold < 1:
            raise ValueError("SOTL threshold must be >= 1")
        if self.min_hold < green_min:
            raise ValueError("SOTL hold must be at least the minimum green")


def sotl_next_action(queues, current_phase: int, params: SotlParams, held: int | None = None) -> int:
    """Switch to the most congested red group once its queue exceeds the threshold."""
    if held is not None and held < params.min_hold:
        return current_phase
    best, best_q = current_phase, params.threshold
    for g, q in enumerate(queues):
        if g != current_phase and q > best_q:
            best, best_q = g, q
    return best


class FixedTimeController:
    name = "ft"

    def __init__(self, plan: FixedTimePlan):
        self.plan = plan

    def act(self, env, obs) -> int:
        return ft_next_action(self.plan, env.clock)


class SotlController:
    name = "sotl"

    def __init__(self, params: SotlParams):
        self.params = params

    def act(self, env, obs) -> int:
        return sotl_next_action(env.last_frame.waiting, env.phase, self.params, env.green_elapsed)


class RandomController:
    name = "random"

    def __init__(self, action_count: int, rng: np.random.Generator):
        self.action_count = action_count
        self.rng = rng

    def act(self, env, obs) -> int:
        return int(self.rng.integers(self.action_count))
