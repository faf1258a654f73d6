"""Action-based, episodic and combined rewards."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RewardParams:
    p1: float = 0.002
    p2: float = 0.01
    p3: float = 0.1
    a: float = 3.5
    b: float = -0.5
    eta: float = 0.007
    # Negative so the high-to-low transition sits at a positive total wait.
    zeta: float = -1000.0
    # Charge p2 only on windows that follow a phase change.
    p2_gate_on_phase_change: bool = False

    def __post_init__(self):
        for name in ("p1", "p2", "p3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.eta == 0:
            raise ValueError("eta must be non-zero")


@dataclass(frozen=True)
class ActionWindow:
    """Per-frame waiting counts for frames t_a .. t_a + Tg (inclusive)."""

    waiting_counts: tuple[int, ...]
    phase_changed: bool

    @property
    def any_waiting(self) -> tuple[bool, ...]:
        return tuple(c > 0 for c in self.waiting_counts)


def action_reward(window: ActionWindow, params: RewardParams) -> float:
    charge_idle = window.phase_changed or not params.p2_gate_on_phase_change
    total = 0.0
    for count in window.waiting_counts:
        total += params.p1 * count
        if count == 0 and charge_idle:
            total += params.p2
    if window.phase_changed:
        total += params.p3
    return total


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def episodic_reward(omega: float, params: RewardParams) -> float:
    return params.a * sigmoid(params.eta * (omega + params.zeta)) + params.b


def total_reward(r_a: float, r_e: float, terminal: bool) -> float:
    return -(r_a + (r_e if terminal else 0.0))
