"""Single-intersection microsimulator.

Time advances in frames of one simulated second. Each approach carries one or
more incoming lanes; vehicles appear at the upstream end of a lane, drive
toward the stop line under a point-queue/headway rule and leave once they
have cleared the far side of the junction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

APPROACHES = ("N", "E", "S", "W")
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}
TURNS = ("left", "through", "right")

GREEN, YELLOW, ALL_RED = "green", "yellow", "all_red"

# per-lane generation bounds (low, high)
TRAFFIC_PRESETS = {
    "low": (0.01, 0.03),
    "normal": (0.03, 0.07),
    "high": (0.07, 0.12),
}


class ConfigurationError(ValueError):
    """Raised for physically or logically invalid simulator settings."""


class ContractViolation(RuntimeError):
    """Raised when an operation is called outside its precondition."""


@dataclass(frozen=True)
class SignalTimings:
    green_min: int = 10
    yellow: int = 3
    all_red: int = 2

    def __post_init__(self):
        if int(self.green_min) != self.green_min or self.green_min < 1:
            raise ConfigurationError(f"green_min must be an integer >= 1, got {self.green_min}")
        if int(self.yellow) != self.yellow or self.yellow < 0:
            raise ConfigurationError(f"yellow must be an integer >= 0, got {self.yellow}")
        if int(self.all_red) != self.all_red or self.all_red < 0:
            raise ConfigurationError(f"all_red must be an integer >= 0, got {self.all_red}")

    @property
    def transition(self) -> int:
        return self.yellow + self.all_red


@dataclass(frozen=True)
class Lane:
    approach: str
    index: int
    turns: tuple[str, ...]
    turn_weights: tuple[float, ...]

    @property
    def name(self) -> str:
        return f"{self.approach}{self.index}"


@dataclass(frozen=True)
class IntersectionSpec:
    """Static geometry and phase plan of an intersection.

    ``movement_groups[g]`` is the set of ``(approach, turn)`` movements
    released by action ``g``. Movements listed in ``permissive`` are released
    only when no opposing through/right vehicle is close to the junction.
    """

    lanes: tuple[Lane, ...]
    movement_groups: tuple[frozenset, ...]
    permissive: frozenset = frozenset()
    sensor_range: float = 40.0
    speed_limit: float = 40.0 / 3.6
    approach_length: float = 100.0
    exit_length: float = 20.0
    headway_gap: float = 7.0
    yield_gap: float = 15.0
    name: str = "custom"

    def __post_init__(self):
        if len(self.movement_groups) < 2:
            raise ConfigurationError("an intersection needs at least two movement groups")
        if self.sensor_range <= 0:
            raise ConfigurationError("sensor_range must be positive")
        if self.speed_limit <= 0:
            raise ConfigurationError("speed_limit must be positive")
        if self.approach_length < self.sensor_range:
            raise ConfigurationError("approach_length must cover the sensor range")
        if self.exit_length <= 0 or self.headway_gap <= 0:
            raise ConfigurationError("exit_length and headway_gap must be positive")
        for lane in self.lanes:
            if lane.approach not in APPROACHES:
                raise ConfigurationError(f"unknown approach {lane.approach!r}")
            if not lane.turns or len(lane.turns) != len(lane.turn_weights):
                raise ConfigurationError(f"lane {lane.name} needs one weight per turn")
            if any(t not in TURNS for t in lane.turns):
                raise ConfigurationError(f"lane {lane.name} has an unknown turn")
            served = {(lane.approach, t) for t in lane.turns}
            if not any(served & g for g in self.movement_groups):
                raise ConfigurationError(f"lane {lane.name} belongs to no movement group")

    @property
    def action_count(self) -> int:
        return len(self.movement_groups)

    @property
    def approaches(self) -> tuple[str, ...]:
        return tuple(a for a in APPROACHES if any(l.approach == a for l in self.lanes))

    @property
    def lanes_per_approach(self) -> int:
        return max(sum(1 for l in self.lanes if l.approach == a) for a in self.approaches)

    def lane_indices(self, approaches) -> list[int]:
        return [i for i, lane in enumerate(self.lanes) if lane.approach in approaches]


def _group(approaches, turns) -> frozenset:
    return frozenset((a, t) for a in approaches for t in turns)


def case1() -> IntersectionSpec:
    """Two phases, no left turns."""
    lanes = tuple(Lane(a, 0, ("through", "right"), (0.8, 0.2)) for a in APPROACHES)
    groups = (_group("NS", ("through", "right")), _group("EW", ("through", "right")))
    return IntersectionSpec(lanes=lanes, movement_groups=groups, name="case1")


def case2() -> IntersectionSpec:
    """Two phases, shared lanes with permissive left turns."""
    lanes = tuple(Lane(a, 0, TURNS, (0.2, 0.6, 0.2)) for a in APPROACHES)
    groups = (_group("NS", TURNS), _group("EW", TURNS))
    return IntersectionSpec(
        lanes=lanes, movement_groups=groups, permissive=_group("NSEW", ("left",)), name="case2"
    )


def case3() -> IntersectionSpec:
    """Four phases: protected lefts on dedicated lanes."""
    lanes = []
    for a in APPROACHES:
        lanes.append(Lane(a, 0, ("left",), (1.0,)))
        lanes.append(Lane(a, 1, ("through", "right"), (0.8, 0.2)))
    groups = (
        _group("NS", ("through", "right")),
        _group("NS", ("left",)),
        _group("EW", ("through", "right")),
        _group("EW", ("left",)),
    )
    return IntersectionSpec(lanes=tuple(lanes), movement_groups=groups, name="case3")


ARCHETYPES = {"case1": case1, "case2": case2, "case3": case3}


def archetype(name: str) -> IntersectionSpec:
    try:
        return ARCHETYPES[name]()
    except KeyError:
        raise ConfigurationError(f"unknown archetype {name!r}; expected one of {sorted(ARCHETYPES)}") from None


@dataclass(frozen=True)
class FlowModel:
    bounds: tuple[tuple[float, float], ...]
    episode_length: int = 120

    def __post_init__(self):
        for i, (lo, hi) in enumerate(self.bounds):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ConfigurationError(f"lane {i}: flow bounds must satisfy 0 <= l <= h <= 1, got ({lo}, {hi})")
        if self.episode_length < 1:
            raise ConfigurationError("episode_length must be >= 1")

    @classmethod
    def uniform(cls, spec: IntersectionSpec, bounds, episode_length: int = 120) -> "FlowModel":
        if isinstance(bounds, str):
            bounds = TRAFFIC_PRESETS[bounds]
        return cls(tuple(tuple(bounds) for _ in spec.lanes), episode_length)


def sample_episode_flow(flow: FlowModel, rng: np.random.Generator) -> np.ndarray:
    """Draw the per-lane generation probability for one episode."""
    lo = np.array([b[0] for b in flow.bounds], dtype=float)
    hi = np.array([b[1] for b in flow.bounds], dtype=float)
    if np.any(lo > hi):
        raise ConfigurationError("flow bounds with l > h")
    return lo + (hi - lo) * rng.random(len(lo))


@dataclass(slots=True)
class Vehicle:
    id: int
    lane: int
    movement: tuple[str, str]
    position: float
    speed: float
    spawn_frame: int
    wait_frames: int = 0


@dataclass(frozen=True)
class FrameReport:
    clock: int  # clock value after the frame
    phase: int
    stage: str
    counts: tuple[int, ...]  # vehicles within sensor range, per movement group
    waiting: tuple[int, ...]  # stopped vehicles within sensor range, per movement group
    waiting_total: int
    departures: int
    omega: int  # episode wait accumulated so far


@dataclass
class SimState:
    clock: int = 0
    current_phase: int = 0
    stage: str = GREEN
    stage_timer: int = 0
    pending_phase: int | None = None
    lanes: list[list[Vehicle]] = field(default_factory=list)
    departed_count: int = 0
    omega: int = 0
    spawned: int = 0
    suppressed: int = 0
    departed_total: int = 0
    next_id: int = 0

    @property
    def vehicles(self) -> list[Vehicle]:
        return [v for lane in self.lanes for v in lane]

    @property
    def in_system(self) -> int:
        return sum(len(lane) for lane in self.lanes)


@dataclass(frozen=True)
class ActionResult:
    green_frames: tuple[FrameReport, ...]
    transition_frames: tuple[FrameReport, ...]
    phase_changed: bool

    @property
    def frames_elapsed(self) -> int:
        return len(self.green_frames) + len(self.transition_frames)


@dataclass(frozen=True)
class Observation:
    frames: np.ndarray  # (Tg, |A|) integer counts
    phase_key: int

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.frames.ravel().astype(float), [float(self.phase_key)]])

    def normalized(self, count_scale: float = 20.0) -> np.ndarray:
        n_actions = self.frames.shape[1]
        return np.concatenate([self.frames.ravel() / count_scale, [self.phase_key / n_actions]])

    def __len__(self) -> int:
        return self.frames.size + 1


def observe(frames, action_count: int, green_min: int, phase: int) -> Observation:
    if len(frames) != green_min:
        raise ContractViolation(f"expected {green_min} frame reports, got {len(frames)}")
    counts = np.array([f.counts for f in frames], dtype=np.int64).reshape(green_min, action_count)
    return Observation(counts, int(phase))


class Simulator:
    """Stateful intersection. All randomness comes from ``rng``."""

    FRAME_LOG_HEADER = ("frame", "phase", "stage")

    def __init__(self, spec: IntersectionSpec, timings: SignalTimings, rng: np.random.Generator,
                 episode_length: int = 120, frame_log=None):
        self.spec = spec
        self.timings = timings
        self.rng = rng
        self.episode_length = episode_length
        self.state = SimState()
        self.pe = np.zeros(len(spec.lanes))
        self.wait_log: list[int] | None = None
        self._frame_log = None
        if frame_log is not None:
            self._frame_log = csv.writer(frame_log)
            n = spec.action_count
            self._frame_log.writerow(
                [*self.FRAME_LOG_HEADER, *(f"count_{g}" for g in range(n)), "departures", "omega"]
            )
        # movement -> groups containing it
        self._groups_of = {}
        for lane in spec.lanes:
            for t in lane.turns:
                m = (lane.approach, t)
                self._groups_of[m] = tuple(g for g, ms in enumerate(spec.movement_groups) if m in ms)
        self._cum_weights = [np.cumsum(lane.turn_weights) / sum(lane.turn_weights) for lane in spec.lanes]

    def reset(self, pe, phase: int = 0, log_waits: bool = False) -> None:
        pe = np.asarray(pe, dtype=float)
        if pe.shape != (len(self.spec.lanes),):
            raise ContractViolation("one generation probability per lane is required")
        self.pe = pe
        self.state = SimState(
            current_phase=phase, stage=GREEN, stage_timer=self.timings.green_min,
            lanes=[[] for _ in self.spec.lanes],
        )
        self.wait_log = [] if log_waits else None

    # -- generation ---------------------------------------------------------

    def spawn_step(self) -> list[Vehicle]:
        st = self.state
        if st.clock >= self.episode_length:
            return []
        hits = self.rng.random(len(self.pe)) < self.pe
        new = []
        entry = self.spec.approach_length
        for i in np.flatnonzero(hits):
            st.spawned += 1
            # drawn before the occupancy check so the random stream does not depend on the controller
            u = self.rng.random()
            lane = st.lanes[i]
            if lane and entry - lane[-1].position < self.spec.headway_gap:
                st.suppressed += 1
                continue
            spec_lane = self.spec.lanes[i]
            turn = spec_lane.turns[int(np.searchsorted(self._cum_weights[i], u, side="right"))]
            v = Vehicle(st.next_id, int(i), (spec_lane.approach, turn), entry, self.spec.speed_limit, st.clock)
            st.next_id += 1
            lane.append(v)
            new.append(v)
        return new

    # -- dynamics -----------------------------------------------------------

    def _released(self) -> frozenset:
        st = self.state
        if st.stage == ALL_RED:
            return frozenset()
        return self.spec.movement_groups[st.current_phase]

    def _opposing_busy(self, approach: str) -> bool:
        opp = OPPOSITE[approach]
        lo, hi = -self.spec.exit_length, self.spec.yield_gap
        for i, lane in enumerate(self.state.lanes):
            if self.spec.lanes[i].approach != opp:
                continue
            for v in lane:
                if v.movement[1] != "left" and lo < v.position <= hi:
                    return True
        return False

    def advance_frame(self) -> FrameReport:
        spec, st = self.spec, self.state
        released = self._released()
        blocked_lefts = {}
        departures = 0
        for lane in st.lanes:
            leader_prev = None
            survivors = []
            for v in lane:
                prev = v.position
                step = spec.speed_limit
                if leader_prev is not None:
                    step = min(step, max(0.0, prev - leader_prev - spec.headway_gap))
                if prev >= 0.0:
                    go = v.movement in released
                    if go and v.movement in spec.permissive:
                        a = v.movement[0]
                        if a not in blocked_lefts:
                            blocked_lefts[a] = self._opposing_busy(a)
                        go = not blocked_lefts[a]
                    if not go:
                        step = min(step, prev)
                v.speed = step
                v.position = prev - step
                leader_prev = prev
                if v.position <= -spec.exit_length:
                    departures += 1
                else:
                    survivors.append(v)
            lane[:] = survivors

        n_groups = spec.action_count
        counts = [0] * n_groups
        waiting = [0] * n_groups
        waiting_total = 0
        d = spec.sensor_range
        for lane in st.lanes:
            for v in lane:
                if 0.0 <= v.position <= d:
                    groups = self._groups_of[v.movement]
                    for g in groups:
                        counts[g] += 1
                    if v.speed == 0.0:
                        v.wait_frames += 1
                        waiting_total += 1
                        for g in groups:
                            waiting[g] += 1
        st.omega += waiting_total
        st.departed_count += departures
        st.departed_total += departures
        if self.wait_log is not None:
            self.wait_log.append(waiting_total)

        stage, phase = st.stage, st.current_phase
        st.clock += 1
        self._tick_stage()
        report = FrameReport(st.clock, phase, stage,
                             tuple(counts), tuple(waiting), waiting_total, departures, st.omega)
        if self._frame_log is not None:
            self._frame_log.writerow([report.clock, report.phase, report.stage, *report.counts,
                                      report.departures, report.omega])
        return report

    def _tick_stage(self) -> None:
        st, tm = self.state, self.timings
        if st.stage_timer > 0:
            st.stage_timer -= 1
        if st.stage_timer > 0 or st.stage == GREEN:
            return
        if st.stage == YELLOW:
            st.stage, st.stage_timer = ALL_RED, tm.all_red
            if tm.all_red == 0:
                self._enter_green()
        elif st.stage == ALL_RED:
            self._enter_green()

    def _enter_green(self) -> None:
        st = self.state
        st.current_phase = st.pending_phase
        st.pending_phase = None
        st.stage, st.stage_timer = GREEN, self.timings.green_min

    def frame(self) -> FrameReport:
        self.spawn_step()
        return self.advance_frame()

    # -- control ------------------------------------------------------------

    def run_green(self) -> list[FrameReport]:
        """Run one minimum-green window of the current phase."""
        st = self.state
        st.stage, st.stage_timer = GREEN, self.timings.green_min
        return [self.frame() for _ in range(self.timings.green_min)]

    def apply_action(self, action: int) -> ActionResult:
        spec, tm, st = self.spec, self.timings, self.state
        if not (0 <= int(action) < spec.action_count) or int(action) != action:
            raise ContractViolation(f"action {action!r} outside 0..{spec.action_count - 1}")
        action = int(action)
        st.departed_count = 0
        transition = []
        changed = action != st.current_phase
        if changed:
            st.pending_phase = action
            if tm.yellow > 0:
                st.stage, st.stage_timer = YELLOW, tm.yellow
            elif tm.all_red > 0:
                st.stage, st.stage_timer = ALL_RED, tm.all_red
            else:
                self._enter_green()
            for _ in range(tm.transition):
                transition.append(self.frame())
            if st.stage != GREEN:  # pragma: no cover - guarded by _tick_stage
                raise ContractViolation("transition did not end in green")
        green = self.run_green()
        return ActionResult(tuple(green), tuple(transition), changed)

    def observe(self, frames) -> Observation:
        return observe(frames, self.spec.action_count, self.timings.green_min, self.state.current_phase)

    def episode_wait(self) -> int:
        return self.state.omega

    @property
    def done(self) -> bool:
        return self.state.clock >= self.episode_length


def free_flow_frames(distance: float, speed: float) -> int:
    """Frames needed to cover ``distance`` at constant ``speed``."""
    return math.ceil(distance / speed)
