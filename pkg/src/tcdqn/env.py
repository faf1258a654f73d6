"""Episode wrapper: simulator + reward, one decision per green window."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reward import ActionWindow, RewardParams, action_reward, episodic_reward, total_reward
from .sim import (TRAFFIC_PRESETS, ConfigurationError, FlowModel, FrameReport, IntersectionSpec,
                  Observation, SignalTimings, Simulator, sample_episode_flow)

SCENARIOS = (1, 2, 3)


def scenario_flow(spec: IntersectionSpec, scenario: int, episode_length: int,
                  heavy: str = "high", light: str = "low", even: str = "normal") -> FlowModel:
    """Test-scenario flows: 1 = E-W heavy, 2 = N-S heavy, 3 = even traffic everywhere."""
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    bounds = []
    for lane in spec.lanes:
        if scenario == 3:
            preset = even
        elif scenario == 1:
            preset = heavy if lane.approach in "EW" else light
        else:
            preset = heavy if lane.approach in "NS" else light
        bounds.append(TRAFFIC_PRESETS[preset])
    return FlowModel(tuple(bounds), episode_length)


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    terminal: bool
    r_a: float
    r_e: float
    phase_changed: bool
    frames: int
    departures: int


class SignalEnv:
    """Runs an episode of ``flow.episode_length`` frames.

    ``reset`` runs one green window of phase 0 to build the first
    observation. Each ``step`` applies an action (with clearance frames when
    the phase changes) and returns the normalized observation of the
    following green window. The episode ends at the first decision point at
    or after the horizon; arrivals stop at the horizon.
    """

    def __init__(self, spec: IntersectionSpec, timings: SignalTimings, flow: FlowModel,
                 reward: RewardParams, rng: np.random.Generator, count_scale: float = 20.0,
                 frame_log=None):
        if len(flow.bounds) != len(spec.lanes):
            raise ConfigurationError(f"flow has {len(flow.bounds)} lanes, intersection has {len(spec.lanes)}")
        self.spec, self.timings, self.flow, self.reward = spec, timings, flow, reward
        self.rng = rng
        self.count_scale = count_scale
        self.sim = Simulator(spec, timings, rng, flow.episode_length, frame_log=frame_log)
        self.observation: Observation | None = None
        self.last_frame: FrameReport | None = None
        self.green_elapsed = 0
        self.queue_samples = []

    @property
    def obs_dim(self) -> int:
        return self.spec.action_count * self.timings.green_min + 1

    @property
    def action_count(self) -> int:
        return self.spec.action_count

    @property
    def clock(self) -> int:
        return self.sim.state.clock

    @property
    def phase(self) -> int:
        return self.sim.state.current_phase

    def reset(self, pe=None, log_waits: bool = False) -> np.ndarray:
        if pe is None:
            pe = sample_episode_flow(self.flow, self.rng)
        self.sim.reset(pe, log_waits=log_waits)
        frames = self.sim.run_green()
        self.green_elapsed = len(frames)
        self.queue_samples = [f.waiting_total for f in frames]
        return self._finish(frames)

    def _finish(self, frames) -> np.ndarray:
        self.last_frame = frames[-1]
        self.observation = self.sim.observe(frames)
        return self.observation.normalized(self.count_scale)

    def step(self, action: int) -> StepResult:
        before = self.last_frame
        result = self.sim.apply_action(action)
        green = result.green_frames
        window = ActionWindow((before.waiting_total, *(f.waiting_total for f in green)), result.phase_changed)
        r_a = action_reward(window, self.reward)
        terminal = self.sim.done
        r_e = episodic_reward(self.sim.episode_wait(), self.reward) if terminal else 0.0
        self.green_elapsed = len(green) if result.phase_changed else self.green_elapsed + len(green)
        frames = result.transition_frames + green
        self.queue_samples.extend(f.waiting_total for f in frames)
        obs = self._finish(green)
        return StepResult(obs, total_reward(r_a, r_e, terminal), terminal, r_a, r_e, result.phase_changed,
                          result.frames_elapsed, sum(f.departures for f in frames))

    @property
    def omega(self) -> int:
        return self.sim.episode_wait()

    @property
    def mean_queue(self) -> float:
        return float(np.mean(self.queue_samples)) if self.queue_samples else 0.0
