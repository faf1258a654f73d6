import numpy as np
import pytest

from tcdqn.env import SignalEnv, scenario_flow
from tcdqn.reward import RewardParams
from tcdqn.sim import ConfigurationError, FlowModel, SignalTimings, archetype


def make_env(name="case1", bounds=(0.03, 0.07), T=120, seed=0, reward=RewardParams()):
    spec = archetype(name)
    return SignalEnv(spec, SignalTimings(), FlowModel.uniform(spec, bounds, T), reward, np.random.default_rng(seed))


def test_reset_and_step_shapes():
    env = make_env("case3")
    obs = env.reset()
    assert obs.shape == (41,) and env.obs_dim == 41
    res = env.step(2)
    assert res.obs.shape == (41,) and res.phase_changed and res.frames == 15
    assert obs[-1] == 0.0 and res.obs[-1] == 0.5


def test_episode_terminates_at_horizon():
    env = make_env(T=120)
    env.reset()
    steps = 0
    while True:
        res = env.step(steps % 2)
        steps += 1
        if res.terminal:
            break
    assert env.clock >= 120
    assert res.r_e != 0.0
    assert res.reward == pytest.approx(-(res.r_a + res.r_e))


def test_no_traffic_rewards():
    env = make_env(bounds=(0.0, 0.0))
    env.reset()
    res = env.step(0)
    assert res.r_a == pytest.approx(0.11) and env.omega == 0


def test_flow_lane_mismatch():
    spec = archetype("case1")
    with pytest.raises(ConfigurationError):
        SignalEnv(spec, SignalTimings(), FlowModel(((0.1, 0.1),), 120), RewardParams(), np.random.default_rng(0))


def test_scenarios():
    spec = archetype("case1")
    one = scenario_flow(spec, 1, 120)
    two = scenario_flow(spec, 2, 120)
    for lane, b1, b2 in zip(spec.lanes, one.bounds, two.bounds):
        if lane.approach in "EW":
            assert b1 == (0.07, 0.12) and b2 == (0.01, 0.03)
        else:
            assert b1 == (0.01, 0.03) and b2 == (0.07, 0.12)
    assert set(scenario_flow(spec, 3, 120).bounds) == {(0.03, 0.07)}
    with pytest.raises(ConfigurationError):
        scenario_flow(spec, 4, 120)
