import numpy as np
import pytest

from tcdqn.baselines import (FixedTimePlan, RandomController, SotlParams, default_ft_plan, ft_next_action,
                             ft_plan_grid, sotl_next_action)
from tcdqn.sim import FlowModel, SignalTimings, archetype

PLAN = FixedTimePlan(((0, 30), (1, 30)), transition=5)


def test_fixed_time_cycle():
    assert PLAN.cycle_length == 70
    assert ft_next_action(PLAN, 10) == 0
    assert ft_next_action(PLAN, 35) == 1
    assert ft_next_action(PLAN, 30) == 1  # clearance into phase 1
    assert ft_next_action(PLAN, 64) == 1
    assert ft_next_action(PLAN, 66) == 0
    assert ft_next_action(PLAN, PLAN.cycle_length) == 0


def test_repeated_phase_has_no_clearance():
    plan = FixedTimePlan(((0, 10), (0, 10), (1, 10)), transition=5)
    assert plan.cycle_length == 40


def test_plan_validation():
    with pytest.raises(ValueError):
        FixedTimePlan(((0, 5), (1, 30))).validate(2, 10)
    with pytest.raises(ValueError):
        FixedTimePlan(((0, 30),)).validate(2, 10)
    with pytest.raises(ValueError):
        FixedTimePlan(((0, 30), (3, 30))).validate(2, 10)


def test_default_plan_follows_demand():
    spec = archetype("case1")
    flow = FlowModel(((0.1, 0.1), (0.02, 0.02), (0.1, 0.1), (0.02, 0.02)), 120)
    plan = default_ft_plan(spec, flow, SignalTimings())
    greens = dict(plan.entries)
    heavy = 0 if ("N", "through") in spec.movement_groups[0] else 1
    assert spec.lanes[0].approach == "N"
    assert greens[heavy] > greens[1 - heavy]
    plan.validate(2, 10)


def test_plan_grid_size():
    plans = list(ft_plan_grid(2, SignalTimings(), (1, 2, 3)))
    assert len(plans) == 9 and all(d % 10 == 0 for p in plans for _, d in p.entries)


def test_sotl_rule():
    p = SotlParams(threshold=5, min_hold=10)
    assert sotl_next_action([9, 5, 5, 0], 0, p) == 0
    assert sotl_next_action([0, 8, 0, 0], 0, p) == 1
    assert sotl_next_action([0, 7, 7, 0], 0, p) == 1
    assert sotl_next_action([0, 8, 0, 0], 0, p, held=4) == 0


def test_random_controller_uniform():
    ctrl = RandomController(4, np.random.default_rng(0))
    counts = np.bincount([ctrl.act(None, None) for _ in range(100_000)], minlength=4)
    assert np.all(np.abs(counts / 1e5 - 0.25) < 0.01)
