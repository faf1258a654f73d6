import numpy as np
import pytest

from tcdqn.config import config_from_dict


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg(tmp_path):
    """A run config small enough to train in a couple of seconds."""
    return config_from_dict({
        "episodes": 3,
        "out_dir": str(tmp_path / "run"),
        "checkpoint_every": 2,
        "env": {"archetype": "case1", "traffic": "normal", "episode_length": 60},
        "agent": {"n_fc": 16, "n_nl": 8, "learn_start": 8, "batch_size": 4, "target_period": 50},
        "replay": {"capacity": 256},
        "eval": {"seeds": 2, "episodes": 2},
    })


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
