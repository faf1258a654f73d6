"""Train on the desk configuration for a few hundred episodes and compare with baselines.

Run from the repository root. A full 2000-episode run takes about two minutes.
"""
import sys
import tempfile

import numpy as np

from tcdqn import harness as h
from tcdqn.baselines import FixedTimeController, RandomController
from tcdqn.config import load_config, with_overrides

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 400
out = tempfile.mkdtemp(prefix="tcdqn_demo_")
cfg = with_overrides(load_config("configs/desk_case1.yaml"), episodes=episodes, out_dir=out)

# --- Training ---
res = h.run_training(cfg)
omega = np.array([r.omega_T for r in res.records], float)
for start in range(0, episodes, 100):
    print(f"episodes {start + 1:4d}-{min(start + 100, episodes):4d}: mean wait {omega[start:start + 100].mean():6.1f}")

# --- Baselines on the same traffic ---
def replay(make):
    env_rng, _, ctrl_rng = h.rng_streams(cfg.seed)
    env = h.build_env(cfg, env_rng)
    ctrl = make(env, ctrl_rng)
    return np.array([h.run_episode(env, ctrl, e).omega_T for e in range(episodes)], float)

best, grid = h.sweep_fixed_time(cfg, episodes=50, seed=10_000)
rand = replay(lambda env, rng: RandomController(env.action_count, rng))
ft = replay(lambda env, rng: FixedTimeController(best))
tail = min(100, episodes)
print(f"last {tail} episodes: agent {omega[-tail:].mean():.1f}  random {rand[-tail:].mean():.1f}  "
      f"FT {list(best.entries)} {ft[-tail:].mean():.1f}")

# --- Plot data ---
for path in h.emit_plot_data([res.metrics_path], f"{out}/plots", svg=True):
    print(path)
