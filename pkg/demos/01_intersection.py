"""Walk through one episode of the two-phase intersection under a fixed-time plan."""
import io

import numpy as np

from tcdqn.baselines import FixedTimePlan, ft_next_action
from tcdqn.sim import SignalTimings, Simulator, archetype

# --- Geometry ---
spec = archetype("case1")
for lane in spec.lanes:
    print(lane.name, lane.turns, lane.turn_weights)
print("phases:", [sorted(g) for g in spec.movement_groups])

# --- One episode, frame log kept in memory ---
log = io.StringIO()
sim = Simulator(spec, SignalTimings(), np.random.default_rng(0), episode_length=120, frame_log=log)
sim.reset(np.full(len(spec.lanes), 0.08))
plan = FixedTimePlan(((0, 20), (1, 20)))

frames = sim.run_green()
while not sim.done:
    res = sim.apply_action(ft_next_action(plan, sim.state.clock))
    frames = res.green_frames

st = sim.state
print(f"clock {st.clock}  spawned {st.spawned}  departed {st.departed_total}  "
      f"in system {st.in_system}  suppressed {st.suppressed}")
print("total wait (vehicle-frames):", sim.episode_wait())

# the last green window as the agent would see it: Tg rows x |A| counts, plus the phase key
obs = sim.observe(frames)
print(obs.frames.T)
print("flattened length", len(obs))

print("\n".join(log.getvalue().splitlines()[:6]))
