"""The learner's building blocks on toy inputs: return distributions, projection, replay."""
import numpy as np

from tcdqn.agent import categorical_project, epsilon_at
from tcdqn.neural import QNetwork, Support, q_values
from tcdqn.replay import PriorityBuffer, Transition

rng = np.random.default_rng(0)
support = Support(-4.0, 4.0, 41)

# --- A fresh network: one distribution over 41 atoms per action ---
net = QNetwork(41, 4, n_fc=64, n_nl=32, support=support, rng=rng)
x = rng.random(41)
net.zero_noise()
probs = net.forward(x)
print(probs.shape, probs.sum(axis=1))
print("Q:", q_values(probs, support).round(4))

# noise changes the greedy values from call to call
qs = []
for _ in range(5):
    net.sample_noise(rng)
    qs.append(q_values(net.forward(x), support))
print("Q spread under noise:", np.ptp(qs, axis=0).round(4))

# --- Bellman update on the support ---
mass_at_zero = np.zeros(41)
mass_at_zero[20] = 1.0
shifted = categorical_project(0.1, 0.99, False, mass_at_zero, support)
print("r=0.1 moves the point mass to atoms", np.flatnonzero(shifted), shifted[shifted > 0])
print("terminal r=2 lands on atom", np.argmax(categorical_project(2.0, 0.99, True, probs[0], support)))

# --- Prioritized replay ---
buf = PriorityBuffer(8, alpha=0.6)
for i in range(8):
    buf.push(Transition(np.zeros(2), 0, float(i), np.zeros(2), False))
buf.update_priorities(np.arange(8), np.arange(8.0))
print("P(i):", buf.probabilities().round(3))
batch = buf.sample(4, rng)
print("sampled", batch.indices, "weights", batch.weights.round(3))

# --- Exploration when noisy layers are off ---
for t in (0, 5000, 15000, 60000):
    print(t, round(epsilon_at(t), 4))
