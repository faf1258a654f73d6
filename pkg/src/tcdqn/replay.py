"""Experience replay: proportional prioritized buffer backed by a sum tree, and a uniform buffer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyBufferError(RuntimeError):
    pass


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    stamps: np.ndarray

    def __len__(self):
        return len(self.a)


class SumTree:
    """Binary tree over ``capacity`` leaves; every node holds the sum of its children.

    Node 1 is the root, leaves live at ``capacity .. 2*capacity-1``.
    """

    def __init__(self, capacity: int):
        if capacity < 1 or capacity & (capacity - 1):
            raise ValueError(f"capacity must be a power of two, got {capacity}")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def leaf(self, index):
        return self.nodes[self.capacity + np.asarray(index)]

    @property
    def leaves(self) -> np.ndarray:
        return self.nodes[self.capacity:]

    def set(self, index: int, value: float):
        i = index + self.capacity
        self.nodes[i] = value
        i //= 2
        while i >= 1:
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1]
            i //= 2

    def find(self, mass: np.ndarray) -> np.ndarray:
        """Leaf indices whose cumulative-sum interval contains each ``mass`` value."""
        mass = np.array(mass, dtype=float)
        idx = np.ones(mass.shape, dtype=np.int64)
        for _ in range(self.capacity.bit_length() - 1):
            left = 2 * idx
            left_sum = self.nodes[left]
            go_right = mass >= left_sum
            mass = np.where(go_right, mass - left_sum, mass)
            idx = np.where(go_right, left + 1, left)
        return idx - self.capacity


class _Storage:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.serial = 0
        self.s = None

    def _allocate(self, t: Transition):
        n = len(t.s)
        self.s = np.zeros((self.capacity, n))
        self.s_next = np.zeros((self.capacity, n))
        self.a = np.zeros(self.capacity, dtype=np.int64)
        self.r = np.zeros(self.capacity)
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.stamp = np.full(self.capacity, -1, dtype=np.int64)

    def write(self, t: Transition) -> int:
        if self.s is None:
            self._allocate(t)
        if len(t.s) != self.s.shape[1] or len(t.s_next) != self.s.shape[1]:
            raise ValueError("observation length does not match the buffer")
        i = self.cursor
        self.s[i] = t.s
        self.s_next[i] = t.s_next
        self.a[i] = t.a
        self.r[i] = t.r
        self.terminal[i] = t.terminal
        self.stamp[i] = self.serial
        self.serial += 1
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def gather(self, idx, weights) -> Batch:
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx],
                     idx, weights, self.stamp[idx])

    def __getitem__(self, i) -> Transition:
        return Transition(self.s[i].copy(), int(self.a[i]), float(self.r[i]), self.s_next[i].copy(),
                          bool(self.terminal[i]))


class PriorityBuffer:
    """Proportional prioritized replay.

    Leaves hold ``(|delta| + eps) ** alpha``; new transitions enter with the
    largest priority seen so far. ``beta`` grows by ``beta_increment`` on every
    ``sample`` call and stops at 1.
    """

    prioritized = True

    def __init__(self, capacity: int = 2 ** 15, alpha: float = 0.6, beta0: float = 0.4,
                 beta_increment: float = 0.001, eps: float = 0.01):
        self.tree = SumTree(capacity)
        self.store = _Storage(capacity)
        self.alpha, self.beta, self.beta_increment, self.eps = alpha, beta0, beta_increment, eps
        self.max_priority = 1.0
        self.stale_skips = 0

    @property
    def capacity(self) -> int:
        return self.store.capacity

    def __len__(self) -> int:
        return self.store.size

    def __getitem__(self, i) -> Transition:
        return self.store[i]

    def push(self, t: Transition) -> int:
        i = self.store.write(t)
        self.tree.set(i, self.max_priority ** self.alpha)
        return i

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves[: len(self)]
        return leaves / leaves.sum()

    def sample(self, m: int, rng: np.random.Generator) -> Batch:
        n = len(self)
        if n == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        m = min(m, n)
        total = self.tree.total
        segment = total / m
        mass = (np.arange(m) + rng.random(m)) * segment
        idx = self.tree.find(np.minimum(mass, np.nextafter(total, 0)))
        idx = np.minimum(idx, n - 1)
        probs = self.tree.leaf(idx) / total
        weights = (n * probs) ** (-self.beta)
        weights = weights / weights.max()
        self.beta = min(1.0, self.beta + self.beta_increment)
        return self.store.gather(idx, weights)

    def update_priorities(self, indices, deltas, stamps=None):
        deltas = np.abs(np.asarray(deltas, dtype=float))
        for k, (i, d) in enumerate(zip(np.asarray(indices), deltas)):
            if stamps is not None and self.store.stamp[i] != stamps[k]:
                self.stale_skips += 1
                continue
            p = d + self.eps
            self.tree.set(int(i), p ** self.alpha)
            self.max_priority = max(self.max_priority, p)

    def stats(self) -> dict:
        return {"size": len(self), "beta": self.beta, "max_priority": self.max_priority,
                "stale_skips": self.stale_skips}


class UniformBuffer:
    """Ring buffer with uniform sampling and unit weights; same surface as :class:`PriorityBuffer`."""

    prioritized = False

    def __init__(self, capacity: int = 2 ** 15):
        self.store = _Storage(capacity)
        self.beta = 1.0
        self.max_priority = 1.0
        self.stale_skips = 0

    @property
    def capacity(self) -> int:
        return self.store.capacity

    def __len__(self) -> int:
        return self.store.size

    def __getitem__(self, i) -> Transition:
        return self.store[i]

    def push(self, t: Transition) -> int:
        return self.store.write(t)

    def sample(self, m: int, rng: np.random.Generator) -> Batch:
        n = len(self)
        if n == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        idx = rng.integers(0, n, min(m, n))
        return self.store.gather(idx, np.ones(len(idx)))

    def update_priorities(self, indices, deltas, stamps=None):
        pass

    def stats(self) -> dict:
        return {"size": len(self), "beta": self.beta, "max_priority": self.max_priority,
                "stale_skips": self.stale_skips}
