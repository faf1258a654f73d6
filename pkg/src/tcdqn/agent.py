"""The learner: exploration, double-Q distributional targets, prioritized updates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .neural import Adam, QNetwork, Support, clip_grad_norm, q_values
from .replay import Batch, PriorityBuffer, Transition, UniformBuffer

TOGGLES = ("double", "dueling", "per", "noisy", "distributional")


@dataclass
class AgentConfig:
    gamma: float = 0.99
    batch_size: int = 32
    target_period: int = 2000  # frames between target syncs
    lr: float = 2e-4
    adam_eps: float = 1e-8
    eps_initial: float = 1.0
    eps_final: float = 0.05
    eps_decay: float = 15000.0
    sigma0: float = 0.4
    learn_start: int = 1000
    max_grad_norm: float = 0.0  # 0 disables clipping
    n_fc: int = 512
    n_nl: int = 64
    use_double: bool = True
    use_dueling: bool = True
    use_per: bool = True
    use_noisy: bool = True
    use_distributional: bool = True
    support: Support = field(default_factory=Support)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.target_period < 1:
            raise ValueError("target_period must be >= 1")

    def toggles(self) -> dict[str, bool]:
        return {name: getattr(self, f"use_{name}") for name in TOGGLES}


def epsilon_at(t: float, eps_initial: float = 1.0, eps_final: float = 0.05, eps_decay: float = 15000.0,
               noisy: bool = False) -> float:
    if noisy:
        return 0.0
    if math.isinf(t):
        return eps_final
    return eps_final + (eps_initial - eps_final) * math.exp(-t / eps_decay)


def categorical_project(rewards, gamma: float, terminal, probs, support: Support) -> np.ndarray:
    """Project ``r + gamma * z`` (or ``r`` alone at terminal states) back onto the support.

    ``probs`` has shape ``(B, N)``; the result has the same shape and each row
    sums to one.
    """
    probs = np.asarray(probs, dtype=float)
    single = probs.ndim == 1
    probs = np.atleast_2d(probs)
    rewards = np.atleast_1d(np.asarray(rewards, dtype=float))
    terminal = np.atleast_1d(np.asarray(terminal, dtype=bool))
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("target distribution must be non-negative and sum to one")
    z = support.atoms
    n = support.n_atoms
    discount = np.where(terminal, 0.0, gamma)
    tz = np.clip(rewards[:, None] + discount[:, None] * z[None, :], support.v_min, support.v_max)
    c = np.clip((tz - support.v_min) / support.delta, 0.0, n - 1)
    lo = np.floor(c)
    hi = np.ceil(c)
    w_lo = hi - c
    w_hi = c - lo
    same = lo == hi
    w_lo[same] = 1.0
    rows = np.repeat(np.arange(len(probs)), n)
    out = np.zeros_like(probs)
    np.add.at(out, (rows, lo.astype(np.int64).ravel()), (probs * w_lo).ravel())
    np.add.at(out, (rows, hi.astype(np.int64).ravel()), (probs * w_hi).ravel())
    return out[0] if single else out


@dataclass
class StepInfo:
    loss: float
    td_errors: np.ndarray


class Agent:
    """Online/target network pair plus optimizer, replay and counters."""

    def __init__(self, input_dim: int, action_count: int, config: AgentConfig | None = None,
                 rng: np.random.Generator | None = None, buffer=None):
        self.config = cfg = config or AgentConfig()
        self.rng = np.random.default_rng(0) if rng is None else rng
        self.action_count = action_count
        self.support = cfg.support if cfg.use_distributional else None
        self.online = QNetwork(input_dim, action_count, n_fc=cfg.n_fc, n_nl=cfg.n_nl, support=self.support,
                               dueling=cfg.use_dueling, noisy=cfg.use_noisy, sigma0=cfg.sigma0, rng=self.rng)
        self.target = self.online.clone()
        self.optimizer = Adam(self.online.parameters(), lr=cfg.lr, eps=cfg.adam_eps)
        if buffer is None:
            buffer = PriorityBuffer() if cfg.use_per else UniformBuffer()
        self.buffer = buffer
        self.frames = 0
        self.episodes = 0
        self.updates = 0
        self.skipped_updates = 0
        self.last_sync = 0

    # -- acting --------------------------------------------------------------

    @property
    def epsilon(self) -> float:
        c = self.config
        return epsilon_at(self.frames, c.eps_initial, c.eps_final, c.eps_decay, noisy=c.use_noisy)

    def q(self, net: QNetwork, x) -> np.ndarray:
        out = net.forward(x)
        return q_values(out, self.support) if self.support is not None else out

    def select_action(self, obs, greedy: bool = False) -> int:
        """Epsilon-greedy (or noisy-greedy) action; ties go to the lowest index."""
        if greedy:
            if self.config.use_noisy:
                self.online.zero_noise()
            return int(np.argmax(self.q(self.online, obs)))
        eps = self.epsilon
        if eps > 0.0 and self.rng.random() < eps:
            return int(self.rng.integers(self.action_count))
        if self.config.use_noisy:
            self.online.sample_noise(self.rng)
        return int(np.argmax(self.q(self.online, obs)))

    # -- learning ------------------------------------------------------------

    def sync_target(self):
        self.online.copy_into(self.target)
        self.last_sync = self.frames

    def advance_frames(self, n: int):
        before = self.frames // self.config.target_period
        self.frames += int(n)
        if self.frames // self.config.target_period > before:
            self.sync_target()

    def remember(self, transition: Transition, frames: int = 0):
        self.buffer.push(transition)
        if frames:
            self.advance_frames(frames)

    def compute_target(self, batch: Batch) -> np.ndarray:
        """Projected target distributions ``(B, N)``, or scalar TD targets ``(B,)``."""
        cfg = self.config
        if cfg.use_noisy:
            self.online.sample_noise(self.rng)
        q_online_next = self.q(self.online, batch.s_next)
        if cfg.use_noisy:
            self.target.sample_noise(self.rng)
        target_out = self.target.forward(batch.s_next)
        q_target_next = q_values(target_out, self.support) if self.support is not None else target_out
        chooser = q_online_next if cfg.use_double else q_target_next
        b = np.argmax(chooser, axis=1)
        rows = np.arange(len(batch))
        if self.support is None:
            bootstrap = np.where(batch.terminal, 0.0, q_target_next[rows, b])
            return batch.r + cfg.gamma * bootstrap
        return categorical_project(batch.r, cfg.gamma, batch.terminal, target_out[rows, b], self.support)

    def loss_and_grads(self, batch: Batch, targets: np.ndarray):
        """IS-weighted loss on ``batch``, its parameter gradients and per-sample TD errors."""
        cfg = self.config
        if cfg.use_noisy:
            self.online.sample_noise(self.rng)
        out = self.online.forward(batch.s)
        rows = np.arange(len(batch))
        w = batch.weights
        size = len(batch)
        if self.support is None:
            q_sa = out[rows, batch.a]
            delta = targets - q_sa
            loss = float(np.mean(w * delta ** 2))
            grad = np.zeros_like(out)
            grad[rows, batch.a] = -2.0 * w * delta / size
        else:
            log_p = self.online.log_probs[rows, batch.a]
            loss = float(np.mean(w * -(targets * log_p).sum(axis=1)))
            grad = np.zeros_like(out)
            grad[rows, batch.a] = -(w / size)[:, None] * targets
            delta = (targets - out[rows, batch.a]) @ self.support.atoms
        return loss, self.online.backward(grad), delta

    def train_step(self) -> StepInfo | None:
        if len(self.buffer) < max(1, self.config.learn_start):
            self.skipped_updates += 1
            return None
        batch = self.buffer.sample(self.config.batch_size, self.rng)
        targets = self.compute_target(batch)
        loss, grads, delta = self.loss_and_grads(batch, targets)
        if self.config.max_grad_norm > 0:
            clip_grad_norm(grads, self.config.max_grad_norm)
        self.optimizer.step(grads)
        self.buffer.update_priorities(batch.indices, np.abs(delta), batch.stamps)
        self.updates += 1
        return StepInfo(loss, delta)

    # -- persistence ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = self.optimizer.state_arrays()
        for name, p in self.target.parameters():
            out[f"target.{name}"] = p
        return out

    def counters(self) -> dict:
        return {"frames": self.frames, "episodes": self.episodes, "updates": self.updates,
                "adam_t": self.optimizer.t, "last_sync": self.last_sync}
