"""Small dense Q-network engine in float64 numpy.

The network is a fixed topology: a fully connected trunk followed by one or
two streams (value / advantage) that may use factorized-Gaussian noisy
layers. With a support attached, each action's output is a probability
vector over return atoms; without one, the outputs are plain Q-values.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Support:
    v_min: float = -4.0
    v_max: float = 4.0
    n_atoms: int = 41

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError(f"support needs v_min < v_max, got ({self.v_min}, {self.v_max})")
        if self.n_atoms < 2:
            raise ValueError("support needs at least two atoms")

    @property
    def delta(self) -> float:
        return (self.v_max - self.v_min) / (self.n_atoms - 1)

    @property
    def atoms(self) -> np.ndarray:
        i = np.arange(self.n_atoms, dtype=float)
        return self.v_min + i * (self.v_max - self.v_min) / (self.n_atoms - 1)


def make_support(v_min: float, v_max: float, n_atoms: int) -> Support:
    return Support(float(v_min), float(v_max), int(n_atoms))


def q_values(dists: np.ndarray, support: Support) -> np.ndarray:
    """Expected return of each action distribution (last axis = atoms)."""
    return dists @ support.atoms


def relu(x):
    return np.maximum(x, 0.0)


class Dense:
    """Affine map ``y = x W^T + b``."""

    noisy = False

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(fan_in)
        self.fan_in, self.fan_out = fan_in, fan_out
        self.weight = rng.uniform(-bound, bound, (fan_out, fan_in))
        self.bias = rng.uniform(-bound, bound, fan_out)
        self._x = None

    def param_names(self):
        return ("weight", "bias")

    def effective(self):
        return self.weight, self.bias

    def forward(self, x):
        self._x = x
        w, b = self.effective()
        return x @ w.T + b

    def backward(self, dy):
        if self._x is None:
            raise RuntimeError("backward called before forward")
        x = self._x
        grads = {"weight": dy.T @ x, "bias": dy.sum(axis=0)}
        w, _ = self.effective()
        return dy @ w, grads


def _scale_noise(x):
    return np.sign(x) * np.sqrt(np.abs(x))


class NoisyDense(Dense):
    """Affine map with factorized Gaussian perturbations of weights and biases."""

    noisy = True

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, sigma0: float = 0.4):
        super().__init__(fan_in, fan_out, rng)
        scale = sigma0 / np.sqrt(fan_in)
        self.weight_sigma = np.full((fan_out, fan_in), scale)
        self.bias_sigma = np.full(fan_out, scale)
        self.eps_in = np.zeros(fan_in)
        self.eps_out = np.zeros(fan_out)

    def param_names(self):
        return ("weight", "bias", "weight_sigma", "bias_sigma")

    def sample_noise(self, rng: np.random.Generator):
        self.eps_in = _scale_noise(rng.standard_normal(self.fan_in))
        self.eps_out = _scale_noise(rng.standard_normal(self.fan_out))

    def zero_noise(self):
        self.eps_in = np.zeros(self.fan_in)
        self.eps_out = np.zeros(self.fan_out)

    def effective(self):
        w = self.weight + self.weight_sigma * np.outer(self.eps_out, self.eps_in)
        b = self.bias + self.bias_sigma * self.eps_out
        return w, b

    def backward(self, dy):
        dx, grads = super().backward(dy)
        grads["weight_sigma"] = grads["weight"] * np.outer(self.eps_out, self.eps_in)
        grads["bias_sigma"] = grads["bias"] * self.eps_out
        return dx, grads


class QNetwork:
    """Trunk of two rectified dense layers plus value/advantage streams.

    Each stream has two rectified hidden layers of ``n_nl`` units and a linear
    head. Streams are combined as ``V + A - mean_a(A)`` in logit space. If
    ``support`` is given the combined logits are normalized per action into
    atom probabilities; otherwise they are the Q-values.
    """

    def __init__(self, input_dim: int, action_count: int, *, n_fc: int = 512, n_nl: int = 64,
                 support: Support | None = Support(), dueling: bool = True, noisy: bool = True,
                 sigma0: float = 0.4, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.input_dim, self.action_count = input_dim, action_count
        self.n_fc, self.n_nl = n_fc, n_nl
        self.support, self.dueling, self.noisy, self.sigma0 = support, dueling, noisy, sigma0
        self.n_atoms = support.n_atoms if support is not None else 1

        def stream_layer(i, o):
            return NoisyDense(i, o, rng, sigma0) if noisy else Dense(i, o, rng)

        self.trunk = [Dense(input_dim, n_fc, rng), Dense(n_fc, n_fc, rng)]
        self.value = []
        if dueling:
            self.value = [stream_layer(n_fc, n_nl), stream_layer(n_nl, n_nl), stream_layer(n_nl, self.n_atoms)]
        self.advantage = [stream_layer(n_fc, n_nl), stream_layer(n_nl, n_nl),
                          stream_layer(n_nl, action_count * self.n_atoms)]
        self._cache = None

    @property
    def distributional(self) -> bool:
        return self.support is not None

    def layers(self):
        named = [("trunk", self.trunk), ("value", self.value), ("advantage", self.advantage)]
        for prefix, stack in named:
            for i, layer in enumerate(stack):
                yield f"{prefix}.{i}", layer

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """Every trainable array, in a fixed declared order."""
        out = []
        for lname, layer in self.layers():
            for p in layer.param_names():
                out.append((f"{lname}.{p}", getattr(layer, p)))
        return out

    def sample_noise(self, rng: np.random.Generator):
        for _, layer in self.layers():
            if layer.noisy:
                layer.sample_noise(rng)

    def zero_noise(self):
        for _, layer in self.layers():
            if layer.noisy:
                layer.zero_noise()

    @staticmethod
    def _back(stack, dy, grads, prefix):
        for i in reversed(range(len(stack))):
            layer = stack[i]
            if i != len(stack) - 1:
                dy = dy * (layer._out > 0)
            dy, g = layer.backward(dy)
            grads[f"{prefix}.{i}"] = g
        return dy

    def forward(self, x) -> np.ndarray:
        """Atom probabilities ``(B, |A|, N)``, or Q-values ``(B, |A|)`` without a support."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"expected input width {self.input_dim}, got {x.shape[1]}")
        h = x
        for layer in self.trunk:
            h = relu(layer.forward(h))
            layer._out = h
        feat = h
        adv = self._run_stream(self.advantage, feat).reshape(-1, self.action_count, self.n_atoms)
        if self.dueling:
            val = self._run_stream(self.value, feat)
            logits = val[:, None, :] + adv - adv.mean(axis=1, keepdims=True)
        else:
            logits = adv
        if self.distributional:
            shifted = logits - logits.max(axis=-1, keepdims=True)
            log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
            out = np.exp(log_probs)
            self._cache = {"log_probs": log_probs, "probs": out}
        else:
            out = logits[..., 0]
            self._cache = {}
        return out[0] if single else out

    def _run_stream(self, stack, h):
        for i, layer in enumerate(stack):
            h = layer.forward(h)
            if i != len(stack) - 1:
                h = relu(h)
                layer._out = h
        return h

    @property
    def log_probs(self) -> np.ndarray:
        return self._cache["log_probs"]

    def backward(self, grad_out) -> dict[str, np.ndarray]:
        """Parameter gradients of a scalar loss.

        ``grad_out`` is the loss gradient with respect to the log-probabilities
        ``(B, |A|, N)`` in distributional mode, or to the Q-values ``(B, |A|)``
        otherwise.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        if self.distributional:
            p = self._cache["probs"]
            g = np.asarray(grad_out, dtype=float).reshape(p.shape)
            dlogits = g - p * g.sum(axis=-1, keepdims=True)
        else:
            g = np.asarray(grad_out, dtype=float).reshape(-1, self.action_count)
            dlogits = g[..., None]
        per_layer = {}
        if self.dueling:
            dval = dlogits.sum(axis=1)
            dadv = dlogits - dlogits.mean(axis=1, keepdims=True)
            dfeat = self._back(self.value, dval, per_layer, "value")
        else:
            dadv = dlogits
            dfeat = 0.0
        dfeat = dfeat + self._back(self.advantage, dadv.reshape(dadv.shape[0], -1), per_layer, "advantage")
        dy = dfeat
        for i in reversed(range(len(self.trunk))):
            layer = self.trunk[i]
            dy = dy * (layer._out > 0)
            dy, per_layer[f"trunk.{i}"] = layer.backward(dy)
        grads = {}
        for lname, layer in self.layers():
            for p in layer.param_names():
                grads[f"{lname}.{p}"] = per_layer[lname][p]
        return grads

    def copy_into(self, other: "QNetwork"):
        for (name, src), (oname, dst) in zip(self.parameters(), other.parameters()):
            if name != oname or src.shape != dst.shape:
                raise ShapeError(f"parameter mismatch {name} vs {oname}")
            dst[...] = src

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.input_dim, self.action_count, n_fc=self.n_fc, n_nl=self.n_nl,
                        support=self.support, dueling=self.dueling, noisy=self.noisy,
                        sigma0=self.sigma0, rng=np.random.default_rng(0))
        self.copy_into(twin)
        return twin

    def describe(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "action_count": self.action_count,
            "n_fc": self.n_fc,
            "n_nl": self.n_nl,
            "n_atoms": self.n_atoms,
            "support": None if self.support is None else [self.support.v_min, self.support.v_max,
                                                            self.support.n_atoms],
            "dueling": self.dueling,
            "noisy": self.noisy,
            "sigma0": self.sigma0,
        }


class Adam:
    def __init__(self, params: list[tuple[str, np.ndarray]], lr: float = 2e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, betas[0], betas[1], eps
        self.m = {name: np.zeros_like(p) for name, p in params}
        self.v = {name: np.zeros_like(p) for name, p in params}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, _ in self.params:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state(self, arrays: dict[str, np.ndarray], t: int):
        for name, _ in self.params:
            self.m[name][...] = arrays[f"adam.m.{name}"]
            self.v[name][...] = arrays[f"adam.v.{name}"]
        self.t = int(t)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


# -- checkpoint file ---------------------------------------------------------
#
# MAGIC | u32 version | u64 header length | UTF-8 JSON header | arrays
# Arrays are raw little-endian float64 in the order listed in the header.

MAGIC = b"TCDQNCK\x00"
FORMAT_VERSION = 1


def save_checkpoint(path, net: QNetwork, *, normalization: dict | None = None,
                    extras: dict[str, np.ndarray] | None = None, meta: dict | None = None):
    arrays = list(net.parameters()) + list((extras or {}).items())
    header = {
        "format_version": FORMAT_VERSION,
        "network": net.describe(),
        "normalization": normalization or {},
        "meta": meta or {},
        "arrays": [[name, list(np.shape(a))] for name, a in arrays],
        "n_params": len(net.parameters()),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, length = struct.unpack("<IQ", fh.read(12))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        header = json.loads(fh.read(length).decode())
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise CheckpointError(f"{path}: truncated at array {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float)
    return header, arrays


def load_checkpoint(path, net: QNetwork) -> dict:
    """Load parameters into ``net``; returns the header. Shapes must match exactly."""
    header, arrays = read_checkpoint(path)
    desc = header["network"]
    mine = net.describe()
    for key in ("input_dim", "action_count", "n_atoms", "dueling", "noisy"):
        if desc.get(key) != mine[key]:
            raise CheckpointError(f"checkpoint {key}={desc.get(key)!r} does not match network {key}={mine[key]!r}")
    for name, p in net.parameters():
        if name not in arrays:
            raise CheckpointError(f"checkpoint lacks parameter {name}")
        if arrays[name].shape != p.shape:
            raise CheckpointError(f"shape mismatch for {name}: {arrays[name].shape} vs {p.shape}")
    for name, p in net.parameters():
        p[...] = arrays[name]
    header["extras"] = {k: v for k, v in arrays.items() if k not in dict(net.parameters())}
    return header


def network_from_checkpoint(path) -> tuple[QNetwork, dict]:
    header, _ = read_checkpoint(path)
    d = header["network"]
    support = None if d["support"] is None else Support(*d["support"])
    net = QNetwork(d["input_dim"], d["action_count"], n_fc=d["n_fc"], n_nl=d["n_nl"], support=support,
                   dueling=d["dueling"], noisy=d["noisy"], sigma0=d["sigma0"])
    return net, load_checkpoint(path, net)
