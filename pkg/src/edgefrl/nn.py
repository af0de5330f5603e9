"""Dense-network numerical core.

Everything here works in float64 on plain numpy arrays. Parameters live in
:class:`Linear` records, forward passes that need gradients are recorded on
a :class:`GradientTape`, and :func:`backward` walks the tape in reverse.
Only the handful of ops the agent network needs are supported: affine maps,
ReLU, softmax and concatenation along the feature axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12


class NumericalError(ValueError):
    """Raised when a NaN/Inf shows up where finite numbers are required."""


@dataclass
class Linear:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "Linear":
        return Linear(self.weight.copy(), self.bias.copy())

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int) -> "Linear":
        return cls(np.zeros((out_dim, in_dim)), np.zeros(out_dim))

    def zeros_like(self) -> "Linear":
        return Linear(np.zeros_like(self.weight), np.zeros_like(self.bias))


def init_linear(in_dim: int, out_dim: int, rng: np.random.Generator) -> Linear:
    """Glorot-uniform weights, zero bias."""
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    weight = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return Linear(weight.astype(np.float64), np.zeros(out_dim))


def linear_forward(layer: Linear, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"input has {x.shape[-1]} features, layer expects {layer.in_dim}")
    return x @ layer.weight.T + layer.bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if np.isnan(logits).any():
        raise NumericalError("softmax received NaN logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def categorical_sample(probs, rng: np.random.Generator) -> int:
    """Draw one index from ``probs`` using a single uniform from ``rng``."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("categorical_sample needs a non-empty 1-D probability vector")
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {total}, not 1")
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, p.size - 1)


def neg_log_likelihood(probs, chosen: int) -> float:
    p = np.asarray(probs, dtype=np.float64)
    if not 0 <= chosen < p.size:
        raise IndexError(f"action index {chosen} out of range for {p.size} choices")
    return float(-math.log(max(p[chosen], PROB_FLOOR)))


def kl_divergence(p, q) -> float:
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_FLOOR, None)
    q = np.clip(np.asarray(q, dtype=np.float64), PROB_FLOOR, None)
    return float(np.sum(p * (np.log(p) - np.log(q))))


class GradientTape:
    """Records a forward pass so gradients can be pulled back through it.

    Values are addressed by integer node ids returned from each op. Parameter
    gradients end up in :attr:`grads`, keyed by the layer name passed to
    :meth:`linear`.
    """

    def __init__(self):
        self._values: list[np.ndarray] = []
        self._ops: list[tuple] = []
        self.grads: dict[str, Linear] = {}

    def _push(self, value: np.ndarray) -> int:
        self._values.append(value)
        return len(self._values) - 1

    def value(self, node: int) -> np.ndarray:
        return self._values[node]

    @property
    def recorded(self) -> bool:
        return bool(self._ops)

    def input(self, x) -> int:
        return self._push(np.asarray(x, dtype=np.float64))

    def linear(self, name: str, layer: Linear, node: int) -> int:
        out = self._push(linear_forward(layer, self._values[node]))
        self._ops.append(("linear", node, out, name, layer))
        return out

    def relu(self, node: int) -> int:
        out = self._push(relu(self._values[node]))
        self._ops.append(("relu", node, out))
        return out

    def softmax(self, node: int) -> int:
        out = self._push(softmax(self._values[node]))
        self._ops.append(("softmax", node, out))
        return out

    def concat(self, nodes: list[int]) -> int:
        out = self._push(np.concatenate([self._values[n] for n in nodes], axis=-1))
        self._ops.append(("concat", tuple(nodes), out))
        return out

    def clear(self) -> None:
        self._values.clear()
        self._ops.clear()
        self.grads.clear()


def backward(tape: GradientTape, output_grads: dict[int, np.ndarray]) -> dict[str, Linear]:
    """Reverse-mode pass from ``{node: dL/dnode}`` to per-layer parameter grads."""
    if not tape.recorded:
        raise RuntimeError("backward called before any forward pass was recorded")
    node_grads: dict[int, np.ndarray] = {}
    for node, g in output_grads.items():
        g = np.asarray(g, dtype=np.float64)
        if g.shape != tape.value(node).shape:
            raise ValueError(f"gradient shape {g.shape} != value shape {tape.value(node).shape}")
        node_grads[node] = g.copy()

    def accumulate(node: int, g: np.ndarray) -> None:
        if node in node_grads:
            node_grads[node] = node_grads[node] + g
        else:
            node_grads[node] = g

    for op in reversed(tape._ops):
        kind, src, out = op[0], op[1], op[2]
        g_out = node_grads.get(out)
        if g_out is None:
            continue
        if kind == "linear":
            name, layer = op[3], op[4]
            x = tape.value(src)
            x2 = x.reshape(-1, x.shape[-1])
            g2 = g_out.reshape(-1, g_out.shape[-1])
            grad = tape.grads.setdefault(name, layer.zeros_like())
            grad.weight += g2.T @ x2
            grad.bias += g2.sum(axis=0)
            accumulate(src, g_out @ layer.weight)
        elif kind == "relu":
            accumulate(src, g_out * (tape.value(src) > 0.0))
        elif kind == "softmax":
            p = tape.value(out)
            accumulate(src, p * (g_out - np.sum(g_out * p, axis=-1, keepdims=True)))
        elif kind == "concat":
            start = 0
            for n in src:
                width = tape.value(n).shape[-1]
                accumulate(n, g_out[..., start:start + width])
                start += width
    return tape.grads


@dataclass
class OptimizerState:
    """Adam by default; ``mode="sgd"`` gives plain ``w -= lr * g``."""

    lr: float = 1e-3
    mode: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.mode not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer mode {self.mode!r}")


def optimizer_step(params: dict[str, Linear], grads: dict[str, Linear],
                   opt: OptimizerState) -> dict[str, Linear]:
    """Apply one update to every layer named in ``grads`` (in place) and clear ``grads``.

    A non-finite gradient rejects the whole step before anything is written.
    Layers whose gradient is exactly zero are skipped entirely.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown layer {name!r}")
        p = params[name]
        if g.weight.shape != p.weight.shape or g.bias.shape != p.bias.shape:
            raise ValueError(f"gradient shape mismatch for layer {name!r}")
        if not (np.isfinite(g.weight).all() and np.isfinite(g.bias).all()):
            raise NumericalError(f"non-finite gradient for layer {name!r}; step rejected")

    opt.step_count += 1
    for name in sorted(grads):
        g, p = grads[name], params[name]
        # stale Adam moments must not move a layer that received no gradient
        if not (g.weight.any() or g.bias.any()):
            continue
        for attr in ("weight", "bias"):
            w, gw = getattr(p, attr), getattr(g, attr)
            if opt.mode == "sgd":
                w -= opt.lr * gw
                continue
            key = (name, attr)
            m, v, t = opt.moments.get(key, (np.zeros_like(w), np.zeros_like(w), 0))
            t += 1
            m = opt.beta1 * m + (1.0 - opt.beta1) * gw
            v = opt.beta2 * v + (1.0 - opt.beta2) * gw * gw
            m_hat = m / (1.0 - opt.beta1 ** t)
            v_hat = v / (1.0 - opt.beta2 ** t)
            w -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
            opt.moments[key] = (m, v, t)
    grads.clear()
    return params
