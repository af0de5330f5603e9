"""Cascaded multi-head actor-critic used by every agent.

The backbone (8 -> 64 -> 48) feeds a scalar value head and a resolution
head; the resolution probabilities are concatenated onto the backbone
features and feed the batch-size and thread heads. The single-head variant
replaces the three action heads with one head over the joint action space
and exists only for ablation runs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..nn import GradientTape, Linear, categorical_sample, init_linear, linear_forward, relu, softmax
from .types import STATE_DIM, Action, ActionSpaceSpec

HIDDEN_DIM = 64
FEATURE_DIM = 48
BACKBONE_LAYERS = ("layer1", "layer2", "value")
CASCADE_HEADS = ("head_res", "head_bs", "head_mt")
JOINT_HEADS = ("head_joint",)


@dataclass
class PolicyOutput:
    probs: tuple[np.ndarray, ...]  # one distribution per head
    value: np.ndarray


class AgentNetwork:
    def __init__(self, layers: dict[str, Linear], spec: ActionSpaceSpec, single_head: bool = False):
        self.layers = layers
        self.spec = spec
        self.single_head = single_head
        self._check_shapes()

    @property
    def head_names(self) -> tuple[str, ...]:
        return JOINT_HEADS if self.single_head else CASCADE_HEADS

    @classmethod
    def initialize(cls, spec: ActionSpaceSpec, rng: np.random.Generator,
                   single_head: bool = False) -> "AgentNetwork":
        shapes = cls.layer_shapes(spec, single_head)
        layers = {name: init_linear(i, o, rng) for name, (i, o) in shapes.items()}
        return cls(layers, spec, single_head)

    @staticmethod
    def layer_shapes(spec: ActionSpaceSpec, single_head: bool = False) -> dict[str, tuple[int, int]]:
        n_res, n_bs, n_mt = spec.dims
        shapes = {
            "layer1": (STATE_DIM, HIDDEN_DIM),
            "layer2": (HIDDEN_DIM, FEATURE_DIM),
            "value": (FEATURE_DIM, 1),
        }
        if single_head:
            shapes["head_joint"] = (FEATURE_DIM, spec.joint_size)
        else:
            shapes["head_res"] = (FEATURE_DIM, n_res)
            shapes["head_bs"] = (FEATURE_DIM + n_res, n_bs)
            shapes["head_mt"] = (FEATURE_DIM + n_res, n_mt)
        return shapes

    def _check_shapes(self) -> None:
        expected = self.layer_shapes(self.spec, self.single_head)
        if set(expected) != set(self.layers):
            raise ValueError(f"layers {sorted(self.layers)} != expected {sorted(expected)}")
        for name, (i, o) in expected.items():
            if self.layers[name].weight.shape != (o, i) or self.layers[name].bias.shape != (o,):
                raise ValueError(f"layer {name} has shape {self.layers[name].weight.shape}, expected {(o, i)}")

    def copy(self) -> "AgentNetwork":
        return AgentNetwork({k: v.copy() for k, v in self.layers.items()}, self.spec, self.single_head)

    def forward(self, states) -> PolicyOutput:
        x = np.asarray(states, dtype=np.float64)
        feats = linear_forward(self.layers["layer2"], relu(linear_forward(self.layers["layer1"], x)))
        value = linear_forward(self.layers["value"], feats)[..., 0]
        if self.single_head:
            return PolicyOutput((softmax(linear_forward(self.layers["head_joint"], feats)),), value)
        p_res = softmax(linear_forward(self.layers["head_res"], feats))
        ext = np.concatenate([feats, p_res], axis=-1)
        p_bs = softmax(linear_forward(self.layers["head_bs"], ext))
        p_mt = softmax(linear_forward(self.layers["head_mt"], ext))
        return PolicyOutput((p_res, p_bs, p_mt), value)

    def forward_tape(self, tape: GradientTape, states) -> tuple[list[int], int]:
        """Same as :meth:`forward` but recorded; returns (prob nodes, value node)."""
        x = tape.input(states)
        h = tape.relu(tape.linear("layer1", self.layers["layer1"], x))
        feats = tape.linear("layer2", self.layers["layer2"], h)
        value = tape.linear("value", self.layers["value"], feats)
        if self.single_head:
            return [tape.softmax(tape.linear("head_joint", self.layers["head_joint"], feats))], value
        p_res = tape.softmax(tape.linear("head_res", self.layers["head_res"], feats))
        ext = tape.concat([feats, p_res])
        p_bs = tape.softmax(tape.linear("head_bs", self.layers["head_bs"], ext))
        p_mt = tape.softmax(tape.linear("head_mt", self.layers["head_mt"], ext))
        return [p_res, p_bs, p_mt], value

    def head_indices(self, action: Action) -> tuple[int, ...]:
        if self.single_head:
            return (self.spec.joint_index(action),)
        return action.res_idx, action.bs_idx, action.mt_idx

    # serialization -------------------------------------------------------

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in sorted(self.layers):
            out[f"{name}.weight"] = self.layers[name].weight
            out[f"{name}.bias"] = self.layers[name].bias
        out["spec.res"] = np.array(self.spec.res, dtype=np.int64)
        out["spec.bs"] = np.array(self.spec.bs, dtype=np.int64)
        out["spec.mt"] = np.array(self.spec.mt, dtype=np.int64)
        out["single_head"] = np.array(int(self.single_head), dtype=np.int64)
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "AgentNetwork":
        spec = ActionSpaceSpec(tuple(arrays["spec.res"]), tuple(arrays["spec.bs"]), tuple(arrays["spec.mt"]))
        single = bool(int(arrays["single_head"]))
        names = {k.rsplit(".", 1)[0] for k in arrays if k.endswith(".weight")}
        layers = {n: Linear(np.array(arrays[f"{n}.weight"], dtype=np.float64),
                            np.array(arrays[f"{n}.bias"], dtype=np.float64)) for n in names}
        return cls(layers, spec, single)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        np.savez(buf, **self.to_arrays())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "AgentNetwork":
        with np.load(io.BytesIO(data)) as arrays:
            return cls.from_arrays(dict(arrays))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "AgentNetwork":
        return cls.from_bytes(Path(path).read_bytes())

    def same_parameters(self, other: "AgentNetwork", names=None) -> bool:
        names = self.layers.keys() if names is None else names
        return all(np.array_equal(self.layers[n].weight, other.layers[n].weight)
                   and np.array_equal(self.layers[n].bias, other.layers[n].bias) for n in names)


def decide(net: AgentNetwork, state, rng: np.random.Generator):
    """Sample an action for one state; returns (action, probs per head, value)."""
    out = net.forward(np.asarray(state, dtype=np.float64))
    draws = [categorical_sample(p, rng) for p in out.probs]
    if net.single_head:
        action = net.spec.from_joint(draws[0])
    else:
        action = Action(*draws)
    return action, out.probs, float(out.value)
