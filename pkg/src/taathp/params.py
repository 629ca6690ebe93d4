"""Learnable arrays of a TAA-THP model, keyed by dotted names."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .eventio import make_rng
from .numkit import Value, conv_output_length

CONV_CHANNELS = 4
CONV_KERNEL = 3


def flat_conv_dim(d_hidden: int) -> int:
    return CONV_CHANNELS * conv_output_length(d_hidden, CONV_KERNEL)[1]


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name and shape for ``cfg``, in a fixed order."""
    d, c, dk, dv, dh = cfg.d_model, cfg.num_types, cfg.d_k, cfg.d_v, cfg.d_hidden
    shapes: dict[str, tuple[int, ...]] = {"E": (d, c)}
    for layer in range(cfg.n_layers):
        pre = f"layer{layer}"
        for h in range(cfg.n_heads):
            hp = f"{pre}.head{h}"
            shapes[f"{hp}.W_Q"] = (d, dk)
            shapes[f"{hp}.W_K"] = (d, dk)
            shapes[f"{hp}.W_V"] = (d, dv)
            shapes[f"{hp}.b_lq"] = (dk,)
            if cfg.variant == "taa":
                shapes[f"{hp}.W_Tem"] = (d, dk)
                shapes[f"{hp}.b_lt"] = (dk,)
        shapes[f"{pre}.W_multi"] = (cfg.n_heads * dv, d)
        shapes[f"{pre}.ln1.gain"] = (d,)
        shapes[f"{pre}.ln1.bias"] = (d,)
        shapes[f"{pre}.ffn.W1"] = (d, dh)
        shapes[f"{pre}.ffn.b1"] = (dh,)
        shapes[f"{pre}.ffn.conv"] = (CONV_CHANNELS, CONV_KERNEL)
        shapes[f"{pre}.ffn.W2"] = (flat_conv_dim(dh), d)
        shapes[f"{pre}.ffn.b2"] = (d,)
        shapes[f"{pre}.ln2.gain"] = (d,)
        shapes[f"{pre}.ln2.bias"] = (d,)
    if cfg.d_rnn > 0:
        r = cfg.d_rnn
        gates = 4 if cfg.rnn_cell == "lstm" else 3
        shapes["post.W3"] = (d, r)
        shapes["post.b3"] = (r,)
        shapes["post.rnn.W_x"] = (r, gates * r)
        shapes["post.rnn.W_h"] = (r, gates * r)
        shapes["post.rnn.b_x"] = (gates * r,)
        shapes["post.rnn.b_h"] = (gates * r,)
        shapes["post.W4"] = (r, d)
        shapes["post.b4"] = (d,)
    shapes["intensity.b"] = (c,)
    shapes["intensity.w_alpha"] = (c, d)
    shapes["intensity.w"] = (c, d)
    shapes["heads.W_time"] = (1, d)
    shapes["heads.W_type"] = (c, d)
    return shapes


def frozen_names(cfg: ModelConfig) -> set[str]:
    if cfg.variant == "taa" and cfg.freeze_w_tem:
        return {n for n in parameter_shapes(cfg) if n.endswith(".W_Tem")}
    return set()


def _init_array(name: str, shape: tuple[int, ...], seed: int, cfg: ModelConfig) -> np.ndarray:
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "gain":
        return np.ones(shape)
    if leaf.startswith("b") or (leaf == "W_Tem" and cfg.freeze_w_tem):
        return np.zeros(shape)
    # one stream per name, so shared parameters match across variants
    rng = make_rng(seed, zlib.crc32(name.encode()))
    if name == "E":
        return rng.normal(0.0, 1.0, shape)
    if leaf == "conv":
        bound = 1.0 / np.sqrt(CONV_KERNEL)
        return rng.uniform(-bound, bound, shape)
    fan_in, fan_out = (shape[0], shape[1]) if not name.startswith(("intensity", "heads")) else (shape[1], shape[0])
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray]

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        arrays = {n: _init_array(n, s, seed, config) for n, s in parameter_shapes(config).items()}
        return cls(config, arrays)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def leaves(self, requires_grad: bool = True) -> dict[str, Value]:
        """Fresh graph leaves wrapping (not copying) the arrays."""
        frozen = frozen_names(self.config)
        return {n: Value(a, requires_grad=requires_grad and n not in frozen)
                for n, a in self.arrays.items()}

    def num_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]
