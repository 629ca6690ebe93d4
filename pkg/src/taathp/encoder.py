"""Event sequence -> hidden states ``H`` (one row per event).

Layer input is ``S + X`` where ``X`` holds the temporal encodings; attention
scores get an extra term that compares queries against a linear map of ``X``
(``variant="taa"``), or omit it (``variant="biased"``).  Sublayers use
post-LN: ``LN(S + dropout(sublayer(S)))``.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import numkit as nk
from .config import ModelConfig
from .eventio import EventSequence
from .numkit import Value
from .params import CONV_CHANNELS


def temporal_encoding(t, d: int) -> np.ndarray:
    """Sinusoidal encoding; 1-based component j is cos(t/10000^((j-1)/d)) for
    odd j and sin(t/10000^(j/d)) for even j.  Returns shape (len(t), d)."""
    if d < 2 or d % 2:
        raise ValueError(f"temporal encoding dimension must be even and >= 2, got {d}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    j = np.arange(1, d + 1)
    expo = np.where(j % 2 == 1, j - 1, j) / d
    angle = t[:, None] / np.power(10000.0, expo)[None, :]
    return np.where(j % 2 == 1, np.cos(angle), np.sin(angle))


def embed_events(types: np.ndarray, E: Value) -> Value:
    """Row i is column ``types[i]`` of ``E`` (one-hot product as a gather)."""
    types = np.asarray(types, dtype=np.int64)
    c = E.shape[1]
    if types.size and (types.min() < 0 or types.max() >= c):
        raise IndexError(f"event type outside [0, {c})")
    return E.T[types]


def attention_head(S: Value, X, W_Q: Value, W_K: Value, W_V: Value, b_lq: Value,
                   W_Tem: Value | None = None, b_lt: Value | None = None,
                   variant: str = "taa", return_weights: bool = False):
    if S.shape[0] != np.shape(X)[0]:
        raise nk.DimensionError(f"state has {S.shape[0]} rows but temporal encoding has {np.shape(X)[0]}")
    q = S @ W_Q
    k = S @ W_K
    v = S @ W_V
    scores = (q + b_lq) @ k.T
    if variant == "taa":
        if W_Tem is None or b_lt is None:
            raise ValueError("temporal-augmented attention needs W_Tem and b_lt")
        scores = scores + (q + b_lt) @ (nk.as_value(X) @ W_Tem).T
    elif variant != "biased":
        raise ValueError(f"unknown attention variant {variant!r}")
    weights = nk.masked_softmax_rows(scores * (1.0 / np.sqrt(W_Q.shape[1])))
    out = weights @ v
    return (out, weights) if return_weights else out


def multi_head(heads: list[Value], W_multi: Value) -> Value:
    if not heads:
        raise nk.DimensionError("multi_head needs at least one head")
    width = sum(h.shape[1] for h in heads)
    if W_multi.shape[0] != width:
        raise nk.DimensionError(f"W_multi has {W_multi.shape[0]} rows but heads concatenate to {width}")
    return nk.concat(heads, axis=1) @ W_multi


def feed_forward(A: Value, P: Mapping[str, Value], pre: str) -> Value:
    """ReLU(A W1 + b1) -> per-position conv block -> flatten -> W2 + b2."""
    inner = nk.relu(A @ P[f"{pre}.ffn.W1"] + P[f"{pre}.ffn.b1"])
    pooled = nk.conv1d_relu_maxpool(inner, P[f"{pre}.ffn.conv"])
    n = pooled.shape[0]
    flat = pooled.reshape(n, CONV_CHANNELS * pooled.shape[2])
    return flat @ P[f"{pre}.ffn.W2"] + P[f"{pre}.ffn.b2"]


def encoder_layer(S: Value, X: np.ndarray, P: Mapping[str, Value], layer: int,
                  cfg: ModelConfig, train: bool = False,
                  rng: np.random.Generator | None = None) -> Value:
    pre = f"layer{layer}"
    heads = []
    for h in range(cfg.n_heads):
        hp = f"{pre}.head{h}"
        heads.append(attention_head(
            S, X, P[f"{hp}.W_Q"], P[f"{hp}.W_K"], P[f"{hp}.W_V"], P[f"{hp}.b_lq"],
            P.get(f"{hp}.W_Tem"), P.get(f"{hp}.b_lt"), variant=cfg.variant))
    att = multi_head(heads, P[f"{pre}.W_multi"])
    A = nk.layer_norm(S + nk.dropout(att, cfg.dropout, rng, train),
                      P[f"{pre}.ln1.gain"], P[f"{pre}.ln1.bias"])
    ff = feed_forward(A, P, pre)
    return nk.layer_norm(A + nk.dropout(ff, cfg.dropout, rng, train),
                         P[f"{pre}.ln2.gain"], P[f"{pre}.ln2.bias"])


def _lstm(x: Value, P: Mapping[str, Value], r: int) -> Value:
    h = nk.as_value(np.zeros((1, r)))
    c = nk.as_value(np.zeros((1, r)))
    xg = x @ P["post.rnn.W_x"] + P["post.rnn.b_x"]
    outs = []
    for i in range(x.shape[0]):
        g = xg[i:i + 1] + h @ P["post.rnn.W_h"] + P["post.rnn.b_h"]
        ig = nk.sigmoid(g[:, :r])
        fg = nk.sigmoid(g[:, r:2 * r])
        cand = nk.tanh(g[:, 2 * r:3 * r])
        og = nk.sigmoid(g[:, 3 * r:])
        c = fg * c + ig * cand
        h = og * nk.tanh(c)
        outs.append(h)
    return nk.concat(outs, axis=0)


def _gru(x: Value, P: Mapping[str, Value], r: int) -> Value:
    h = nk.as_value(np.zeros((1, r)))
    xg = x @ P["post.rnn.W_x"] + P["post.rnn.b_x"]
    outs = []
    for i in range(x.shape[0]):
        xi = xg[i:i + 1]
        hg = h @ P["post.rnn.W_h"] + P["post.rnn.b_h"]
        z = nk.sigmoid(xi[:, :r] + hg[:, :r])
        rr = nk.sigmoid(xi[:, r:2 * r] + hg[:, r:2 * r])
        cand = nk.tanh(xi[:, 2 * r:] + rr * hg[:, 2 * r:])
        h = (1.0 - z) * cand + z * h
        outs.append(h)
    return nk.concat(outs, axis=0)


def post_process(H: Value, P: Mapping[str, Value], cfg: ModelConfig) -> Value:
    """``RNN(ReLU(H W3 + b3)) W4 + b4``; keeps the width ``d_model``."""
    x = nk.relu(H @ P["post.W3"] + P["post.b3"])
    cell = _lstm if cfg.rnn_cell == "lstm" else _gru
    return cell(x, P, cfg.d_rnn) @ P["post.W4"] + P["post.b4"]


def encode(seq: EventSequence, P: Mapping[str, Value], cfg: ModelConfig,
           train: bool = False, rng: np.random.Generator | None = None,
           trace: list | None = None) -> Value:
    """Hidden states ``H`` with shape (len(seq), d_model).

    If ``trace`` is a list, one entry per layer is appended when the
    temporal encoding is added to that layer's input.
    """
    X = temporal_encoding(seq.times, cfg.d_model)
    S = embed_events(seq.types, P["E"])
    for layer in range(cfg.n_layers):
        S = S + X
        if trace is not None:
            trace.append(("temporal_encoding_added", layer))
        S = encoder_layer(S, X, P, layer, cfg, train=train, rng=rng)
    if cfg.d_rnn > 0:
        S = post_process(S, P, cfg)
    return S
