"""Conditional intensities from hidden states.

On ``[t_i, t_{i+1})`` the type-c intensity is

    softplus_beta(b_c + alpha_c * (t - t_i) / t_i + w_c . h(t_i)),
    alpha_c = w_alpha_c . h(t_i)

so only the latest event's hidden state and timestamp enter.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import numkit as nk
from .eventio import EventSequence
from .numkit import Value


class DomainError(ValueError):
    pass


def piece_type_intensity(h: Value, t_ref: np.ndarray, t: np.ndarray,
                         P: Mapping[str, Value], beta: float) -> Value:
    """Per-type intensities for rows of ``h`` evaluated at ``t``.

    ``h`` is (K, D); ``t_ref`` is (K,) with the anchoring event times; ``t``
    is (K, M).  Returns (K, M, C).
    """
    t_ref = np.asarray(t_ref, dtype=float)
    t = np.asarray(t, dtype=float)
    frac = ((t - t_ref[:, None]) / t_ref[:, None])[:, :, None]
    alpha = (h @ P["intensity.w_alpha"].T).reshape(h.shape[0], 1, -1)
    base = (h @ P["intensity.w"].T + P["intensity.b"]).reshape(h.shape[0], 1, -1)
    return nk.softplus(base + alpha * frac, beta)


def piece_total_intensity(h: Value, t_ref: np.ndarray, t: np.ndarray,
                          P: Mapping[str, Value], beta: float) -> Value:
    return piece_type_intensity(h, t_ref, t, P, beta).sum(axis=2)


def _params_as_values(params) -> Mapping[str, Value]:
    return {k: nk.as_value(v) for k, v in params.items() if k.startswith("intensity.")}


def _anchor(t: np.ndarray, seq: EventSequence) -> np.ndarray:
    if (t < seq.times[0]).any():
        raise DomainError(f"intensity undefined before the first event at t={seq.times[0]}")
    return np.searchsorted(seq.times, t, side="right") - 1


def lambda_all(t, seq: EventSequence, H, params, beta: float = 1.0) -> np.ndarray:
    """Per-type intensities at times ``t`` (any shape) -> shape t.shape + (C,).

    ``params`` maps parameter names to arrays (or Values); ``H`` is the
    encoder output for ``seq``.
    """
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1)
    idx = _anchor(flat, seq)
    Hd = H.data if isinstance(H, Value) else np.asarray(H)
    P = _params_as_values(params)
    lam = piece_type_intensity(nk.as_value(Hd[idx]), seq.times[idx], flat[:, None], P, beta)
    return lam.data[:, 0, :].reshape(t.shape + (-1,))


def lambda_c(c: int, t, seq: EventSequence, H, params, beta: float = 1.0):
    out = lambda_all(t, seq, H, params, beta)[..., c]
    return float(out) if out.ndim == 0 else out


def lambda_total(t, seq: EventSequence, H, params, beta: float = 1.0):
    out = lambda_all(t, seq, H, params, beta).sum(axis=-1)
    return float(out) if out.ndim == 0 else out
