"""Linear next-event prediction heads on hidden states."""

from __future__ import annotations

import numpy as np

from . import numkit as nk
from .numkit import Value


def head_outputs(H: Value, W_time: Value, W_type: Value) -> tuple[Value, Value]:
    """Predicted next times (K,) and type distributions (K, C) for rows of ``H``."""
    t_hat = (H @ W_time.T).reshape(H.shape[0])
    p_hat = nk.softmax_rows(H @ W_type.T)
    return t_hat, p_hat


def predict_next(h, W_time, W_type) -> tuple[float, np.ndarray, int]:
    """Next-event time, type distribution and argmax type from one hidden state.

    Ties in the argmax go to the smallest type index.
    """
    h = np.asarray(h.data if isinstance(h, Value) else h, dtype=float).reshape(1, -1)
    W_time = np.asarray(W_time, dtype=float).reshape(1, -1)
    W_type = np.asarray(W_type, dtype=float)
    if h.shape[1] != W_time.shape[1] or W_type.shape[1] != h.shape[1]:
        raise nk.DimensionError(f"hidden size {h.shape[1]} does not match heads "
                                f"{W_time.shape} / {W_type.shape}")
    t_hat, p_hat = head_outputs(nk.as_value(h), nk.as_value(W_time), nk.as_value(W_type))
    p = p_hat.data[0]
    return float(t_hat.data[0]), p, int(np.argmax(p))
