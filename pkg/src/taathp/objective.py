"""Log-likelihood, compensator estimators, prediction losses and the joint objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import numkit as nk
from .config import Integrator, ModelConfig, TrainConfig
from .encoder import encode
from .eventio import EventSequence, make_rng
from .heads import head_outputs
from .intensity import piece_total_intensity, piece_type_intensity
from .numkit import Value

# piece intensity function: u of shape (n-1, M) -> total intensity (n-1, M)
PieceFn = Callable[[np.ndarray], "Value | np.ndarray"]


def integral_mc(times: np.ndarray, lam_fn: PieceFn, samples: int,
                rng: np.random.Generator):
    """Unbiased Monte Carlo compensator over [t_1, t_n], ``samples`` points per interval."""
    if samples < 1:
        raise ValueError(f"Monte Carlo integrator needs samples >= 1, got {samples}")
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise ValueError("compensator needs at least two events")
    dt = np.diff(times)
    u = times[:-1, None] + dt[:, None] * rng.random((dt.size, samples))
    lam = lam_fn(u)
    return (lam.sum(axis=1) * (dt / samples)).sum()


def integral_trapezoid(times: np.ndarray, lam_fn: PieceFn):
    """Trapezoid rule per inter-event interval; both ends use that interval's history."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise ValueError("compensator needs at least two events")
    dt = np.diff(times)
    lam = lam_fn(np.stack([times[:-1], times[1:]], axis=1))
    return ((lam[:, 0] + lam[:, 1]) * (dt / 2.0)).sum()


def compensator(times: np.ndarray, lam_fn: PieceFn, integrator: Integrator,
                rng: np.random.Generator | None = None):
    if integrator.kind == "trapezoid":
        return integral_trapezoid(times, lam_fn)
    if rng is None:
        raise ValueError("Monte Carlo integrator needs an rng")
    return integral_mc(times, lam_fn, integrator.samples, rng)


def neural_piece_fn(seq: EventSequence, H: Value, P: Mapping[str, Value], beta: float) -> PieceFn:
    h_prev = H[:-1]
    t_prev = seq.times[:-1]
    return lambda u: piece_total_intensity(h_prev, t_prev, u, P, beta)


def event_intensities(seq: EventSequence, H: Value, P: Mapping[str, Value],
                      cfg: ModelConfig, include_first: bool | None = None) -> Value:
    """Intensity scored at each event (first event optional), history strictly before it.

    The first event has no history; it is scored with its own state at t_1.
    """
    if include_first is None:
        include_first = cfg.include_first_event
    t = seq.times
    rows = []
    if len(seq) > 1:
        rows.append(piece_type_intensity(H[:-1], t[:-1], t[1:, None], P, cfg.beta)[:, 0, :])
    if include_first:
        rows.insert(0, piece_type_intensity(H[0:1], t[0:1], t[0:1, None], P, cfg.beta)[:, 0, :])
    lam = nk.concat(rows, axis=0)
    if cfg.event_term == "typed":
        types = seq.types if include_first else seq.types[1:]
        return lam[np.arange(lam.shape[0]), types]
    return lam.sum(axis=1)


def log_likelihood(seq: EventSequence, H: Value, P: Mapping[str, Value], cfg: ModelConfig,
                   integrator: Integrator = Integrator(), rng: np.random.Generator | None = None,
                   include_first: bool | None = None) -> Value:
    """Sum of log event intensities minus the estimated compensator on [t_1, t_n]."""
    if len(seq) < 2:
        raise ValueError("log-likelihood needs a sequence with at least two events")
    event_term = nk.log(event_intensities(seq, H, P, cfg, include_first)).sum()
    comp = compensator(seq.times, neural_piece_fn(seq, H, P, cfg.beta), integrator, rng)
    return event_term - comp


def time_loss(times: np.ndarray, t_hat) -> Value:
    """Squared error of predicted times for events 2..n."""
    times = np.asarray(times, dtype=float)
    err = nk.as_value(t_hat) - times[1:]
    return (err * err).sum()


def type_loss(types: np.ndarray, p_hat) -> Value:
    """Cross-entropy of predicted distributions (rows for events 2..n)."""
    types = np.asarray(types, dtype=np.int64)[1:]
    p = nk.as_value(p_hat)
    return -nk.log_clamped(p[np.arange(types.size), types]).sum()


@dataclass
class SequenceTerms:
    loss: Value
    loglik: float
    time_loss: float
    type_loss: float
    n_events: int


def sequence_objective(seq: EventSequence, P: Mapping[str, Value], cfg: ModelConfig,
                       tcfg: TrainConfig, rng: np.random.Generator | None = None,
                       train: bool = False) -> SequenceTerms:
    """-L(s) + alpha_type * L_type + alpha_time * L_time for one sequence."""
    H = encode(seq, P, cfg, train=train, rng=rng)
    ll = log_likelihood(seq, H, P, cfg, tcfg.integrator, rng)
    t_hat, p_hat = head_outputs(H[:-1], P["heads.W_time"], P["heads.W_type"])
    lt = time_loss(seq.times, t_hat)
    lc = type_loss(seq.types, p_hat)
    loss = -ll
    if tcfg.alpha_type:
        loss = loss + tcfg.alpha_type * lc
    if tcfg.alpha_time:
        loss = loss + tcfg.alpha_time * lt
    return SequenceTerms(loss, float(ll.data), float(lt.data), float(lc.data), len(seq))


def objective(batch: Sequence[EventSequence], P: Mapping[str, Value], cfg: ModelConfig,
              tcfg: TrainConfig, seed: int = 0, train: bool = False) -> Value:
    """Joint objective summed over a batch; sequence k draws from stream (seed, k)."""
    if not batch:
        raise ValueError("objective needs a nonempty batch")
    total = None
    for k, seq in enumerate(batch):
        term = sequence_objective(seq, P, cfg, tcfg, make_rng(seed, k), train).loss
        total = term if total is None else total + term
    return total
