"""Evaluation protocol: per-event log-likelihood, next-type accuracy, next-time RMSE.

The first event of each sequence is never a prediction target, so a
sequence of length n contributes n - 1 predictions.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import Integrator
from .eventio import Dataset, EventSequence, make_rng
from .encoder import encode
from .heads import head_outputs, predict_next  # noqa: F401  (re-exported)
from .objective import log_likelihood
from .params import ModelParams

EVAL_STREAM = 7_001


@dataclass
class MetricsReport:
    loglike_per_event: float
    accuracy: float
    rmse: float
    n_predictions: int
    variant: str
    dataset: str
    seed: int
    integrator: str = "mc:100"
    loglike_per_sequence: float = 0.0
    loglike_trapezoid_per_event: float = 0.0
    n_events: int = 0
    n_sequences: int = 0
    n_correct: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


@dataclass
class _SeqEval:
    loglik: float
    loglik_trap: float
    n_events: int
    correct: int
    sq_err: float
    n_pred: int


def _eval_sequence(seq: EventSequence, idx: int, params: ModelParams, integrator: Integrator,
                   seed: int) -> _SeqEval:
    cfg = params.config
    P = params.leaves(requires_grad=False)
    H = encode(seq, P, cfg, train=False)
    rng = make_rng(seed, EVAL_STREAM, idx) if integrator.kind == "mc" else None
    ll = float(log_likelihood(seq, H, P, cfg, integrator, rng).data)
    if integrator.kind == "trapezoid":
        ll_trap = ll
    else:
        ll_trap = float(log_likelihood(seq, H, P, cfg, Integrator("trapezoid", 0)).data)
    t_hat, p_hat = head_outputs(H[:-1], P["heads.W_time"], P["heads.W_type"])
    pred = np.argmax(p_hat.data, axis=1)
    correct = int((pred == seq.types[1:]).sum())
    sq = float(((t_hat.data - seq.times[1:]) ** 2).sum())
    return _SeqEval(ll, ll_trap, len(seq), correct, sq, len(seq) - 1)


def evaluate(dataset: Dataset, params: ModelParams, integrator: Integrator = Integrator("mc", 100),
             seed: int = 0, threads: int = 1) -> MetricsReport:
    """Metrics over ``dataset`` with dropout off.

    Monte Carlo sequence i uses Philox stream (seed, EVAL_STREAM, i), so
    results do not depend on ``threads``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    jobs = list(enumerate(dataset.sequences))
    run = lambda job: _eval_sequence(job[1], job[0], params, integrator, seed)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    n_events = sum(p.n_events for p in parts)
    n_pred = sum(p.n_pred for p in parts)
    correct = sum(p.correct for p in parts)
    ll = sum(p.loglik for p in parts)
    return MetricsReport(
        loglike_per_event=ll / n_events,
        accuracy=correct / n_pred,
        rmse=float(np.sqrt(sum(p.sq_err for p in parts) / n_pred)),
        n_predictions=n_pred,
        variant=params.config.variant,
        dataset=dataset.name,
        seed=seed,
        integrator=str(integrator),
        loglike_per_sequence=ll / len(parts),
        loglike_trapezoid_per_event=sum(p.loglik_trap for p in parts) / n_events,
        n_events=n_events,
        n_sequences=len(parts),
        n_correct=correct,
    )


def classification_metrics(pred_types, true_types, pred_times, true_times) -> tuple[float, float]:
    """(accuracy, RMSE) for flat prediction arrays."""
    pred_types, true_types = np.asarray(pred_types), np.asarray(true_types)
    err = np.asarray(pred_times, dtype=float) - np.asarray(true_times, dtype=float)
    if pred_types.size == 0:
        raise ValueError("no predictions")
    return float((pred_types == true_types).mean()), float(np.sqrt((err ** 2).mean()))


@dataclass
class PoissonBaseline:
    """Homogeneous Poisson process fit by maximum likelihood."""

    rates: np.ndarray
    event_term: str = "total"
    include_first_event: bool = True

    @classmethod
    def fit(cls, ds: Dataset, event_term: str = "total", include_first_event: bool = True) -> "PoissonBaseline":
        span = sum(float(s.times[-1] - s.times[0]) for s in ds)
        if event_term == "typed":
            counts = np.zeros(ds.num_types)
            for s in ds:
                types = s.types if include_first_event else s.types[1:]
                counts += np.bincount(types, minlength=ds.num_types)
            # the total rate is what the compensator sees, split by type frequency
            rates = counts / span
        else:
            n = sum(len(s) - (0 if include_first_event else 1) for s in ds)
            rates = np.array([n / span])
        return cls(rates, event_term, include_first_event)

    def loglike(self, seq: EventSequence) -> float:
        total = float(self.rates.sum())
        t = seq.types if self.include_first_event else seq.types[1:]
        if self.event_term == "typed":
            with np.errstate(divide="ignore"):
                logs = np.log(self.rates[t])
            ev = float(logs.sum())
        else:
            ev = t.size * np.log(total)
        return ev - total * float(seq.times[-1] - seq.times[0])

    def loglike_per_event(self, ds: Dataset) -> float:
        return sum(self.loglike(s) for s in ds) / ds.num_events
