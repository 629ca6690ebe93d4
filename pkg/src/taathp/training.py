"""Mini-batch ADAM training with best-dev selection."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ModelConfig, TrainConfig
from .eventio import Dataset, EventSequence, make_rng
from .evalpred import evaluate
from .numkit import NumericsError, backward
from .objective import sequence_objective
from .params import ModelParams, frozen_names

log = logging.getLogger(__name__)

TRAIN_STREAM = 7_000
SHUFFLE_STREAM = 7_002


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, step: int, detail: str = ""):
        super().__init__(f"training diverged at epoch {epoch}, step {step}" + (f": {detail}" if detail else ""))
        self.epoch = epoch
        self.step = step


class Adam:
    """ADAM with bias correction and optional L2 weight decay added to the gradient."""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``arrays`` in place from ``grads`` (names absent from grads are left alone)."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = arrays[name]
            if self.weight_decay:
                g = g + self.weight_decay * p
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class EpochRecord:
    epoch: int
    train_nll_per_event: float
    dev_nll_per_event: float
    dev_accuracy: float
    dev_rmse: float
    wall_time: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self) -> int:
        return len(self.epochs)

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.epochs]

    def to_dict(self) -> dict:
        return {"best_epoch": self.best_epoch, "epochs": [asdict(r) for r in self.epochs]}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        return cls([EpochRecord(**r) for r in d["epochs"]], d.get("best_epoch", -1))

    def without_timing(self) -> dict:
        d = self.to_dict()
        for r in d["epochs"]:
            r.pop("wall_time")
        return d

    def to_csv(self) -> str:
        cols = ["epoch", "train_nll_per_event", "dev_nll_per_event", "dev_accuracy", "dev_rmse"]
        lines = [",".join(cols)]
        for r in self.epochs:
            lines.append(",".join(repr(getattr(r, c)) if c != "epoch" else str(r.epoch) for c in cols))
        return "\n".join(lines) + "\n"


def sequence_gradients(seq: EventSequence, params: ModelParams, tcfg: TrainConfig,
                       rng: np.random.Generator, train: bool = True):
    """(loss, -loglik, n_events, grads) for one sequence on a private graph."""
    P = params.leaves()
    terms = sequence_objective(seq, P, params.config, tcfg, rng=rng, train=train)
    backward(terms.loss)
    grads = {n: v.grad for n, v in P.items() if v.requires_grad}
    return float(terms.loss.data), -terms.loglik, terms.n_events, grads


def train(train_ds: Dataset, dev_ds: Dataset | None, model_cfg: ModelConfig, tcfg: TrainConfig,
          init: ModelParams | None = None, threads: int = 1,
          eval_integrator=None) -> tuple[ModelParams, TrainHistory]:
    """Fit by mini-batch ADAM; returns the parameters of the best dev-NLL epoch.

    Sequence k of epoch e draws dropout and Monte Carlo samples from Philox
    stream (seed, TRAIN_STREAM, e, k), so results are independent of the
    thread count.  Without a dev set, the epoch's train NLL selects.
    """
    if len(train_ds) == 0:
        raise ValueError("empty training set")
    params = init.copy() if init is not None else ModelParams.init(model_cfg, tcfg.seed)
    if params.config != model_cfg:
        raise ValueError("initial parameters were built for a different model config")
    frozen = frozen_names(model_cfg)
    opt = Adam(tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps, tcfg.weight_decay)
    integ = eval_integrator or tcfg.integrator
    history = TrainHistory()
    best_nll, best = np.inf, params.copy()
    shuffler = make_rng(tcfg.seed, SHUFFLE_STREAM)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    step = 0
    try:
        for epoch in range(tcfg.epochs):
            start = time.perf_counter()
            order = shuffler.permutation(len(train_ds))
            nll_sum, ev_sum = 0.0, 0
            for b0 in range(0, len(order), tcfg.batch_size):
                idx = order[b0:b0 + tcfg.batch_size]

                def job(k, _epoch=epoch):
                    return sequence_gradients(train_ds.sequences[idx[k]], params, tcfg,
                                              make_rng(tcfg.seed, TRAIN_STREAM, _epoch, b0 + k))

                try:
                    results = list(pool.map(job, range(len(idx)))) if pool else [job(k) for k in range(len(idx))]
                except NumericsError as err:
                    raise TrainingDivergence(epoch, step, str(err)) from err
                grads = {n: sum(r[3][n] for r in results) for n in results[0][3] if n not in frozen}
                loss = sum(r[0] for r in results)
                if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                    raise TrainingDivergence(epoch, step, "non-finite loss or gradient")
                nll_sum += sum(r[1] for r in results)
                ev_sum += sum(r[2] for r in results)
                clip_global_norm(grads, tcfg.clip_norm)
                opt.step(params.arrays, grads)
                step += 1
            train_nll = nll_sum / ev_sum
            if dev_ds is not None and len(dev_ds):
                rep = evaluate(dev_ds, params, integ, seed=tcfg.seed, threads=threads)
                dev = (-rep.loglike_per_event, rep.accuracy, rep.rmse)
            else:
                dev = (float("nan"),) * 3
            history.epochs.append(EpochRecord(epoch, train_nll, *dev, time.perf_counter() - start))
            select = dev[0] if np.isfinite(dev[0]) else train_nll
            if select < best_nll:
                best_nll, best = select, params.copy()
                history.best_epoch = epoch
            log.info("epoch %d train_nll %.5f dev_nll %.5f acc %.4f rmse %.4f",
                     epoch, train_nll, dev[0], dev[1], dev[2])
    finally:
        if pool:
            pool.shutdown()
    if tcfg.epochs == 0:
        best = params
    return best, history


def history_json(history: TrainHistory) -> str:
    return json.dumps(history.to_dict(), sort_keys=True, indent=2)
