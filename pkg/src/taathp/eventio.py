"""Event sequences, the JSONL dataset format, splitting, and Hawkes simulation.

File format (UTF-8, one JSON object per line)::

    {"num_types": 3, "name": "toy"}
    {"events": [{"t": 0.31, "c": 2}, {"t": 1.7, "c": 0}]}
    ...

The first line is the header; every following line is one sequence.

Randomness everywhere comes from numpy's Philox (a 64-bit counter-based
generator) built by :func:`make_rng` from an explicit integer seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MIN_EVENTS = 2


class ValidationError(ValueError):
    pass


def make_rng(*key: int) -> np.random.Generator:
    """Philox generator keyed by a tuple of nonnegative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Strictly increasing, positive timestamps with integer type marks."""

    times: np.ndarray
    types: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        c = np.asarray(self.types, dtype=np.int64).reshape(-1)
        if t.shape != c.shape:
            raise ValidationError(f"{t.size} timestamps but {c.size} types")
        if t.size:
            if not np.isfinite(t).all():
                raise ValidationError("timestamps must be finite")
            if t[0] <= 0:
                raise ValidationError(f"first timestamp must be > 0, got {t[0]}")
            if (np.diff(t) <= 0).any():
                k = int(np.argmax(np.diff(t) <= 0)) + 1
                raise ValidationError(f"timestamps not strictly increasing at event {k}")
            if (c < 0).any():
                raise ValidationError("event types must be nonnegative")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "types", c)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, int]]) -> "EventSequence":
        pairs = list(pairs)
        return cls(np.array([p[0] for p in pairs], dtype=float),
                   np.array([p[1] for p in pairs], dtype=np.int64))

    def __len__(self) -> int:
        return int(self.times.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventSequence):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.types, other.types)

    def __hash__(self):
        return hash((self.times.tobytes(), self.types.tobytes()))

    def pairs(self) -> list[tuple[float, int]]:
        return [(float(t), int(c)) for t, c in zip(self.times, self.types)]

    def shifted(self, offset: float) -> "EventSequence":
        return EventSequence(self.times + offset, self.types)


@dataclass(frozen=True)
class Dataset:
    sequences: tuple[EventSequence, ...]
    num_types: int
    name: str = "dataset"

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        top = max((int(s.types.max()) for s in self.sequences if len(s)), default=-1)
        if top >= self.num_types:
            raise ValidationError(f"event type {top} >= num_types {self.num_types}")

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def num_events(self) -> int:
        return sum(len(s) for s in self.sequences)

    def subset(self, idx: Sequence[int], name: str | None = None) -> "Dataset":
        return Dataset(tuple(self.sequences[i] for i in idx), self.num_types, name or self.name)


# JSONL ----------------------------------------------------------------------

def _dump_sequence(seq: EventSequence) -> str:
    events = [{"t": float(t), "c": int(c)} for t, c in zip(seq.times, seq.types)]
    return json.dumps({"events": events}, separators=(",", ":"))


def save_jsonl(ds: Dataset, path: str | Path) -> None:
    lines = [json.dumps({"num_types": ds.num_types, "name": ds.name}, separators=(",", ":"))]
    lines += [_dump_sequence(s) for s in ds.sequences]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_jsonl(path: str | Path, name: str | None = None) -> Dataset:
    """Load and validate a dataset; errors cite the 1-based line number."""
    path = Path(path)
    raw = [ln for ln in path.read_text(encoding="utf-8").split("\n")]
    numbered = [(i + 1, ln) for i, ln in enumerate(raw) if ln.strip()]
    if not numbered:
        raise ValidationError(f"{path}: empty file")
    lineno, first = numbered[0]
    try:
        header = json.loads(first)
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}:{lineno}: bad JSON ({err.msg})") from err
    if not isinstance(header, dict) or "num_types" not in header:
        raise ValidationError(f"{path}:{lineno}: first line must be a header with 'num_types'")
    num_types = header["num_types"]
    if not isinstance(num_types, int) or num_types < 1:
        raise ValidationError(f"{path}:{lineno}: num_types must be a positive integer")
    seqs = []
    for lineno, ln in numbered[1:]:
        try:
            obj = json.loads(ln)
            events = obj["events"]
            times = [float(e["t"]) for e in events]
            types = [e["c"] for e in events]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise ValidationError(f"{path}:{lineno}: malformed sequence record ({err})") from err
        if any(not isinstance(c, int) or isinstance(c, bool) for c in types):
            raise ValidationError(f"{path}:{lineno}: event types must be integers")
        if len(times) < MIN_EVENTS:
            raise ValidationError(f"{path}:{lineno}: sequence has {len(times)} events, need >= {MIN_EVENTS}")
        bad = [c for c in types if c >= num_types or c < 0]
        if bad:
            raise ValidationError(f"{path}:{lineno}: event type {bad[0]} outside [0, {num_types})")
        try:
            seqs.append(EventSequence(np.array(times), np.array(types, dtype=np.int64)))
        except ValidationError as err:
            raise ValidationError(f"{path}:{lineno}: {err}") from err
    if not seqs:
        raise ValidationError(f"{path}: no sequences after the header")
    return Dataset(tuple(seqs), num_types, name or header.get("name") or path.stem)


def split(ds: Dataset, ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
          seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle then contiguous train/dev/test partition."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")
    n = len(ds)
    if n < 3:
        raise ValueError(f"need at least 3 sequences to split, got {n}")
    order = make_rng(seed).permutation(n)
    n_train = max(1, int(np.floor(ratios[0] * n + 1e-9)))
    n_dev = max(1, int(np.floor(ratios[1] * n + 1e-9)))
    while n - n_train - n_dev < 1:
        n_train -= 1
    parts = (order[:n_train], order[n_train:n_train + n_dev], order[n_train + n_dev:])
    names = ("train", "dev", "test")
    return tuple(ds.subset(sorted(p.tolist()), f"{ds.name}-{nm}") for p, nm in zip(parts, names))


# Hawkes ground truth ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HawkesGroundTruth:
    """Multivariate Hawkes process with exponential kernels.

    ``alpha[c, k] * exp(-delta[c, k] * s)`` is the excitation of type ``c``
    at lag ``s`` after an event of type ``k``.
    """

    mu: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray = field(default=None)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        c = mu.size
        alpha = np.asarray(self.alpha, dtype=float).reshape(c, c)
        delta = np.ones((c, c)) if self.delta is None else np.asarray(self.delta, dtype=float).reshape(c, c)
        if (mu < 0).any() or (alpha < 0).any():
            raise ValidationError("mu and alpha must be nonnegative")
        if (delta <= 0).any():
            raise ValidationError("delta must be positive")
        radius = float(np.max(np.abs(np.linalg.eigvals(alpha / delta)))) if c else 0.0
        if radius >= 1.0:
            raise ValidationError(f"non-stationary Hawkes process: spectral radius {radius:.4f} >= 1")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "delta", delta)

    @property
    def num_types(self) -> int:
        return self.mu.size

    @property
    def branching_ratio(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.alpha / self.delta))))

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "alpha": self.alpha.tolist(), "delta": self.delta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HawkesGroundTruth":
        return cls(np.array(d["mu"]), np.array(d["alpha"]), np.array(d["delta"]) if "delta" in d else None)

    # intensities ----------------------------------------------------------
    def _excitation_states(self, seq: EventSequence) -> np.ndarray:
        """States R[i] = excitation matrix just after event i (incl. its jump)."""
        n, c = len(seq), self.num_types
        states = np.zeros((n, c, c))
        r = np.zeros((c, c))
        prev = None
        for i, (t, k) in enumerate(zip(seq.times, seq.types)):
            if prev is not None:
                r = r * np.exp(-self.delta * (t - prev))
            r[:, k] += self.alpha[:, k]
            states[i] = r
            prev = t
        return states

    def type_intensity(self, t, seq: EventSequence) -> np.ndarray:
        """Left-continuous-history intensities at times ``t``: shape (..., C)."""
        t = np.asarray(t, dtype=float)
        lam = np.broadcast_to(self.mu, t.shape + (self.num_types,)).copy()
        for tj, k in zip(seq.times, seq.types):
            lag = t - tj
            on = lag > 0
            lam += np.where(on[..., None], self.alpha[:, k] * np.exp(-self.delta[:, k] * np.where(on, lag, 0.0)[..., None]), 0.0)
        return lam

    def piece_intensity(self, seq: EventSequence, u: np.ndarray) -> np.ndarray:
        """Total intensity on interval i (between events i and i+1) at ``u[i]``.

        ``u`` has shape (n-1, M); row i uses the history through event i.
        """
        states = self._excitation_states(seq)[:-1]
        lag = u - seq.times[:-1, None]
        decay = np.exp(-self.delta[None, None, :, :] * lag[:, :, None, None])
        exc = (states[:, None, :, :] * decay).sum(axis=(2, 3))
        return self.mu.sum() + exc


def simulate_thinning(gt: HawkesGroundTruth, horizon: float, rng_seed: int) -> EventSequence:
    """Ogata's modified thinning on (0, horizon].

    Between events the exponential kernels only decay, so the total intensity
    at the current candidate point bounds the intensity until the next event.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = make_rng(rng_seed)
    c = gt.num_types
    r = np.zeros((c, c))
    t = 0.0
    times, types = [], []
    while True:
        lam_bar = gt.mu.sum() + r.sum()
        if lam_bar <= 0:
            break
        gap = rng.exponential(1.0 / lam_bar)
        t_new = t + gap
        if t_new > horizon:
            break
        r = r * np.exp(-gt.delta * gap)
        t = t_new
        lam_c = gt.mu + r.sum(axis=1)
        lam = lam_c.sum()
        if rng.random() * lam_bar <= lam:
            k = int(rng.choice(c, p=lam_c / lam))
            times.append(t)
            types.append(k)
            r[:, k] += gt.alpha[:, k]
    return EventSequence(np.array(times, dtype=float), np.array(types, dtype=np.int64))


def exact_compensator(gt: HawkesGroundTruth, seq: EventSequence, t_end: float) -> float:
    """Closed-form integral of the total intensity over [t_1, t_end]."""
    if len(seq) == 0:
        return 0.0
    t1 = seq.times[0]
    if t_end < seq.times[-1]:
        raise ValueError(f"t_end={t_end} precedes the last event at {seq.times[-1]}")
    total = gt.mu.sum() * (t_end - t1)
    for tj, k in zip(seq.times, seq.types):
        ratio = gt.alpha[:, k] / gt.delta[:, k]
        total += float((ratio * -np.expm1(-gt.delta[:, k] * (t_end - tj))).sum())
    return float(total)


def time_rescaled_gaps(gt: HawkesGroundTruth, seq: EventSequence) -> np.ndarray:
    """Compensator increments between consecutive events (first from time 0).

    Under the true model these are i.i.d. Exp(1).
    """
    n = len(seq)
    out = np.empty(n)
    r = np.zeros((gt.num_types,) * 2)
    prev = 0.0
    for i, (t, k) in enumerate(zip(seq.times, seq.types)):
        gap = t - prev
        out[i] = gt.mu.sum() * gap + float((r / gt.delta * -np.expm1(-gt.delta * gap)).sum())
        r = r * np.exp(-gt.delta * gap)
        r[:, k] += gt.alpha[:, k]
        prev = t
    return out


def simulate_dataset(gt: HawkesGroundTruth, num_sequences: int, horizon: float, seed: int,
                     name: str = "synthetic", min_events: int = MIN_EVENTS) -> Dataset:
    """Simulate ``num_sequences`` sequences, skipping draws shorter than ``min_events``."""
    seqs = []
    draw = 0
    while len(seqs) < num_sequences:
        if draw > 100 * num_sequences + 1000:
            raise RuntimeError("ground truth rarely produces sequences with enough events")
        s = simulate_thinning(gt, horizon, rng_seed=_seq_seed(seed, draw))
        draw += 1
        if len(s) >= min_events:
            seqs.append(s)
    return Dataset(tuple(seqs), gt.num_types, name)


def _seq_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])
