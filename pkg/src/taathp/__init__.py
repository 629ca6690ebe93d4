"""Temporal-attention-augmented transformer Hawkes process on a small numpy autodiff kernel."""

from .config import Integrator, ModelConfig, TrainConfig, resolve_preset
from .eventio import Dataset, EventSequence, HawkesGroundTruth, load_jsonl, save_jsonl, simulate_thinning
from .params import ModelParams

__all__ = [
    "Dataset",
    "EventSequence",
    "HawkesGroundTruth",
    "Integrator",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "load_jsonl",
    "resolve_preset",
    "save_jsonl",
    "simulate_thinning",
]

__version__ = "0.1.0"
