"""Temporal-augmented versus biased attention on identical data and seeds."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .config import ModelConfig, TrainConfig
from .eventio import Dataset
from .evalpred import MetricsReport, evaluate
from .training import TrainHistory, train

METRICS = ("accuracy", "rmse", "loglike_per_event")


@dataclass
class AblationReport:
    biased: MetricsReport
    taa: MetricsReport
    histories: dict[str, TrainHistory]

    def table(self) -> dict[str, dict[str, float]]:
        """{metric: {"biased": x, "taa": y}} for Accuracy, RMSE and Loglike."""
        return {m: {"biased": getattr(self.biased, m), "taa": getattr(self.taa, m)} for m in METRICS}

    def delta(self) -> dict[str, float]:
        return {m: getattr(self.taa, m) - getattr(self.biased, m) for m in METRICS}

    def to_dict(self) -> dict:
        return {"reports": [self.biased.to_dict(), self.taa.to_dict()], "delta": self.delta()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def validate_ablation_json(obj: dict) -> None:
    """Raise ValueError unless ``obj`` has two variant reports and a delta block."""
    reports = obj.get("reports")
    if not isinstance(reports, list) or len(reports) != 2:
        raise ValueError("ablation report needs exactly two variant reports")
    if sorted(r.get("variant") for r in reports) != ["biased", "taa"]:
        raise ValueError("ablation reports must cover variants 'biased' and 'taa'")
    for r in reports:
        missing = [m for m in METRICS if not isinstance(r.get(m), (int, float))]
        if missing:
            raise ValueError(f"report for {r.get('variant')} lacks {missing}")
    if set(obj.get("delta", {})) != set(METRICS):
        raise ValueError("delta block must have exactly the three ablation metrics")


def ablate(train_ds: Dataset, dev_ds: Dataset | None, test_ds: Dataset, model_cfg: ModelConfig,
           tcfg: TrainConfig, eval_integrator=None, threads: int = 1) -> AblationReport:
    """Train both attention variants (same seeds, same data order) and evaluate on test."""
    reports, histories = {}, {}
    for variant in ("biased", "taa"):
        cfg = replace(model_cfg, variant=variant)
        params, hist = train(train_ds, dev_ds, cfg, tcfg, threads=threads, eval_integrator=eval_integrator)
        reports[variant] = evaluate(test_ds, params, eval_integrator or tcfg.integrator,
                                    seed=tcfg.seed, threads=threads)
        histories[variant] = hist
    return AblationReport(reports["biased"], reports["taa"], histories)
