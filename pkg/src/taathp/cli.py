"""Command-line entry point: ``taathp {simulate,train,eval,ablate,print-config}``.

Every command reads one YAML config (see ``taathp print-config`` for all
keys and defaults).  Outputs go to ``--out DIR``.  Apart from ``run.json``,
which records wall-clock metadata, every artifact is a pure function of the
config, the seed and the input files.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import jsonschema
import yaml

from .ablation import ablate, validate_ablation_json
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import PRESETS, ConfigError, Integrator, ModelConfig, TrainConfig, resolve_preset
from .eventio import (Dataset, HawkesGroundTruth, ValidationError, load_jsonl, save_jsonl,
                      simulate_dataset, split)
from .evalpred import MetricsReport, evaluate
from .training import TrainHistory, TrainingDivergence, train

log = logging.getLogger("taathp")

DEFAULTS: dict = {
    "seed": 0,
    "threads": 1,
    "model": {"preset": "desk", **{k: v for k, v in ModelConfig().to_dict().items()
                                   if k not in PRESETS["desk"]}},
    "train": {k: v for k, v in TrainConfig().to_dict().items() if k != "seed"},
    "eval": {"integrator": "mc:100", "split": "test"},
    "data": {"dataset": "data.jsonl", "train": None, "dev": None, "test": None,
             "ratios": [0.6, 0.2, 0.2], "split_seed": None, "checkpoint": None},
    "simulate": {"mu": [0.15, 0.15], "alpha": [[0.6, 0.1], [0.1, 0.6]],
                 "delta": [[1.0, 1.0], [1.0, 1.0]], "horizon": 65.0,
                 "num_sequences": 200, "name": "synthetic"},
}
DEFAULTS["model"]["num_types"] = None  # null -> taken from the dataset header
DEFAULTS["train"]["batch_size"] = None  # null -> the preset's batch size

_num = {"type": "number"}
_int = {"type": "integer"}
_path = {"type": ["string", "null"]}
SCHEMA: dict = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"type": "string"},
                "num_types": {"type": ["integer", "null"], "minimum": 1},
                "d_model": _int, "d_hidden": _int, "d_k": _int, "n_heads": _int,
                "n_layers": _int, "d_rnn": _int,
                "rnn_cell": {"enum": ["lstm", "gru"]},
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "variant": {"enum": ["taa", "biased"]},
                "freeze_w_tem": {"type": "boolean"},
                "include_first_event": {"type": "boolean"},
                "event_term": {"enum": ["total", "typed"]},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha_time": {"type": "number", "minimum": 0},
                "alpha_type": {"type": "number", "minimum": 0},
                "integrator": {"type": "string", "pattern": "^(trapezoid|mc(:[0-9]+)?)$"},
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": ["integer", "null"], "minimum": 1},
                "lr": {"type": "number", "minimum": 0},
                "beta1": _num, "beta2": _num,
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "weight_decay": {"type": "number", "minimum": 0},
                "clip_norm": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "integrator": {"type": "string", "pattern": "^(trapezoid|mc(:[0-9]+)?)$"},
                "split": {"enum": ["train", "dev", "test"]},
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dataset": _path, "train": _path, "dev": _path, "test": _path,
                "checkpoint": _path,
                "ratios": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "split_seed": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "alpha": {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                "delta": {"type": "array", "items": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "num_sequences": {"type": "integer", "minimum": 1},
                "name": {"type": "string"},
            },
        },
    },
}


class RunConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(problems))
        self.problems = problems


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_run_config(path: str | Path | None, args: argparse.Namespace | None = None) -> dict:
    """Defaults <- YAML file <- CLI flags, then schema-checked.

    All schema violations are reported together.
    """
    user = {}
    if path is not None:
        user = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(user, dict):
            raise RunConfigError(["top level must be a mapping"])
    problems = [f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
                for e in jsonschema.Draft7Validator(SCHEMA).iter_errors(user)]
    if problems:
        raise RunConfigError(sorted(problems))
    cfg = _merge(DEFAULTS, user)
    if args is not None:
        if getattr(args, "seed", None) is not None:
            cfg["seed"] = args.seed
        if getattr(args, "threads", None) is not None:
            cfg["threads"] = args.threads
        if getattr(args, "variant", None):
            cfg["model"]["variant"] = args.variant
        if getattr(args, "integrator", None):
            cfg["train"]["integrator"] = args.integrator
            cfg["eval"]["integrator"] = args.integrator
    return cfg


def build_configs(cfg: dict, num_types: int) -> tuple[ModelConfig, TrainConfig, Integrator]:
    problems = []
    m = dict(cfg["model"])
    preset = m.pop("preset")
    if m.get("num_types") is None:
        m["num_types"] = num_types
    model_cfg = batch = None
    try:
        model_cfg, batch = resolve_preset(preset, **m)
    except ConfigError as err:
        problems += [f"model: {p}" for p in str(err).split("; ")]
    t = dict(cfg["train"])
    if t.get("batch_size") is None:
        t["batch_size"] = batch or 1
    t["seed"] = cfg["seed"]
    train_cfg = eval_integ = None
    try:
        train_cfg = TrainConfig.from_dict(t)
    except ConfigError as err:
        problems += [f"train: {p}" for p in str(err).split("; ")]
    try:
        eval_integ = Integrator.parse(cfg["eval"]["integrator"])
    except ConfigError as err:
        problems.append(f"eval.integrator: {err}")
    if model_cfg is not None and model_cfg.num_types < num_types:
        problems.append(f"model.num_types: {model_cfg.num_types} < dataset num_types {num_types}")
    if problems:
        raise RunConfigError(problems)
    return model_cfg, train_cfg, eval_integ


def _resolve(path: str | None, base: Path) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    return p if p.is_absolute() else base / p


def load_splits(cfg: dict, base: Path) -> tuple[Dataset, Dataset, Dataset]:
    d = cfg["data"]
    if d.get("train"):
        paths = [_resolve(d[k], base) for k in ("train", "dev", "test")]
        if any(p is None for p in paths):
            raise RunConfigError(["data: train, dev and test must all be given together"])
        return tuple(load_jsonl(p) for p in paths)
    ds = load_jsonl(_resolve(d["dataset"], base))
    seed = cfg["seed"] if d.get("split_seed") is None else d["split_seed"]
    return split(ds, tuple(d["ratios"]), seed=seed)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_meta(out: Path, command: str, cfg: dict, extra: dict | None = None) -> None:
    meta = {"command": command, "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "config": cfg, **(extra or {})}
    _write(out / "run.json", json.dumps(meta, indent=2, sort_keys=True, default=str))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# commands ---------------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path) -> None:
    s = cfg["simulate"]
    try:
        gt = HawkesGroundTruth.from_dict(s)
    except (ValidationError, ValueError) as err:
        raise RunConfigError([f"simulate: {err}"]) from err
    if not s["horizon"] > 0:
        raise RunConfigError(["simulate.horizon: must be positive"])
    ds = simulate_dataset(gt, s["num_sequences"], float(s["horizon"]), seed=cfg["seed"], name=s["name"])
    out.mkdir(parents=True, exist_ok=True)
    save_jsonl(ds, out / "data.jsonl")
    _write(out / "ground_truth.json", _dumps({**gt.to_dict(), "horizon": s["horizon"], "seed": cfg["seed"]}))
    if len(load_jsonl(out / "data.jsonl")) != s["num_sequences"]:
        raise RuntimeError("written dataset does not reload with the configured size")
    _write_meta(out, "simulate", cfg)


def cmd_train(cfg: dict, out: Path, base: Path) -> None:
    tr, dv, te = load_splits(cfg, base)
    model_cfg, train_cfg, eval_integ = build_configs(cfg, tr.num_types)
    params, hist = train(tr, dv, model_cfg, train_cfg, threads=cfg["threads"], eval_integrator=eval_integ)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "model.ckpt", extra={"train_config": train_cfg.to_dict(),
                                                       "eval_integrator": str(eval_integ)})
    _write(out / "history.json", _dumps(hist.without_timing()))
    _write(out / "curves.csv", hist.to_csv())
    load_checkpoint(out / "model.ckpt")
    _write_meta(out, "train", cfg, {"wall_time": hist.column("wall_time")})


def cmd_eval(cfg: dict, out: Path, base: Path) -> None:
    splits = dict(zip(("train", "dev", "test"), load_splits(cfg, base)))
    ckpt = _resolve(cfg["data"].get("checkpoint"), base) or out / "model.ckpt"
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    params, _ = load_checkpoint(ckpt)
    ds = splits[cfg["eval"]["split"]]
    _, _, eval_integ = build_configs(cfg, ds.num_types)
    report = evaluate(ds, params, eval_integ, seed=cfg["seed"], threads=cfg["threads"])
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "metrics.json", report.to_json() + "\n")
    hist_path = ckpt.parent / "history.json"
    hist = TrainHistory.from_dict({"epochs": [dict(r, wall_time=0.0) for r in
                                              json.loads(hist_path.read_text())["epochs"]]}) \
        if hist_path.exists() else TrainHistory()
    _write(out / "curves.csv", hist.to_csv())
    MetricsReport.from_dict(json.loads((out / "metrics.json").read_text()))
    _write_meta(out, "eval", cfg, {"checkpoint": str(ckpt)})


def cmd_ablate(cfg: dict, out: Path, base: Path) -> None:
    tr, dv, te = load_splits(cfg, base)
    model_cfg, train_cfg, eval_integ = build_configs(cfg, tr.num_types)
    rep = ablate(tr, dv, te, model_cfg, train_cfg, eval_integrator=eval_integ, threads=cfg["threads"])
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "ablation.json", rep.to_json() + "\n")
    rows = ["metric,biased,taa"] + [f"{m},{v['biased']!r},{v['taa']!r}" for m, v in rep.table().items()]
    _write(out / "ablation.csv", "\n".join(rows) + "\n")
    validate_ablation_json(json.loads((out / "ablation.json").read_text()))
    _write_meta(out, "ablate", cfg)


def cmd_print_config() -> str:
    return "# defaults; any key may be overridden in --config\n" + yaml.safe_dump(DEFAULTS, sort_keys=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taathp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "train", "eval", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="YAML run config")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--variant", choices=["taa", "biased"], default=None)
        p.add_argument("--integrator", default=None, help="mc:M or trapezoid")
        p.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("print-config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "print-config":
        sys.stdout.write(cmd_print_config())
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    base = args.config.parent if args.config else Path.cwd()
    try:
        if args.integrator:
            Integrator.parse(args.integrator)
        cfg = load_run_config(args.config, args)
        if args.command == "simulate":
            cmd_simulate(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.out, base)
        elif args.command == "eval":
            cmd_eval(cfg, args.out, base)
        else:
            cmd_ablate(cfg, args.out, base)
    except (RunConfigError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValidationError, CheckpointError, TrainingDivergence, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
