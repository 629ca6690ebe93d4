import json

import numpy as np
import pytest
import yaml

from taathp.ablation import AblationReport, ablate, validate_ablation_json
from taathp.cli import DEFAULTS, main
from taathp.config import Integrator, ModelConfig, TrainConfig
from taathp.eventio import HawkesGroundTruth, load_jsonl, simulate_dataset, split

SMALL = {
    "seed": 3,
    "model": {"d_model": 8, "d_hidden": 16, "d_k": 8},
    "train": {"epochs": 2, "integrator": "mc:5", "lr": 1e-3},
    "eval": {"integrator": "trapezoid"},
    "simulate": {"horizon": 12.0, "num_sequences": 15},
}


def write_config(tmp_path, cfg=SMALL, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_writes_reloadable_deterministic_data(tmp_path):
    conf = write_config(tmp_path)
    assert run("simulate", "--config", conf, "--out", tmp_path / "a") == 0
    assert run("simulate", "--config", conf, "--out", tmp_path / "b") == 0
    for f in ("data.jsonl", "ground_truth.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert len(load_jsonl(tmp_path / "a" / "data.jsonl")) == 15
    gt = json.loads((tmp_path / "a" / "ground_truth.json").read_text())
    assert HawkesGroundTruth.from_dict(gt).num_types == 2
    run("simulate", "--config", conf, "--out", tmp_path / "c", "--seed", 4)
    assert (tmp_path / "a" / "data.jsonl").read_bytes() != (tmp_path / "c" / "data.jsonl").read_bytes()


def test_simulate_rejects_zero_horizon(tmp_path, capsys):
    conf = write_config(tmp_path, {"simulate": {"horizon": 0}})
    assert run("simulate", "--config", conf, "--out", tmp_path / "o") == 2
    assert "horizon" in capsys.readouterr().err
    assert not (tmp_path / "o" / "data.jsonl").exists()


def test_simulate_rejects_explosive_ground_truth(tmp_path):
    conf = write_config(tmp_path, {"simulate": {"alpha": [[1.5, 0.0], [0.0, 0.2]]}})
    assert run("simulate", "--config", conf, "--out", tmp_path / "o") == 2


def test_unknown_preset_lists_valid_presets(tmp_path, capsys):
    conf = write_config(tmp_path, {**SMALL, "model": {"preset": "nope"}})
    run("simulate", "--config", conf, "--out", tmp_path)
    assert run("train", "--config", conf, "--out", tmp_path / "t") == 2
    err = capsys.readouterr().err
    assert "nope" in err and "desk" in err and "stackoverflow" in err


def test_every_config_error_is_listed(tmp_path, capsys):
    bad = {"seed": -1, "model": {"dropout": 2.0, "colour": "red"}, "train": {"integrator": "simpson"}}
    conf = write_config(tmp_path, bad)
    assert run("train", "--config", conf, "--out", tmp_path / "t") == 2
    err = capsys.readouterr().err
    for needle in ("seed", "dropout", "colour", "integrator"):
        assert needle in err


def test_model_constraint_errors_are_listed_together(tmp_path, capsys):
    conf = write_config(tmp_path, {**SMALL, "model": {"d_model": 7, "d_k": 0}})
    run("simulate", "--config", conf, "--out", tmp_path)
    assert run("train", "--config", conf, "--out", tmp_path / "t") == 2
    err = capsys.readouterr().err
    assert "d_model" in err and "d_k" in err


def test_bad_integrator_flag(tmp_path):
    assert run("simulate", "--out", tmp_path, "--integrator", "mc:0") == 2


def test_eval_without_checkpoint_fails(tmp_path, capsys):
    conf = write_config(tmp_path)
    run("simulate", "--config", conf, "--out", tmp_path)
    assert run("eval", "--config", conf, "--out", tmp_path / "e") == 1
    assert "checkpoint" in capsys.readouterr().err


def test_train_then_eval_reproduces_dev_metrics(tmp_path):
    conf = write_config(tmp_path, {**SMALL, "eval": {"integrator": "trapezoid", "split": "dev"},
                                   "data": {"checkpoint": "t/model.ckpt"}})
    assert run("simulate", "--config", conf, "--out", tmp_path) == 0
    assert run("train", "--config", conf, "--out", tmp_path / "t") == 0
    for f in ("model.ckpt", "history.json", "curves.csv", "run.json"):
        assert (tmp_path / "t" / f).exists()
    assert run("eval", "--config", conf, "--out", tmp_path / "e") == 0
    hist = json.loads((tmp_path / "t" / "history.json").read_text())
    best = hist["epochs"][hist["best_epoch"]]
    rep = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert abs(rep["loglike_per_event"] + best["dev_nll_per_event"]) < 1e-9
    assert abs(rep["accuracy"] - best["dev_accuracy"]) < 1e-9
    assert abs(rep["rmse"] - best["dev_rmse"]) < 1e-9
    assert (tmp_path / "e" / "curves.csv").read_text() == (tmp_path / "t" / "curves.csv").read_text()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("simulate", "--out", blocker / "sub") == 1


def test_print_config_round_trips(capsys):
    assert main(["print-config"]) == 0
    printed = yaml.safe_load(capsys.readouterr().out)
    assert printed == DEFAULTS


def test_ablate_command_schema(tmp_path):
    conf = write_config(tmp_path, {**SMALL, "train": {**SMALL["train"], "epochs": 1}})
    run("simulate", "--config", conf, "--out", tmp_path)
    assert run("ablate", "--config", conf, "--out", tmp_path / "a") == 0
    obj = json.loads((tmp_path / "a" / "ablation.json").read_text())
    validate_ablation_json(obj)
    rows = (tmp_path / "a" / "ablation.csv").read_text().splitlines()
    assert rows[0] == "metric,biased,taa" and len(rows) == 4


def test_validate_ablation_json_rejects_bad_shapes():
    with pytest.raises(ValueError):
        validate_ablation_json({"reports": []})
    with pytest.raises(ValueError):
        validate_ablation_json({"reports": [{"variant": "taa"}, {"variant": "taa"}], "delta": {}})


def test_ablation_frozen_identical_free_different():
    gt = HawkesGroundTruth(np.array([0.4, 0.2]), np.array([[0.3, 0.1], [0.2, 0.3]]), np.ones((2, 2)))
    tr, dv, te = split(simulate_dataset(gt, 15, 10.0, seed=1, name="s"), seed=0)
    cfg = ModelConfig(num_types=2, d_model=8, d_hidden=16, d_k=8, n_heads=2, n_layers=1, freeze_w_tem=True)
    tcfg = TrainConfig(epochs=2, batch_size=3, lr=1e-3, integrator=Integrator("mc", 5), seed=2)
    frozen = ablate(tr, dv, te, cfg, tcfg)
    assert isinstance(frozen, AblationReport)
    for m, d in frozen.delta().items():
        assert abs(d) <= 1e-12, m
    free = ablate(tr, dv, te, ModelConfig(**{**cfg.to_dict(), "freeze_w_tem": False}), tcfg)
    assert any(abs(d) > 1e-12 for d in free.delta().values())
