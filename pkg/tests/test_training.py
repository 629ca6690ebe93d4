import numpy as np
import pytest

from taathp.config import Integrator, ModelConfig, TrainConfig
from taathp.eventio import HawkesGroundTruth, simulate_dataset
from taathp.params import ModelParams
from taathp.training import Adam, TrainHistory, TrainingDivergence, clip_global_norm, train

CFG = ModelConfig(num_types=2, d_model=8, d_hidden=16, d_k=8, n_heads=2, n_layers=1, dropout=0.1)
GT = HawkesGroundTruth(np.array([0.3, 0.3]), np.array([[0.4, 0.1], [0.1, 0.4]]), np.ones((2, 2)))
DATA = simulate_dataset(GT, 12, 15.0, seed=5, name="toy")
TCFG = TrainConfig(epochs=2, batch_size=4, lr=1e-3, integrator=Integrator("mc", 5), seed=3)


def test_adam_matches_hand_recurrence():
    # f(x) = 0.5 * (a x0^2 + b x1^2)
    a, b = 2.0, 0.5
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    x = {"x": np.array([1.0, -2.0])}
    opt = Adam(lr, b1, b2, eps)
    ref, m, v = x["x"].copy(), np.zeros(2), np.zeros(2)
    for t in range(1, 6):
        g = np.array([a, b]) * ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g ** 2
        ref = ref - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        opt.step(x, {"x": np.array([a, b]) * x["x"]})
        np.testing.assert_allclose(x["x"], ref, rtol=1e-14)


def test_adam_first_step_size_is_lr():
    x = {"x": np.array([3.0, -1.0])}
    Adam(lr=0.01).step(x, {"x": np.array([100.0, -0.001])})
    np.testing.assert_allclose(x["x"], [2.99, -0.99], rtol=1e-6)


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(g, 5.0) == 5.0
    assert g["a"][0] == 3.0
    assert clip_global_norm(g, 1.0) == 5.0
    assert np.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)
    np.testing.assert_allclose(g["a"] / g["b"], 0.75)


def test_zero_learning_rate_leaves_parameters():
    init = ModelParams.init(CFG, TCFG.seed)
    params, hist = train(DATA, None, CFG, TrainConfig(**{**TCFG.__dict__, "lr": 0.0}), init=init)
    for n, a in init.arrays.items():
        np.testing.assert_array_equal(params.arrays[n], a)
    assert len(hist) == 2


def test_training_is_deterministic_and_thread_independent():
    dev = DATA.subset(range(3))
    p1, h1 = train(DATA, dev, CFG, TCFG)
    p2, h2 = train(DATA, dev, CFG, TCFG)
    p3, h3 = train(DATA, dev, CFG, TCFG, threads=3)
    assert h1.without_timing() == h2.without_timing() == h3.without_timing()
    for n in p1.arrays:
        np.testing.assert_array_equal(p1.arrays[n], p2.arrays[n])
        np.testing.assert_array_equal(p1.arrays[n], p3.arrays[n])


def test_best_dev_epoch_is_returned():
    dev = DATA.subset(range(4))
    tcfg = TrainConfig(**{**TCFG.__dict__, "epochs": 3})
    _, hist = train(DATA, dev, CFG, tcfg)
    nll = hist.column("dev_nll_per_event")
    assert hist.best_epoch == int(np.argmin(nll))


def test_frozen_temporal_projection_stays_zero():
    cfg = ModelConfig(**{**CFG.to_dict(), "freeze_w_tem": True})
    params, _ = train(DATA, None, cfg, TCFG)
    for n in params.arrays:
        if n.endswith("W_Tem"):
            assert not params.arrays[n].any()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    init = ModelParams.init(CFG, 0)
    init.arrays["heads.W_time"][:] = 1e200  # squared error overflows
    with pytest.raises(TrainingDivergence) as err:
        train(DATA, None, CFG, TCFG, init=init)
    assert err.value.epoch == 0 and err.value.step == 0


def test_history_round_trip_and_csv():
    _, hist = train(DATA, None, CFG, TCFG)
    back = TrainHistory.from_dict(hist.to_dict())
    assert back == hist
    lines = hist.to_csv().splitlines()
    assert lines[0].startswith("epoch,") and len(lines) == 3


def test_empty_training_set_rejected():
    with pytest.raises(ValueError):
        train(DATA.subset([]), None, CFG, TCFG)
