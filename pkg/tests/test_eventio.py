import json
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from taathp.eventio import (Dataset, EventSequence, HawkesGroundTruth, ValidationError, exact_compensator,
                            load_jsonl, save_jsonl, simulate_dataset, simulate_thinning, split,
                            time_rescaled_gaps)

MUTUAL = HawkesGroundTruth(np.array([0.3, 0.2]), np.array([[0.5, 0.2], [0.3, 0.4]]),
                           np.array([[1.2, 0.8], [1.0, 2.0]]))


def riemann_compensator(gt, seq, t_end, points=1_000_000):
    """Midpoint sums on each smooth piece between events; ~``points`` total."""
    edges = np.append(seq.times, t_end)
    total = 0.0
    span = t_end - seq.times[0]
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(2, int(points * (b - a) / span))
        mid = a + (np.arange(n) + 0.5) * (b - a) / n
        total += gt.type_intensity(mid, seq).sum() * (b - a) / n
    return total


# thinning ---------------------------------------------------------------------

def test_poisson_reduction_mean_count():
    gt = HawkesGroundTruth(np.array([0.5]), np.zeros((1, 1)))
    counts = np.array([len(simulate_thinning(gt, 100.0, s)) for s in range(200)])
    se = np.sqrt(50.0 / 200)
    assert abs(counts.mean() - 50.0) < 3 * se


def test_zero_rates_give_empty_sequence():
    gt = HawkesGroundTruth(np.zeros(2), np.zeros((2, 2)))
    assert len(simulate_thinning(gt, 10.0, 0)) == 0


def test_fixed_seed_is_bit_identical():
    a, b = simulate_thinning(MUTUAL, 50.0, 123), simulate_thinning(MUTUAL, 50.0, 123)
    assert a.times.tobytes() == b.times.tobytes() and a.types.tobytes() == b.types.tobytes()
    assert simulate_thinning(MUTUAL, 50.0, 124) != a


def test_events_in_horizon_and_increasing():
    s = simulate_thinning(MUTUAL, 40.0, 5)
    assert len(s) > 0
    assert s.times[0] > 0 and s.times[-1] <= 40.0
    assert np.all(np.diff(s.times) > 0)
    assert set(s.types.tolist()) <= {0, 1}


def test_bad_arguments():
    with pytest.raises(ValueError):
        simulate_thinning(MUTUAL, 0.0, 0)
    with pytest.raises(ValidationError, match="non-stationary"):
        HawkesGroundTruth(np.array([0.1]), np.array([[2.0]]), np.array([[1.0]]))
    with pytest.raises(ValidationError):
        HawkesGroundTruth(np.array([0.1]), np.array([[0.1]]), np.array([[0.0]]))


def test_alpha_zero_gaps_are_exponential():
    gt = HawkesGroundTruth(np.array([1.5]), np.zeros((1, 1)))
    gaps = []
    seed = 0
    while len(gaps) < 10_000:
        s = simulate_thinning(gt, 200.0, seed)
        gaps.extend(np.diff(np.concatenate([[0.0], s.times])).tolist())
        seed += 1
    assert stats.kstest(gaps[:10_000], "expon", args=(0, 1 / 1.5)).pvalue > 0.01


def test_random_time_change_residuals():
    res = np.concatenate([time_rescaled_gaps(MUTUAL, simulate_thinning(MUTUAL, 500.0, s)) for s in range(6)])
    assert res.size > 1000
    assert stats.kstest(res, "expon").pvalue > 0.01


def test_type_attribution_follows_stationary_rates():
    gt = HawkesGroundTruth(np.array([0.9, 0.1]), np.zeros((2, 2)))
    types = np.concatenate([simulate_thinning(gt, 200.0, s).types for s in range(10)])
    frac = types.mean()
    assert abs(frac - 0.1) < 4 * np.sqrt(0.09 / types.size)


# compensator ------------------------------------------------------------------

def test_compensator_poisson_window():
    gt = HawkesGroundTruth(np.array([2.0]), np.zeros((1, 1)))
    seq = EventSequence(np.array([1.0, 3.0]), np.array([0, 0]))
    assert exact_compensator(gt, seq, 6.0) == pytest.approx(10.0, abs=1e-12)


def test_compensator_unit_kernel_tends_to_one():
    # alpha = delta = 1 is exactly critical and rejected, so approach it from below
    gt = HawkesGroundTruth(np.array([0.0]), np.array([[0.999999]]), np.array([[1.0]]))
    seq = EventSequence(np.array([2.0]), np.array([0]))
    assert exact_compensator(gt, seq, 60.0) == pytest.approx(0.999999, abs=1e-12)


def test_compensator_matches_quadrature():
    seq = simulate_thinning(MUTUAL, 12.0, 11)
    assert len(seq) >= 4
    t_end = seq.times[-1] + 0.7
    assert exact_compensator(MUTUAL, seq, t_end) == pytest.approx(riemann_compensator(MUTUAL, seq, t_end), abs=1e-6)


def test_compensator_rejects_early_end():
    seq = EventSequence(np.array([1.0, 2.0]), np.array([0, 0]))
    with pytest.raises(ValueError):
        exact_compensator(MUTUAL, seq, 1.5)


def test_piece_intensity_matches_direct_sum():
    seq = simulate_thinning(MUTUAL, 10.0, 3)
    u = seq.times[:-1, None] + np.diff(seq.times)[:, None] * np.linspace(0.01, 0.99, 5)[None, :]
    direct = MUTUAL.type_intensity(u, seq).sum(axis=-1)
    np.testing.assert_allclose(MUTUAL.piece_intensity(seq, u), direct, rtol=1e-12)


# sequences / files -------------------------------------------------------------

def test_sequence_validation():
    with pytest.raises(ValidationError):
        EventSequence(np.array([1.0, 1.0]), np.array([0, 0]))
    with pytest.raises(ValidationError):
        EventSequence(np.array([0.0, 1.0]), np.array([0, 0]))
    with pytest.raises(ValidationError):
        Dataset((EventSequence(np.array([1.0, 2.0]), np.array([0, 3])),), 2)


def _ds():
    return Dataset((EventSequence(np.array([0.31, 1.25, 2.0]), np.array([2, 0, 1])),
                    EventSequence(np.array([1e-3, 7.7]), np.array([1, 1]))), 3, "toy")


def test_jsonl_round_trip(tmp_path):
    p, q = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_jsonl(_ds(), p)
    ds = load_jsonl(p)
    assert len(ds) == 2 and ds.num_types == 3 and ds.name == "toy"
    assert ds.sequences == _ds().sequences
    save_jsonl(ds, q)
    assert p.read_bytes() == q.read_bytes()
    first = p.read_text().splitlines()[1]
    assert json.loads(first) == {"events": [{"t": 0.31, "c": 2}, {"t": 1.25, "c": 0}, {"t": 2.0, "c": 1}]}


def test_jsonl_decreasing_time_cites_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"num_types":2}\n{"events":[{"t":1,"c":0},{"t":2,"c":1}]}\n'
                 '{"events":[{"t":3,"c":0},{"t":2.5,"c":1}]}\n')
    with pytest.raises(ValidationError, match=r":3:"):
        load_jsonl(p)


def test_jsonl_type_out_of_range(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"num_types":2}\n{"events":[{"t":1,"c":0},{"t":2,"c":2}]}\n')
    with pytest.raises(ValidationError, match=r":2:.*type 2"):
        load_jsonl(p)


@pytest.mark.parametrize("text", ["", "\n\n", '{"num_types":2}\n', '{"events":[]}\n'])
def test_jsonl_empty_or_headerless(tmp_path, text):
    p = tmp_path / "e.jsonl"
    p.write_text(text)
    with pytest.raises(ValidationError):
        load_jsonl(p)


def test_jsonl_too_short_sequence(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text('{"num_types":1}\n{"events":[{"t":1,"c":0}]}\n')
    with pytest.raises(ValidationError, match=r":2:"):
        load_jsonl(p)


# split -----------------------------------------------------------------------------

def _many(n):
    return Dataset(tuple(EventSequence(np.array([1.0, 2.0 + i]), np.array([0, 0])) for i in range(n)), 1)


def test_split_sizes_and_partition():
    ds = _many(10)
    tr, dv, te = split(ds, seed=4)
    assert (len(tr), len(dv), len(te)) == (6, 2, 2)
    union = Counter(tr.sequences + dv.sequences + te.sequences)
    assert union == Counter(ds.sequences)


def test_split_deterministic():
    a = split(_many(25), seed=9)
    b = split(_many(25), seed=9)
    assert all(x.sequences == y.sequences for x, y in zip(a, b))
    c = split(_many(25), seed=10)
    assert c[0].sequences != a[0].sequences


def test_split_errors():
    with pytest.raises(ValueError):
        split(_many(2))
    with pytest.raises(ValueError):
        split(_many(5), ratios=(0.5, 0.2, 0.2))


def test_split_three_sequences_nonempty():
    assert [len(p) for p in split(_many(3))] == [1, 1, 1]


def test_simulate_dataset_skips_short():
    gt = HawkesGroundTruth(np.array([0.05]), np.zeros((1, 1)))
    ds = simulate_dataset(gt, 5, 20.0, seed=0)
    assert len(ds) == 5 and all(len(s) >= 2 for s in ds)
