import numpy as np
import pytest

import doacore


# Frame estimates


def one_hot(index, size=72):
    scores = np.zeros(size)
    scores[index] = 1.0
    return scores


def test_frame_estimate_of_one_hot():
    assert doacore.frame_estimate(one_hot(0)) == 0.0
    assert doacore.frame_estimate(one_hot(27)) == 135.0


def test_frame_estimate_wraps_around():
    scores = np.zeros(72)
    scores[70], scores[71], scores[0] = 1.0, 3.0, 1.0
    assert doacore.frame_estimate(scores) == pytest.approx(355.0)


def test_frame_estimate_interpolates():
    scores = np.zeros(72)
    scores[10], scores[11], scores[12] = 0.0, 1.0, 0.5
    assert doacore.frame_estimate(scores) == pytest.approx((11 + 1 / 6) * 5.0)


def test_frame_estimate_is_affine_invariant():
    scores = np.random.default_rng(0).random(72)
    expected = doacore.frame_estimate(scores)
    assert doacore.frame_estimate(3.0 * scores + 7.0) == pytest.approx(expected)


def test_frame_estimate_ties_go_to_smallest_class():
    scores = np.zeros(72)
    scores[5] = scores[40] = 1.0
    assert doacore.frame_estimate(scores) == 25.0


def test_frame_estimate_with_non_finite_scores():
    scores = one_hot(3)
    scores[7] = np.inf
    with pytest.raises(doacore.NumericError):
        doacore.frame_estimate(scores)


# Circular error


def test_circular_error():
    assert doacore.circular_error(359.0, 1.0) == pytest.approx(2.0)
    assert doacore.circular_error(42.0, 42.0) == 0.0
    assert doacore.circular_error(190.0, 10.0) == 180.0


def test_circular_error_properties():
    rng = np.random.default_rng(1)
    a, b, c = rng.uniform(-720.0, 720.0, size=(3, 1000))
    ab = doacore.circular_error(a, b)
    assert np.allclose(ab, doacore.circular_error(b, a))
    assert np.all((ab >= 0.0) & (ab <= 180.0))
    assert np.all(ab <= doacore.circular_error(a, c) + doacore.circular_error(c, b) + 1e-9)


# Aggregation


def test_aggregate():
    assert doacore.aggregate([10.0, 10.0, 10.0]) == 10.0
    assert doacore.aggregate([350.0, 0.0, 10.0]) == 0.0
    assert doacore.aggregate([0.0, 0.0, 180.0]) == 0.0
    assert doacore.aggregate([123.0]) == 123.0


def test_aggregate_ties_go_to_smallest_angle():
    assert doacore.aggregate([20.0, 40.0]) == 20.0


def test_aggregate_of_nothing():
    with pytest.raises(doacore.EmptyInput):
        doacore.aggregate([])


def test_doa_estimate():
    estimate = doacore.DoaEstimate([350.0, 0.0, 370.0], algorithm="srp-phat")
    assert estimate.per_frame == [350.0, 0.0, 10.0]
    assert estimate.doa == 0.0
    assert estimate.num_frames == 3
    assert repr(estimate) == "<DoaEstimate [srp-phat, 0.00 deg over 3 frames]>"


# Evaluation


def test_evaluate_mae():
    result = doacore.evaluate([(2.0, 0.0), (4.0, 0.0), (6.0, 0.0)])
    assert result.mae == pytest.approx(4.0)
    assert result.n_trials == 3


def test_evaluate_accuracy_is_inclusive():
    result = doacore.evaluate([(0.0, 0.0), (3.0, 0.0), (5.0, 0.0), (10.0, 0.0)], epsilon=5.0)
    assert result.accuracy == 75.0


def test_evaluate_all_correct():
    result = doacore.evaluate([(90.0, 90.0), (0.0, 360.0)])
    assert result.mae == 0.0
    assert result.accuracy == 100.0


def test_evaluate_nothing():
    with pytest.raises(doacore.EmptyInput):
        doacore.evaluate([])


def test_eval_result_csv(tmp_path):
    result = doacore.EvalResult([359.0, 20.0], [1.0, 10.0], trial_ids=[4, 9])
    assert result.summary() == {
        "n_trials": 2,
        "mae_deg": 6.0,
        "accuracy_pct": 50.0,
        "epsilon_deg": 5.0,
    }
    path = tmp_path / "trials.csv"
    result.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema: doacore.results/1"
    assert lines[1] == "trial_id,theta_true,theta_est,delta"
    assert lines[2] == "4,1.000000,359.000000,2.000000"
    assert lines[4].startswith("# summary: n_trials=2.000000 mae_deg=6.000000")
