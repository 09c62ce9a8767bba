import itertools
import math

import numpy as np
import pytest

import doacore


# Pairs


def test_pair_indices():
    assert doacore.pair_indices(2) == [(0, 1)]
    assert doacore.pair_indices(3) == [(0, 1), (0, 2), (1, 2)]
    assert len(doacore.pair_indices(5)) == 10


def test_pair_indices_cover_every_pair_once():
    for num_mics in range(2, 9):
        pairs = doacore.pair_indices(num_mics)
        assert len(set(pairs)) == len(pairs)
        assert set(pairs) == set(itertools.combinations(range(num_mics), 2))


def test_pair_indices_require_two_mics():
    with pytest.raises(doacore.InvalidGeometry):
        doacore.pair_indices(1)


# Geometry


def test_array_geometry():
    geometry = doacore.ArrayGeometry([(0.0, 0.0), (0.3, 0.0), (0.0, 0.4)])
    assert geometry.num_mics == 3
    assert len(geometry) == 3
    assert geometry.r_max == pytest.approx(0.5)
    assert geometry.pairs == [(0, 1), (0, 2), (1, 2)]
    assert np.allclose(geometry.centered().mean(axis=0), 0.0)
    assert geometry == doacore.ArrayGeometry([(0.0, 0.0), (0.3, 0.0), (0.0, 0.4)])


def test_array_geometry_is_immutable():
    geometry = doacore.arc_array()
    with pytest.raises(ValueError):
        geometry.mics[0, 0] = 1.0


def test_array_geometry_with_invalid_shape():
    with pytest.raises(doacore.InvalidGeometry):
        doacore.ArrayGeometry([(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)])
    with pytest.raises(doacore.InvalidGeometry):
        doacore.ArrayGeometry([(0.0, 0.0)])
    with pytest.raises(doacore.InvalidGeometry):
        doacore.ArrayGeometry([(0.0, 0.0), (math.nan, 0.0)])


def test_array_geometry_with_coincident_mics():
    with pytest.raises(doacore.InvalidGeometry):
        doacore.ArrayGeometry([(0.1, 0.1), (0.1, 0.1)])


def test_arc_array():
    geometry = doacore.arc_array()
    assert geometry.num_mics == 5
    width = np.ptp(geometry.mics[:, 0])
    depth = np.ptp(geometry.mics[:, 1])
    assert width == pytest.approx(0.40)
    assert depth == pytest.approx(0.138)


# Lag bounds


def test_lag_bound_of_arc_array():
    bound = doacore.lag_bound(doacore.arc_array(), fs=8000, c=343.0, eta=4)
    assert bound.tau_max == 14
    assert bound.width == 28
    assert bound.lags[0] == -14
    assert bound.lags[-1] == 13


def test_lag_bound_for_distance():
    assert doacore.LagBound.for_distance(0.4, fs=8000, c=343.0, eta=4).tau_max == 14
    assert doacore.LagBound.for_distance(0.2, fs=16000, c=343.0, eta=2).tau_max == 12


def test_lag_bound_exact_division():
    """
    A distance that is a whole number of samples does not round up.
    """
    assert doacore.LagBound.for_distance(0.343, fs=8000, c=343.0, eta=0).tau_max == 8


def test_lag_bound_of_degenerate_distance():
    with pytest.raises(doacore.InvalidGeometry):
        doacore.LagBound.for_distance(0.0)


# Delays


def test_steering_delay():
    geometry = doacore.ArrayGeometry([(0.0, 0.0), (0.343, 0.0)])
    assert abs(doacore.steering_delay(geometry, 0, 1, 0.0)) == pytest.approx(1e-3)
    assert doacore.steering_delay(geometry, 0, 1, 0.0) == pytest.approx(-1e-3)
    assert doacore.steering_delay(geometry, 0, 1, 90.0) == pytest.approx(0.0, abs=1e-15)


def test_steering_delay_oblique():
    geometry = doacore.ArrayGeometry([(0.0, 0.0), (0.2, 0.1)])
    delay = doacore.steering_delay(geometry, 0, 1, 30.0)
    assert delay == pytest.approx(-6.507e-4, abs=1e-7)


def test_steering_delay_is_antisymmetric():
    geometry = doacore.arc_array()
    forward = doacore.steering_delay(geometry, 1, 3, 47.0)
    backward = doacore.steering_delay(geometry, 3, 1, 47.0)
    assert forward == pytest.approx(-backward)


def test_arrival_delays_match_steering_delays():
    geometry = doacore.arc_array()
    delays = doacore.arrival_delays(geometry, np.array([20.0, 200.0]))
    assert delays.shape == (2, 5)
    for row, theta in zip(delays, (20.0, 200.0)):
        # Channel l lags channel k by t_l - t_k.
        assert row[2] - row[0] == pytest.approx(doacore.steering_delay(geometry, 0, 2, theta))


# Deviation and random arrays


def test_deviate_geometry_with_zero_step():
    geometry = doacore.arc_array()
    deviated = doacore.deviate_geometry(geometry, 0.0, np.random.default_rng(0))
    assert deviated == geometry


def test_deviate_geometry_moves_every_mic_by_step():
    geometry = doacore.arc_array()
    for seed in range(5):
        deviated = doacore.deviate_geometry(geometry, 0.01, np.random.default_rng(seed))
        displacement = np.linalg.norm(deviated.mics - geometry.mics, axis=1)
        assert np.allclose(displacement, 0.01, atol=1e-12)


def test_deviate_geometry_is_deterministic():
    geometry = doacore.arc_array()
    first = doacore.deviate_geometry(geometry, 0.03, np.random.default_rng(42))
    second = doacore.deviate_geometry(geometry, 0.03, np.random.default_rng(42))
    assert first == second


def test_deviate_geometry_with_negative_step():
    with pytest.raises(ValueError):
        doacore.deviate_geometry(doacore.arc_array(), -0.01, np.random.default_rng(0))


def test_random_geometry():
    geometry = doacore.random_geometry(5, np.random.default_rng(3))
    assert geometry.num_mics == 5
    assert np.all(np.abs(geometry.mics) <= 0.2)
    assert geometry == doacore.random_geometry(5, np.random.default_rng(3))
    assert geometry != doacore.random_geometry(5, np.random.default_rng(4))


# Geometry files


def test_geometry_file_round_trip(tmp_path):
    path = tmp_path / "geometry.txt"
    geometry = doacore.arc_array()
    doacore.write_geometry(path, geometry)
    assert doacore.read_geometry(path) == geometry


def test_geometry_file_with_comments(tmp_path):
    path = tmp_path / "geometry.txt"
    path.write_text("# mics\n0.0 0.0\n\n0.1 0.0  # second\n")
    geometry = doacore.read_geometry(path)
    assert geometry.mics.tolist() == [[0.0, 0.0], [0.1, 0.0]]


def test_geometry_file_with_malformed_line(tmp_path):
    path = tmp_path / "geometry.txt"
    path.write_text("0.0 0.0\n0.1 0.0 0.0\n")
    with pytest.raises(doacore.GeometryFileError):
        doacore.read_geometry(path)

    path.write_text("0.0 0.0\n0.1 abc\n")
    with pytest.raises(doacore.GeometryFileError):
        doacore.read_geometry(path)


def test_missing_geometry_file(tmp_path):
    with pytest.raises(doacore.GeometryFileError):
        doacore.read_geometry(tmp_path / "missing.txt")
