import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from amp2d.geom import (angle_diff, exp_map_to_rotation, normal_tangent_3d,
                        rotate_vector_3d, rotation_to_normal_tangent, wrap_angle)

finite_angles = st.floats(-50.0, 50.0, allow_nan=False)


def test_exp_map_zero_vector_is_identity():
    axis, angle = exp_map_to_rotation(np.zeros(3))
    assert angle == 0.0
    assert np.all(axis == 0.0)


def test_exp_map_unit_axis_scaling():
    axis, angle = exp_map_to_rotation(np.array([math.pi / 2, 0.0, 0.0]))
    assert angle == pytest.approx(math.pi / 2, abs=1e-15)
    np.testing.assert_allclose(axis, [1.0, 0.0, 0.0], atol=1e-15)


def test_exp_map_rejects_non_finite():
    with pytest.raises(ValueError):
        exp_map_to_rotation(np.array([np.nan, 0.0, 0.0]))
    with pytest.raises(ValueError):
        exp_map_to_rotation(np.array([np.inf, 1.0, 0.0]))


def test_exp_map_rotation_matches_rodrigues_oracle():
    rng = np.random.default_rng(7)
    basis = np.eye(3)
    for _ in range(50):
        q = rng.normal(size=3) * rng.uniform(0.1, 3.0)
        axis, angle = exp_map_to_rotation(q)
        oracle = Rotation.from_rotvec(q).as_matrix()
        for k in range(3):
            ours = rotate_vector_3d(axis, angle, basis[k])
            np.testing.assert_allclose(ours, oracle @ basis[k], atol=1e-10)


def test_exp_map_round_trip_recovers_vector():
    rng = np.random.default_rng(11)
    for _ in range(50):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        theta = rng.uniform(1e-6, math.pi - 1e-6)
        q = direction * theta
        axis, angle = exp_map_to_rotation(q)
        assert np.linalg.norm(axis * angle - q) < 1e-9


def test_normal_tangent_identity_and_half_turn():
    n, t = rotation_to_normal_tangent(0.0)
    np.testing.assert_allclose(n, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(t, [0.0, 1.0], atol=1e-15)
    n, t = rotation_to_normal_tangent(math.pi)
    np.testing.assert_allclose(n, [-1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(t, [0.0, -1.0], atol=1e-12)


@given(finite_angles)
def test_normal_tangent_periodicity(theta):
    n1, t1 = rotation_to_normal_tangent(theta)
    n2, t2 = rotation_to_normal_tangent(theta + 2.0 * math.pi)
    np.testing.assert_allclose(n1, n2, atol=1e-12)
    np.testing.assert_allclose(t1, t2, atol=1e-12)


@given(finite_angles)
def test_normal_tangent_orthonormal(theta):
    n, t = rotation_to_normal_tangent(theta)
    assert abs(np.linalg.norm(n) - 1.0) < 1e-12
    assert abs(np.linalg.norm(t) - 1.0) < 1e-12
    assert abs(float(n @ t)) < 1e-12


def test_normal_tangent_3d_columns():
    rng = np.random.default_rng(3)
    q = rng.normal(size=3)
    axis, angle = exp_map_to_rotation(q)
    n, t = normal_tangent_3d(axis, angle)
    R = Rotation.from_rotvec(q).as_matrix()
    np.testing.assert_allclose(n, R[:, 0], atol=1e-12)
    np.testing.assert_allclose(t, R[:, 1], atol=1e-12)


@given(finite_angles)
def test_wrap_angle_range_and_congruence(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert abs(math.remainder(w - theta, 2.0 * math.pi)) < 1e-9


def test_wrap_angle_boundary_convention():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_angle_diff_shortest_path():
    # crossing the branch cut: 3.1 vs -3.1 differ by a small wrapped step
    d = angle_diff(-3.1, 3.1)
    assert d == pytest.approx(2.0 * math.pi - 6.2, abs=1e-12)
    assert abs(d) < 0.1
