import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcft_lab.errors import ConfigError
from lcft_lab.geometry import (
    RoundMetric,
    cos_angle,
    covariance,
    covariance_from_cos,
    covariance_truncated,
    covariance_truncated_deriv,
    metric_density,
    sphere_point,
    SphereGrid,
    truncated_variance,
    truncation_tail,
)

LOG2 = math.log(2.0)


def test_metric_density_values():
    assert metric_density(0.0) == pytest.approx(4.0)
    assert metric_density(1.0) == pytest.approx(1.0)
    assert metric_density(3.0) == pytest.approx(4.0 / 100.0)


def test_sphere_point_poles_and_norm():
    assert np.allclose(sphere_point(0.0), [0.0, 0.0, 1.0])
    assert np.allclose(sphere_point(1.0), [1.0, 0.0, 0.0])
    pts = sphere_point(np.array([0.3 + 0.4j, 2.0 - 1.0j, 100.0]))
    assert np.allclose(np.linalg.norm(pts, axis=-1), 1.0)


def test_cos_angle_matches_euclidean_dot():
    z1 = np.array([0.2 + 0.1j, 1.5 - 0.7j])
    z2 = np.array([-0.4j, 0.9 + 2.0j])
    dots = np.sum(sphere_point(z1) * sphere_point(z2), axis=-1)
    assert np.allclose(cos_angle(z1, z2), dots)


def test_covariance_reference_values():
    # antipodal pair: angle pi, C = -1/2
    assert covariance(1.0, -1.0) == pytest.approx(-0.5, abs=1e-14)
    # orthogonal pair (north pole vs equator): C = ln2/2 - 1/2
    assert covariance(0.0, 1.0) == pytest.approx(0.5 * LOG2 - 0.5, abs=1e-14)


def test_covariance_symmetric_and_matches_angle_form():
    rng = np.random.default_rng(0)
    z1 = rng.normal(size=8) + 1j * rng.normal(size=8)
    z2 = rng.normal(size=8) + 1j * rng.normal(size=8)
    c12 = covariance(z1, z2)
    assert np.allclose(c12, covariance(z2, z1))
    assert np.allclose(c12, covariance_from_cos(cos_angle(z1, z2)))


def test_covariance_singular_on_diagonal():
    with pytest.raises(ValueError):
        covariance(0.5 + 0.5j, 0.5 + 0.5j)


def test_truncated_covariance_converges_with_tail_bound():
    for t in (-0.9, -0.3, 0.0, 0.5, 0.9):
        for l_max in (8, 32, 64):
            err = abs(covariance_truncated(t, l_max) - covariance_from_cos(t))
            assert err == pytest.approx(truncation_tail(t, l_max), abs=1e-12)
        assert truncation_tail(t, 64) < truncation_tail(t, 8)


def test_truncated_variance_is_series_at_t_one():
    for l_max in (1, 4, 24):
        assert truncated_variance(l_max) == pytest.approx(
            float(covariance_truncated(1.0, l_max)), abs=1e-12
        )


def test_truncated_deriv_matches_finite_difference():
    t, h, l_max = 0.3, 1e-6, 16
    fd = (covariance_truncated(t + h, l_max) - covariance_truncated(t - h, l_max)) / (2 * h)
    assert covariance_truncated_deriv(t, l_max) == pytest.approx(float(fd), rel=1e-6)


def test_truncation_validates_l_max():
    with pytest.raises(ConfigError):
        covariance_truncated(0.0, 0)


def test_sphere_grid_total_area():
    grid = SphereGrid.build(12, 24)
    assert grid.sphere_weights.sum() == pytest.approx(4.0 * math.pi, rel=1e-13)
    # plane weights reproduce the metric areas
    assert np.allclose(
        grid.plane_weights * metric_density(grid.nodes), grid.sphere_weights
    )


def test_sphere_grid_integrates_smooth_function():
    # int cos(theta) g d^2z = 0 by symmetry; int cos^2 = 4pi/3
    grid = SphereGrid.build(16, 32)
    u = sphere_point(grid.nodes)[:, 2]
    assert abs(np.dot(grid.sphere_weights, u)) < 1e-12
    assert np.dot(grid.sphere_weights, u**2) == pytest.approx(4 * math.pi / 3, rel=1e-12)


def test_sphere_grid_validates_resolution():
    with pytest.raises(ConfigError):
        SphereGrid.build(1, 32)
    with pytest.raises(ConfigError):
        SphereGrid.build(8, 2)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(min_value=-0.99, max_value=0.99))
def test_tail_bound_property(t):
    # partial sums oscillate, but away from the singular angle the tail is
    # uniformly small at high degree and never grows past the coarse one
    assert truncation_tail(t, 256) < 0.05
    assert truncation_tail(t, 256) <= truncation_tail(t, 8) + 0.02


def test_round_metric_constants():
    assert RoundMetric.total_mass == pytest.approx(4 * math.pi)
    z = np.array([0.1 + 0.2j, 1.0, 5.0j])
    assert np.allclose(np.exp(RoundMetric.log_density(z)), RoundMetric.density(z))
