import math

import numpy as np
import pytest

from lcft_lab.errors import ConfigError
from lcft_lab.quadrature import (
    SingularIntegralSpec,
    ball_complement_integral,
    contour_nodes,
    contour_quadrature,
    singular_grid,
)


def test_contour_residue():
    val = contour_quadrature(lambda x: 1.0 / (x - 0.3j), 0.3j, 0.5, 64)
    assert val == pytest.approx(2j * math.pi, abs=1e-10)


def test_contour_analytic_integrand_vanishes():
    val = contour_quadrature(lambda x: x**3 + 2 * x + 5, 1.0, 0.7, 64)
    assert abs(val) < 1e-12


def test_contour_order_doubling_stable():
    f = lambda x: np.exp(x) / (x - 1.0)
    v1 = contour_quadrature(f, 1.0, 0.4, 64)
    v2 = contour_quadrature(f, 1.0, 0.4, 128)
    assert abs(v1 - v2) < 1e-10
    assert v1 == pytest.approx(2j * math.pi * math.e, abs=1e-10)


def test_contour_radius_independence_for_meromorphic():
    f = lambda x: (x**2 + 1.0) / (x + 2.0)
    v1 = contour_quadrature(f, -2.0, 0.3, 64)
    v2 = contour_quadrature(f, -2.0, 0.6, 64)
    assert v1 == pytest.approx(v2, abs=1e-10)


def test_contour_order_validation():
    with pytest.raises(ConfigError):
        contour_quadrature(lambda x: x, 0.0, 1.0, 4)


def test_contour_nodes_consistency():
    pts, dz = contour_nodes(1.0 + 1.0j, 0.25, 32)
    assert len(pts) == 32
    assert np.allclose(np.abs(pts - (1.0 + 1.0j)), 0.25)
    # summing dz around a closed contour gives zero
    assert abs(dz.sum()) < 1e-12


def test_singular_grid_annulus_area():
    nodes, w = singular_grid(0.5j, 0.01, 1.0, 30, 24)
    assert np.all(w > 0)
    exact = math.pi * (1.0**2 - 0.01**2)
    assert w.sum() == pytest.approx(exact, rel=1e-6)
    d = np.abs(nodes - 0.5j)
    assert d.min() > 0.01 and d.max() < 1.0


def test_singular_grid_integrates_inverse_distance():
    # int_{r<|x|<R} |x|^-1 d^2x = 2 pi (R - r); graded grid handles the peak
    nodes, w = singular_grid(0.0, 1e-4, 1.0, 40, 32)
    val = np.sum(w / np.abs(nodes))
    assert val == pytest.approx(2 * math.pi * (1.0 - 1e-4), rel=1e-3)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SingularIntegralSpec(exponent=1.0, radius=0.0)
    with pytest.raises(ConfigError):
        SingularIntegralSpec(exponent=1.0, radius=3.0, k_half_width=2.0)
    with pytest.raises(ConfigError):
        SingularIntegralSpec(exponent=-1.0)
    with pytest.raises(ConfigError):
        SingularIntegralSpec(exponent=1.0, cutoffs=(0.1, 0.05))


def test_ball_complement_smooth_case_value():
    # a = 0: the pair integral is area(B) * area(K \ B)
    rep = ball_complement_integral(SingularIntegralSpec(exponent=0.0))
    assert rep["verdict"] == "convergent"
    exact = math.pi * (16.0 - math.pi)
    assert rep["limit"] == pytest.approx(exact, rel=2e-2)


def test_ball_complement_divergent_growth_rate():
    rep = ball_complement_integral(SingularIntegralSpec(exponent=4.0))
    assert rep["verdict"] == "divergent"
    # cutoff blow-up c^{-(a-3)}: fitted growth exponent near 1
    assert rep["growth_exponent"] == pytest.approx(1.0, abs=0.15)


def test_ball_complement_marginal_case():
    rep = ball_complement_integral(SingularIntegralSpec(exponent=3.0))
    assert rep["verdict"] == "marginal"
    assert abs(rep["growth_exponent"]) <= 0.04
