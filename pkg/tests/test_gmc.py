import math

import numpy as np
import pytest

from lcft_lab.errors import ConfigError, EvaluationError
from lcft_lab.geometry import SphereGrid
from lcft_lab.gff import GFFSampler
from lcft_lab.gmc import GammaParam, chaos_measure, guard_moment_order, integrate


@pytest.fixture(scope="module")
def sampler():
    return GFFSampler(SphereGrid.build(12, 24), l_max=10)


def test_gamma_param_range():
    GammaParam(0.1)
    GammaParam(1.9)
    for bad in (0.0, -1.0, 2.0, 2.5):
        with pytest.raises(ConfigError):
            GammaParam(bad)


def test_gamma_zero_reduces_to_area(sampler):
    m = chaos_measure(sampler.sample(0, 0), 0.0)
    assert m.total_mass() == pytest.approx(4 * math.pi, rel=1e-12)


def test_mean_mass_is_sphere_area(sampler):
    n = 400
    masses = np.array(
        [chaos_measure(sampler.sample(7, r), 0.5).total_mass() for r in range(n)]
    )
    se = masses.std(ddof=1) / math.sqrt(n)
    assert abs(masses.mean() - 4 * math.pi) < 3 * se


def test_weights_positive_and_integrate(sampler):
    m = chaos_measure(sampler.sample(1, 0), 1.0)
    assert np.all(m.weights > 0)
    assert integrate(m, lambda nodes: np.ones(len(nodes))) == pytest.approx(
        m.total_mass()
    )
    # array-valued test function
    assert m.integrate(np.ones(m.grid.size if hasattr(m.grid, "size") else len(m.grid.nodes))) == pytest.approx(m.total_mass())


def test_integrate_rejects_nonfinite_on_support(sampler):
    m = chaos_measure(sampler.sample(1, 0), 1.0)
    with pytest.raises(EvaluationError):
        m.integrate(lambda nodes: np.full(len(nodes), np.inf))


def test_guard_moment_order():
    guard_moment_order(1.0, 2.0)  # threshold 4
    with pytest.raises(ConfigError):
        guard_moment_order(1.0, 4.0)
    with pytest.raises(ConfigError):
        guard_moment_order(math.sqrt(2.0), 2.0)  # threshold 2


def test_chaos_measure_provenance(sampler):
    s = sampler.sample(9, 4)
    m = chaos_measure(s, 0.8)
    assert (m.seed, m.replica, m.gamma, m.eps) == (9, 4, 0.8, 0.0)
