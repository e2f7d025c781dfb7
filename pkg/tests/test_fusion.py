import math

import numpy as np
import pytest

from lcft_lab.correlators import InsertionConfig, MCConfig
from lcft_lab.errors import ConfigError
from lcft_lab.fusion import (
    FusionProbeConfig,
    RadialProcessConfig,
    bound_shape,
    fusion_scaling_probe,
    kahane_decoupling_check,
    predicted_slope,
    radial_band_moment,
    radial_band_report,
)

BASE_SQRT2 = InsertionConfig(points=(0.0, 1.0, -1.0), momenta=(1.45,) * 3,
                             gamma=math.sqrt(2.0))
BASE_ONE = InsertionConfig(points=(0.0, 1.0, -1.0), momenta=(1.9,) * 3, gamma=1.0)


def test_predicted_slopes():
    assert predicted_slope(math.sqrt(2.0)) == pytest.approx(-1.75)
    assert predicted_slope(1.0) == pytest.approx(-0.875)
    # the threshold -2 is never crossed below gamma = 2
    for g in (0.3, 0.9, 1.3, 1.7, 1.95):
        assert predicted_slope(g) > -2.0


def test_probe_config_validation():
    with pytest.raises(ConfigError):
        FusionProbeConfig(base=BASE_ONE, anchors=(0, 1, 2))
    with pytest.raises(ConfigError):
        FusionProbeConfig(base=BASE_ONE, anchors=(5,))
    with pytest.raises(ConfigError):
        FusionProbeConfig(base=BASE_ONE, anchors=(0, 0), ball_indices=(1, 1))
    with pytest.raises(ConfigError):
        FusionProbeConfig(base=BASE_ONE, separations=(0.1, 0.05))
    with pytest.raises(ConfigError):
        FusionProbeConfig(base=BASE_ONE, ball_radius=0.7)
    with pytest.raises(ConfigError):
        # separations must stay below the ball radius
        FusionProbeConfig(base=BASE_ONE, ball_radius=0.05,
                          separations=(0.2, 0.1, 0.06, 0.03))


def test_probe_geometry():
    probe = FusionProbeConfig(base=BASE_ONE)
    t = probe.separations[-1]
    inner, outer = probe.pair_points(0, t)
    center = probe.pair_center(0)
    assert abs(outer - inner) == pytest.approx(t)
    assert (inner + outer) / 2 == pytest.approx(center)
    assert abs(center - BASE_ONE.points[0]) == pytest.approx(probe.ball_radius)


def test_fusion_probe_small_run_structure():
    probe = FusionProbeConfig(
        base=BASE_SQRT2, separations=tuple(0.5**k for k in range(3, 8))
    )
    rep = fusion_scaling_probe(probe, MCConfig(replicas=200, seed=2, l_max=10))
    assert len(rep["values"]) == len(probe.separations)
    assert all(v > 0 for v in rep["values"])
    assert rep["predicted"] == pytest.approx(-1.75)
    # even a short run lands in the right ballpark
    assert -3.0 < rep["slope"] < 0.0


def test_kahane_decoupling_two_pairs():
    probe = FusionProbeConfig(
        base=BASE_SQRT2,
        anchors=(0, 1),
        separations=tuple(0.5**k for k in range(3, 7)),
    )
    rep = kahane_decoupling_check(probe, MCConfig(replicas=150, seed=4, l_max=10))
    assert rep["pairs"] == 2 and not rep["trivial"]
    assert rep["constant"] > 0
    assert all(p["ratio"] > 0 for p in rep["points"])


def test_kahane_decoupling_single_pair_trivial():
    probe = FusionProbeConfig(base=BASE_ONE)
    rep = kahane_decoupling_check(probe)
    assert rep == {"pairs": 1, "constant": 1.0, "trivial": True}


def test_radial_config_validation():
    with pytest.raises(ConfigError):
        RadialProcessConfig(gamma=1.0, horizon=-1.0)
    with pytest.raises(ConfigError):
        RadialProcessConfig(gamma=1.0, horizon=4.0, q=-1.0)
    with pytest.raises(ConfigError):
        RadialProcessConfig(gamma=1.0, horizon=4.0, n_steps=10)


def test_radial_band_moment_probabilities():
    total = 0.0
    for k in range(0, 8):
        rep = radial_band_moment(RadialProcessConfig(
            gamma=1.0, horizon=4.0, q=0.0, k_band=k, replicas=2000,
            n_steps=512, seed=5))
        assert rep["stderr"] >= 0.0
        total += rep["band_probability"]
    assert total <= 1.0 + 1e-12
    assert total > 0.5  # the running max concentrates at small k


def test_bound_shape_monotone_decay():
    # at q = 0 and gamma = 1 the drift is -1/2: the polynomial factor (k+1)
    # wins at k = 0, after which the exponential decay dominates
    shapes = [bound_shape(1.0, 0.0, k, 6.0) for k in range(0, 7)]
    assert all(a > b for a, b in zip(shapes[1:], shapes[2:]))
    assert shapes[6] < shapes[0]
    assert bound_shape(1.0, 0.0, 0, 10.0) < bound_shape(1.0, 0.0, 0, 4.0)


def test_radial_band_report_small():
    rep = radial_band_report(gamma=1.0, q=0.0, ks=range(0, 4),
                             horizons=(4.0, 6.0), replicas=3000,
                             n_steps=512, seed=6)
    assert rep["constant"] > 0
    assert len(rep["cells"]) == 8
    for c in rep["cells"]:
        assert c["estimate"] <= rep["constant"] * c["shape"] + 1e-12
