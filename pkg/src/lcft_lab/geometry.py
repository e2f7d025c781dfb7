"""Round-sphere geometry in the stereographic plane chart.

The sphere carries the round metric ``g(z) = 4 / (1 + |z|^2)^2`` with
constant scalar curvature 2 and total mass ``4*pi``.  All quadrature grids
store nodes in the plane chart together with sphere-area weights
``g(z) d^2z``, so integrals against the metric volume are plain weighted
sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import legder, legval, leggauss

from .errors import ConfigError

LOG2 = float(np.log(2.0))


class RoundMetric:
    """The fixed round metric on the Riemann sphere, plane chart."""

    curvature = 2.0
    total_mass = 4.0 * np.pi

    @staticmethod
    def density(z):
        z = np.asarray(z, dtype=complex)
        return 4.0 / (1.0 + (z * z.conjugate()).real) ** 2

    @staticmethod
    def log_density(z):
        z = np.asarray(z, dtype=complex)
        return 2.0 * LOG2 - 2.0 * np.log1p((z * z.conjugate()).real)


def metric_density(z):
    """g(z) = 4 / (1 + |z|^2)^2."""
    return RoundMetric.density(z)


def sphere_point(z):
    """Unit vector on S^2 for a plane-chart point (z=0 maps to the north pole)."""
    z = np.asarray(z, dtype=complex)
    r2 = (z * z.conjugate()).real
    denom = 1.0 + r2
    return np.stack(
        [2.0 * z.real / denom, 2.0 * z.imag / denom, (1.0 - r2) / denom], axis=-1
    )


def cos_angle(z1, z2):
    """Cosine of the spherical angle between two plane-chart points."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    d2 = np.abs(z1 - z2) ** 2
    r1 = (z1 * z1.conjugate()).real
    r2 = (z2 * z2.conjugate()).real
    return 1.0 - 2.0 * d2 / ((1.0 + r1) * (1.0 + r2))


def covariance(z1, z2):
    """Zero-mean GFF covariance on the round sphere.

    ``ln(1/|z1-z2|) - (ln g(z1) + ln g(z2))/4 + ln 2 - 1/2``; symmetric,
    with a logarithmic singularity on the diagonal.
    """
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    d = np.abs(z1 - z2)
    if np.any(d == 0.0):
        raise ValueError("covariance is singular at coincident points")
    return (
        -np.log(d)
        - 0.25 * (RoundMetric.log_density(z1) + RoundMetric.log_density(z2))
        + LOG2
        - 0.5
    )


def covariance_from_cos(t):
    """Covariance as a function of the spherical angle, C = -ln(1-t)/2 + ln2/2 - 1/2.

    Equivalent closed form of :func:`covariance`; used for truncation-tail
    bookkeeping and the Legendre series cross-checks.
    """
    t = np.asarray(t, dtype=float)
    return -0.5 * np.log1p(-t) + 0.5 * LOG2 - 0.5


def _series_coeffs(l_max: int) -> np.ndarray:
    ell = np.arange(1, l_max + 1, dtype=float)
    coeffs = np.zeros(l_max + 1)
    coeffs[1:] = 0.5 * (1.0 / ell + 1.0 / (ell + 1.0))
    return coeffs


def covariance_truncated(t, l_max: int):
    """Degree-``l_max`` Legendre partial sum of the covariance.

    This is the exact covariance of the spectrally truncated field, as a
    function of the cosine of the spherical angle.
    """
    if l_max < 1:
        raise ConfigError("l_max must be >= 1")
    return legval(np.asarray(t, dtype=float), _series_coeffs(l_max))


def covariance_truncated_deriv(t, l_max: int):
    """d/dt of the truncated covariance (Legendre series derivative)."""
    if l_max < 1:
        raise ConfigError("l_max must be >= 1")
    return legval(np.asarray(t, dtype=float), legder(_series_coeffs(l_max)))


def truncation_tail(t, l_max: int):
    """|C - C_L|: the tail of the Legendre expansion beyond degree l_max."""
    return np.abs(covariance_from_cos(t) - covariance_truncated(t, l_max))


def truncated_variance(l_max: int) -> float:
    """Pointwise variance of the degree-``l_max`` truncated field.

    Position independent by rotational symmetry:
    ``sum_{l<=L} (1/l + 1/(l+1)) / 2``.
    """
    ell = np.arange(1, l_max + 1, dtype=float)
    return float(0.5 * np.sum(1.0 / ell + 1.0 / (ell + 1.0)))


@dataclass(frozen=True)
class SphereGrid:
    """Product quadrature grid: Gauss-Legendre in cos(theta), uniform in phi.

    ``sphere_weights`` are the full metric-area weights ``g(z) d^2z``; they
    sum to ``4*pi`` exactly.  ``plane_weights`` are the corresponding
    plane-chart Lebesgue areas.
    """

    n_theta: int
    n_phi: int
    nodes: np.ndarray = field(repr=False)
    sphere_weights: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n_theta: int, n_phi: int) -> "SphereGrid":
        if n_theta < 2 or n_phi < 4:
            raise ConfigError("grid resolution too small (need n_theta>=2, n_phi>=4)")
        u, wu = leggauss(n_theta)  # u = cos(theta)
        phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
        theta = np.arccos(u)
        r = np.tan(theta / 2.0)
        z = (r[:, None] * np.exp(1j * phi)[None, :]).ravel()
        w = np.broadcast_to((wu * (2.0 * np.pi / n_phi))[:, None], (n_theta, n_phi)).ravel()
        return cls(n_theta=n_theta, n_phi=n_phi, nodes=z, sphere_weights=w.copy())

    @property
    def plane_weights(self) -> np.ndarray:
        return self.sphere_weights / metric_density(self.nodes)

    @property
    def size(self) -> int:
        return self.nodes.size

    def total_mass(self) -> float:
        return float(np.sum(self.sphere_weights))
