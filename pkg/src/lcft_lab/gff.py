"""Sampling the zero-mean GFF on the sphere and its mollification.

The field is the truncated eigenfunction expansion
``X = sqrt(2*pi) * sum_{l=1..L} sum_m X_{lm} e_{lm} / sqrt(l*(l+1))``
with i.i.d. standard normal coefficients drawn from the (seed, replica)
Philox stream.  A sample keeps its coefficient vector, so it can be
evaluated at arbitrary plane-chart points (needed by the locally refined
correlator quadratures).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, ResolutionError
from .geometry import (
    SphereGrid,
    RoundMetric,
    cos_angle,
    covariance_truncated,
    truncated_variance,
)
from .harmonics import real_harmonic_basis, n_harmonics
from .rng import replica_rng


@dataclass(frozen=True)
class FieldSample:
    """One realization of the (possibly mollified) truncated GFF."""

    grid: SphereGrid
    l_max: int
    seed: int
    replica: int
    values: np.ndarray = field(repr=False)
    variance: np.ndarray = field(repr=False)  # per-node Var used for chaos normalization
    coeffs: np.ndarray | None = field(default=None, repr=False)
    eps: float = 0.0  # 0 = spectral truncation only

    def evaluate(self, points) -> np.ndarray:
        """Exact field values at arbitrary points (spectral samples only)."""
        if self.coeffs is None:
            raise ConfigError("sample does not carry coefficients; cannot evaluate off-grid")
        pts = np.asarray(points, dtype=complex).ravel()
        return real_harmonic_basis(pts, self.l_max) @ self.coeffs

    def weighted_mean(self) -> float:
        """Quadrature mean over the sphere, should vanish for the zero-mean GFF."""
        return float(np.dot(self.grid.sphere_weights, self.values) / RoundMetric.total_mass)


class GFFSampler:
    """Draws FieldSamples on a fixed grid; caches the harmonic basis."""

    def __init__(self, grid: SphereGrid, l_max: int):
        if l_max < 1:
            raise ConfigError("l_max must be >= 1")
        self.grid = grid
        self.l_max = l_max
        self._basis = real_harmonic_basis(grid.nodes, l_max)
        self._var = truncated_variance(l_max)

    @property
    def n_gaussians(self) -> int:
        return n_harmonics(self.l_max)

    def coefficients(self, seed: int, replica: int) -> np.ndarray:
        return replica_rng(seed, replica).standard_normal(self.n_gaussians)

    def sample(self, seed: int, replica: int) -> FieldSample:
        xi = self.coefficients(seed, replica)
        values = self._basis @ xi
        var = np.full(self.grid.size, self._var)
        return FieldSample(
            grid=self.grid,
            l_max=self.l_max,
            seed=seed,
            replica=replica,
            values=values,
            variance=var,
            coeffs=xi,
        )


# ----------------------------------------------------------------- mollifier


class MollifierKernel:
    """Smooth compactly supported bump: rho(t) = exp(-1/(1-t)) on [0, 1).

    The induced plane kernel is ``rho_eps(z) = eps^-2 rho(|z|^2/eps^2)``
    (note the squared argument), normalized so that the total plane-chart
    mass is 1 independently of eps.
    """

    def __init__(self, eps: float, n_radial: int = 6, n_angular: int = 12):
        if eps <= 0:
            raise ConfigError("mollifier scale must be positive")
        self.eps = float(eps)
        self.n_radial = n_radial
        self.n_angular = n_angular

    @staticmethod
    def profile(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = t < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - t[inside]))
        return out

    def stencil(self, center: complex, angle_offset: float = 0.0):
        """Quadrature nodes/weights for convolution against rho_eps.

        Gauss-Legendre in t = (r/eps)^2, uniform angles; weights are
        normalized to unit sum so a constant field is reproduced exactly.
        """
        t, wt = leggauss(self.n_radial)
        t = 0.5 * (t + 1.0)  # map to (0, 1)
        wt = 0.5 * wt
        theta = (np.arange(self.n_angular) + 0.5) * (2.0 * np.pi / self.n_angular) + angle_offset
        radii = self.eps * np.sqrt(t)
        pts = (center + radii[:, None] * np.exp(1j * theta)[None, :]).ravel()
        w = np.broadcast_to((self.profile(t) * wt)[:, None], (self.n_radial, self.n_angular)).ravel()
        w = w / w.sum()
        return pts, w


def mollified_variance(center, kernel: MollifierKernel, l_max: int) -> float:
    """Var of the mollified truncated field at a point.

    Double convolution of the truncated covariance against the mollifier
    stencil; exact for the sampled field up to stencil quadrature error.
    """
    pts, w = kernel.stencil(complex(center))
    t = cos_angle(pts[:, None], pts[None, :])
    np.fill_diagonal(t, 1.0)
    cov = covariance_truncated(t, l_max)
    np.fill_diagonal(cov, truncated_variance(l_max))
    return float(w @ cov @ w)


@lru_cache(maxsize=8)
def _log_self_convolution_constant(n_radial: int, n_angular: int) -> float:
    """c_rho = Int rho^(u) rho^(v) ln(1/|u-v|) at unit scale (normalized kernel).

    Uses two staggered stencils so no node pair coincides; the log
    singularity is integrable, making the staggered product rule accurate
    enough for the variance checks.
    """
    k = MollifierKernel(1.0, n_radial=n_radial, n_angular=n_angular)
    k2 = MollifierKernel(1.0, n_radial=n_radial + 3, n_angular=n_angular + 7)
    p1, w1 = k.stencil(0.0)
    p2, w2 = k2.stencil(0.0, angle_offset=0.37)
    d = np.abs(p1[:, None] - p2[None, :])
    return float(w1 @ (-np.log(d)) @ w2)


def mollified_variance_continuum(center, kernel: MollifierKernel) -> float:
    """Var X_eps from the exact (untruncated) covariance.

    Analytic reduction of the double convolution:
    ``ln(1/eps) + c_rho - (rho_eps * ln g)(center)/2 + ln2 - 1/2``.
    """
    c_rho = _log_self_convolution_constant(kernel.n_radial, kernel.n_angular)
    pts, w = kernel.stencil(complex(center))
    smoothed_logg = float(w @ RoundMetric.log_density(pts))
    return float(np.log(1.0 / kernel.eps) + c_rho - 0.5 * smoothed_logg + np.log(2.0) - 0.5)


def mollify(sample: FieldSample, kernel: MollifierKernel) -> FieldSample:
    """Discrete plane-chart convolution of a spectral sample with rho_eps.

    Evaluates the field exactly on a local stencil around every grid node
    (the sample carries its coefficients) and records the per-node variance
    of the smoothed field for chaos normalization.
    """
    if sample.coeffs is None:
        raise ConfigError("mollify requires a spectral sample with coefficients")
    if sample.eps > 0:
        raise ConfigError("sample is already mollified")
    grid = sample.grid
    # resolution guard: eps must exceed a few local node spacings near the
    # equator (the chart-densest region we quadrature over)
    spacing = 2.0 * np.pi / grid.n_phi
    if kernel.eps < 2.0 * spacing / 4.0:
        raise ResolutionError(
            f"mollifier scale {kernel.eps:g} below grid resolution guard {spacing / 2.0:g}"
        )
    nodes = grid.nodes
    values = np.empty(grid.size)
    variance = np.empty(grid.size)
    # shared stencil geometry relative to each node
    rel_pts, w = kernel.stencil(0.0)
    for k in range(grid.size):
        pts = nodes[k] + rel_pts
        values[k] = w @ sample.evaluate(pts)
        t = cos_angle(pts[:, None], pts[None, :])
        np.fill_diagonal(t, 1.0)
        cov = covariance_truncated(t, sample.l_max)
        np.fill_diagonal(cov, truncated_variance(sample.l_max))
        variance[k] = w @ cov @ w
    return FieldSample(
        grid=grid,
        l_max=sample.l_max,
        seed=sample.seed,
        replica=sample.replica,
        values=values,
        variance=variance,
        coeffs=None,
        eps=kernel.eps,
    )
