"""Real orthonormal spherical harmonics pulled back through the plane chart.

The basis matrix multiplies an i.i.d. standard normal vector to produce the
truncated zero-mean GFF: column ``(l, m)`` is ``sqrt(2*pi / (l*(l+1)))``
times the real orthonormal harmonic, so ``B @ xi`` has covariance equal to
the degree-truncated Legendre series of the sphere covariance.
"""

from __future__ import annotations

import numpy as np


def n_harmonics(l_max: int) -> int:
    """Number of degree >= 1 harmonics: (l_max+1)^2 - 1."""
    return (l_max + 1) ** 2 - 1


def _column_offset(ell: int) -> int:
    # harmonics with degree < ell, excluding the constant mode
    return ell * ell - 1


def real_harmonic_basis(points: np.ndarray, l_max: int) -> np.ndarray:
    """Orthonormal real harmonics Y_{l,m} at plane-chart points.

    Returns an array of shape ``(len(points), (l_max+1)^2 - 1)``.  Columns
    for each degree l are ordered m = 0, then (cos, sin) pairs for
    m = 1..l.  Uses the standard fully-normalized associated Legendre
    recurrence, stable to high degree.
    """
    z = np.asarray(points, dtype=complex).ravel()
    r2 = (z * z.conjugate()).real
    u = (1.0 - r2) / (1.0 + r2)  # cos(theta)
    sin_t = 2.0 * np.abs(z) / (1.0 + r2)
    # unit phase; arbitrary at the pole where sin(theta) = 0
    absz = np.abs(z)
    phase = np.where(absz > 0, z / np.where(absz > 0, absz, 1.0), 1.0)

    npts = z.size
    out = np.empty((npts, n_harmonics(l_max)))

    inv_sqrt4pi = 1.0 / np.sqrt(4.0 * np.pi)

    def a(l, m):
        return np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))

    # sectoral seed S_mm, updated as m increases
    s_mm = np.full(npts, inv_sqrt4pi)
    cos_m = np.ones(npts)  # cos(m*phi), sin(m*phi) via phase powers
    sin_m = np.zeros(npts)
    phase_m = np.ones(npts, dtype=complex)

    for m in range(0, l_max + 1):
        if m > 0:
            s_mm = s_mm * sin_t * np.sqrt((2.0 * m + 1.0) / (2.0 * m))
            phase_m = phase_m * phase
            cos_m = phase_m.real
            sin_m = phase_m.imag
        # upward recurrence in l at fixed m
        s_prev = None
        s_curr = s_mm
        for ell in range(max(m, 1), l_max + 1):
            if ell == m:
                s_val = s_curr
            elif ell == m + 1:
                s_val = np.sqrt(2.0 * m + 3.0) * u * s_curr
                s_prev, s_curr = s_curr, s_val
            else:
                s_val = a(ell, m) * (u * s_curr - s_prev / a(ell - 1, m))
                s_prev, s_curr = s_curr, s_val
            scale = np.sqrt(2.0 * np.pi / (ell * (ell + 1.0)))
            off = _column_offset(ell)
            if m == 0:
                out[:, off] = scale * s_val
            else:
                out[:, off + 2 * m - 1] = scale * np.sqrt(2.0) * s_val * cos_m
                out[:, off + 2 * m] = scale * np.sqrt(2.0) * s_val * sin_m
    return out
