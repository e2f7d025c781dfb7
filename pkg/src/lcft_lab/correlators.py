"""Correlation-function estimation via the negative-moment chaos formula.

The correlator of vertex insertions (z_i, alpha_i) reduces to

    G(z) = 2 B gamma^{-1} Gamma(s) mu^{-s} prod_{i<j} |z_i-z_j|^{-a_i a_j}
           * E[ (int F(x, z) M_gamma(d^2 x))^{-s} ],

with s = (sum alpha - 2Q)/gamma and F the singular insertion weight.  The
estimator works in log-space throughout, refines the chaos quadrature near
each insertion, and keeps every replica on a deterministic RNG stream so
that paired comparisons (mu-scaling, KPZ, finite differences) share common
random numbers.

Kernel convention: the discrete estimator replaces ln(1/|x-y|) by its
spectrally truncated counterpart (the degree-L partial sum of the covariance
plus the metric terms).  With that choice the Girsanov manipulations behind
the KPZ identity and the derivative formula are exact at finite resolution,
so identity checks are limited by Monte Carlo error alone; the exact kernel
is available via ``use_exact_kernels`` for convergence studies.  The
normalization constant B uses the s-dependence gamma^2 s(s+1)/2 in the
exponent, which is the unique choice consistent with the KPZ identity.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import (
    ConfigError,
    EvaluationError,
    NumericalDegeneracyError,
    SeibergError,
)
from .geometry import (
    RoundMetric,
    SphereGrid,
    cos_angle,
    covariance_truncated,
    truncated_variance,
)
from .harmonics import n_harmonics, real_harmonic_basis
from .quadrature import singular_grid
from .rng import replica_rng

_LOG2 = math.log(2.0)
_A_CONST = _LOG2 - 0.5  # additive constant of the sphere covariance


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo and resolution parameters shared by the estimators."""

    replicas: int = 400
    seed: int = 1
    l_max: int = 24
    n_theta: int = 24
    n_phi: int = 48
    refine_levels: int = 20
    refine_angular: int = 16
    use_exact_kernels: bool = False

    def __post_init__(self):
        if self.replicas < 2:
            raise ConfigError("need at least 2 replicas")
        if self.l_max < 1:
            raise ConfigError("l_max must be >= 1")


def validate_seiberg(momenta, gamma: float):
    """Return s = (sum alpha - 2Q)/gamma, or raise on a bound violation."""
    momenta = tuple(float(a) for a in momenta)
    if not (0.0 < gamma < 2.0):
        raise ConfigError(f"gamma must lie in (0, 2), got {gamma}")
    q = 2.0 / gamma + gamma / 2.0
    bad = tuple(i for i, a in enumerate(momenta) if a >= q)
    if bad:
        raise SeibergError(
            f"local bound violated: momenta {bad} are >= Q = {q:.6g}",
            kind="local",
            indices=bad,
        )
    total = sum(momenta)
    if total <= 2.0 * q:
        raise SeibergError(
            f"total charge {total:.6g} does not exceed 2Q = {2 * q:.6g}",
            kind="total",
        )
    return (total - 2.0 * q) / gamma


@dataclass(frozen=True)
class InsertionConfig:
    """Vertex insertions with momenta, plus the coupling constants."""

    points: tuple
    momenta: tuple
    gamma: float
    mu: float = 1.0

    def __post_init__(self):
        points = tuple(complex(z) for z in self.points)
        momenta = tuple(float(a) for a in self.momenta)
        if len(points) != len(momenta):
            raise ConfigError("points and momenta must have equal length")
        if len(set(points)) != len(points):
            raise ConfigError("insertion points must be pairwise distinct")
        if self.mu <= 0:
            raise ConfigError("mu must be positive")
        validate_seiberg(momenta, self.gamma)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "momenta", momenta)

    @property
    def q(self) -> float:
        return 2.0 / self.gamma + self.gamma / 2.0

    @property
    def s(self) -> float:
        return (sum(self.momenta) - 2.0 * self.q) / self.gamma

    @property
    def delta(self) -> float:
        return min(
            abs(a - b)
            for i, a in enumerate(self.points)
            for b in self.points[i + 1 :]
        )

    @property
    def log_b(self) -> float:
        # KPZ-consistent normalization: exponent gamma^2 s(s+1)/2
        s = self.s
        return 2.0 * _LOG2 - 0.5 * _A_CONST * self.gamma**2 * s * (s + 1.0)

    def canonical(self) -> "InsertionConfig":
        order = sorted(
            range(len(self.points)),
            key=lambda i: (self.points[i].real, self.points[i].imag, self.momenta[i]),
        )
        return replace(
            self,
            points=tuple(self.points[i] for i in order),
            momenta=tuple(self.momenta[i] for i in order),
        )

    def extend(self, extra_points) -> "InsertionConfig":
        extras = tuple(complex(x) for x in extra_points)
        return replace(
            self,
            points=self.points + extras,
            momenta=self.momenta + (self.gamma,) * len(extras),
        )

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "points": [[z.real, z.imag] for z in self.points],
                "momenta": list(self.momenta),
                "gamma": self.gamma,
                "mu": self.mu,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CorrelationEstimate:
    """Monte Carlo correlator value with provenance."""

    value: float
    stderr: float
    replicas: int
    seed: int
    fingerprint: str
    resolution: dict = field(default_factory=dict)
    metric_tag: str = "round"


def singular_weight(x, config: InsertionConfig):
    """The insertion weight F(x, z) = prod_i (g(x)^{-1/4} / |x - z_i|)^{gamma a_i}."""
    x = np.asarray(x, dtype=complex)
    log_g = RoundMetric.log_density(x)
    out = np.zeros(x.shape, dtype=float)
    for z, a in zip(config.points, config.momenta):
        d = np.abs(x - z)
        if np.any(d == 0):
            raise EvaluationError(f"evaluation point coincides with insertion {z}")
        out += config.gamma * a * (-0.25 * log_g - np.log(d))
    return np.exp(out) if out.shape else float(np.exp(out))


def _log_inv_dist(w, y, l_max=None):
    """ln(1/|w - y|), or its truncation-consistent regularization.

    The regularized form is C_L(cos angle) + ln g(w)/4 + ln g(y)/4 - ln2 + 1/2,
    which agrees with ln(1/|w - y|) up to the covariance truncation tail and
    stays finite at coincident points.
    """
    w = np.asarray(w, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if l_max is None:
        return -np.log(np.abs(w - y))
    t = cos_angle(w, y)
    return (
        covariance_truncated(np.clip(t, -1.0, 1.0), l_max)
        + 0.25 * RoundMetric.log_density(w)
        + 0.25 * RoundMetric.log_density(y)
        - _A_CONST
    )


def _refined_nodes(centers, radii, inners, mc: MCConfig, base: SphereGrid,
                   levels: int, angular: int):
    """Base grid with per-center disks replaced by geometric radial subgrids."""
    keep = np.ones(base.size, dtype=bool)
    for c, r in zip(centers, radii):
        keep &= np.abs(base.nodes - c) > r
    nodes = [base.nodes[keep]]
    log_area = [np.log(base.plane_weights[keep])]
    for c, r, inner in zip(centers, radii, inners):
        if inner >= r:
            continue
        pts, w = singular_grid(c, inner, r, levels, angular)
        # the innermost disk of the subgrid is represented by one node
        core = np.pi * inner**2
        nodes.append(np.concatenate([pts, [c + 0.3 * inner]]))
        log_area.append(np.log(np.concatenate([w, [core]])))
    nodes = np.concatenate(nodes)
    return nodes, np.concatenate(log_area) + RoundMetric.log_density(nodes)


class ChaosEnsemble:
    """Chaos quadrature nodes plus the per-replica Gaussian machinery.

    Holds the node set (base sphere grid refined near the given centers),
    the harmonic basis evaluated there, and produces log chaos weights
    per replica from the deterministic (seed, replica) streams.
    """

    def __init__(self, gamma: float, mc: MCConfig, centers=(), radii=None):
        self.gamma = float(gamma)
        self.mc = mc
        base = SphereGrid.build(mc.n_theta, mc.n_phi)
        centers = tuple(complex(c) for c in centers)
        if radii is None:
            radii = ()
        if centers:
            inners = tuple(
                (1.0 + abs(c) ** 2) / (4.0 * mc.l_max) for c in centers
            )
            self.nodes, self.log_base = _refined_nodes(
                centers, radii, inners, mc, base, mc.refine_levels, mc.refine_angular
            )
        else:
            self.nodes = base.nodes
            self.log_base = np.log(base.sphere_weights)
        self.basis = real_harmonic_basis(self.nodes, mc.l_max)
        self.variance = truncated_variance(mc.l_max)

    def gaussian_coefficients(self, seed: int, replicas: int) -> np.ndarray:
        h = n_harmonics(self.mc.l_max)
        out = np.empty((replicas, h))
        for r in range(replicas):
            out[r] = replica_rng(seed, r).standard_normal(h)
        return out

    def log_weights(self, seed: int, replicas: int) -> np.ndarray:
        """(replicas, nodes) array of log chaos weights."""
        xi = self.gaussian_coefficients(seed, replicas)
        fields = xi @ self.basis.T
        return (
            self.log_base[None, :]
            + self.gamma * fields
            - 0.5 * self.gamma**2 * self.variance
        )


def _log_f_weight(config: InsertionConfig, nodes, l_max):
    """log F(node, z) with the estimator's kernel convention."""
    log_g = RoundMetric.log_density(nodes)
    out = np.zeros(nodes.shape, dtype=float)
    for z, a in zip(config.points, config.momenta):
        out += config.gamma * a * (
            _log_inv_dist(z, nodes, l_max) - 0.25 * log_g
        )
    return out


def log_prefactor(config: InsertionConfig, l_max=None) -> float:
    """Log of the closed-form prefactor of the reduction formula."""
    s = config.s
    if s <= 0:
        raise SeibergError("prefactor needs s > 0", kind="total")
    out = (
        _LOG2
        + config.log_b
        - s * math.log(config.mu)
        - math.log(config.gamma)
        + gammaln(s)
    )
    pts, mom = config.points, config.momenta
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            out += mom[i] * mom[j] * float(_log_inv_dist(pts[i], pts[j], l_max))
    return float(out)


def _negative_moment_stats(log_i: np.ndarray, s: float):
    """Mean and stderr of exp(-s * log_i), computed in log space."""
    log_y = -s * log_i
    shift = float(np.max(log_y))
    y = np.exp(log_y - shift)
    n = y.size
    mean = float(np.mean(y))
    stderr = float(np.std(y, ddof=1) / math.sqrt(n))
    return shift, mean, stderr


def _chaos_log_integrals(config: InsertionConfig, mc: MCConfig, ensemble=None):
    """Per-replica log of int F dM_gamma on the refined node set."""
    l_max = None if mc.use_exact_kernels else mc.l_max
    if ensemble is None:
        radius = config.delta / 4.0
        ensemble = ChaosEnsemble(
            config.gamma, mc, centers=config.points,
            radii=(radius,) * len(config.points),
        )
    log_f = _log_f_weight(config, ensemble.nodes, l_max)
    lw = ensemble.log_weights(mc.seed, mc.replicas)
    log_i = logsumexp(lw + log_f[None, :], axis=1)
    if not np.all(np.isfinite(log_i)):
        bad = np.where(~np.isfinite(log_i))[0]
        raise NumericalDegeneracyError(
            "chaos integral underflowed to zero mass",
            diagnostics={
                "replicas": bad.tolist()[:20],
                "max_log_weight": float(np.max(lw)),
                "max_log_f": float(np.max(log_f)),
            },
        )
    return log_i, ensemble


def estimate_correlation(
    config: InsertionConfig, extra_gamma_insertions=(), mc: MCConfig = MCConfig()
) -> CorrelationEstimate:
    """Monte Carlo estimate of G(z) (or G(x; z) for extra gamma insertions)."""
    ext = config.extend(extra_gamma_insertions).canonical()
    l_max = None if mc.use_exact_kernels else mc.l_max
    log_i, _ = _chaos_log_integrals(ext, mc)
    log_pref = log_prefactor(ext, l_max)
    shift, mean, stderr = _negative_moment_stats(log_i, ext.s)
    scale = math.exp(log_pref + shift)
    return CorrelationEstimate(
        value=scale * mean,
        stderr=scale * stderr,
        replicas=mc.replicas,
        seed=mc.seed,
        fingerprint=ext.fingerprint(),
        resolution={
            "l_max": mc.l_max,
            "n_theta": mc.n_theta,
            "n_phi": mc.n_phi,
            "refine_levels": mc.refine_levels,
            "exact_kernels": mc.use_exact_kernels,
        },
    )


def naive_correlation_oracle(config: InsertionConfig, mc: MCConfig = MCConfig()):
    """Brute-force reference: same formula on a plain uniform grid.

    No local refinement, no node masking; independent implementation used
    to validate the refined estimator.
    """
    ext = config.canonical()
    l_max = None if mc.use_exact_kernels else mc.l_max
    grid = SphereGrid.build(mc.n_theta, mc.n_phi)
    basis = real_harmonic_basis(grid.nodes, mc.l_max)
    v = truncated_variance(mc.l_max)
    log_f = _log_f_weight(ext, grid.nodes, l_max)
    h = n_harmonics(mc.l_max)
    log_i = np.empty(mc.replicas)
    g = ext.gamma
    for r in range(mc.replicas):
        x = basis @ replica_rng(mc.seed, r).standard_normal(h)
        log_w = np.log(grid.sphere_weights) + g * x - 0.5 * g**2 * v
        log_i[r] = logsumexp(log_w + log_f)
    shift, mean, stderr = _negative_moment_stats(log_i, ext.s)
    scale = math.exp(log_prefactor(ext, l_max) + shift)
    return CorrelationEstimate(
        value=scale * mean,
        stderr=scale * stderr,
        replicas=mc.replicas,
        seed=mc.seed,
        fingerprint=ext.fingerprint(),
        resolution={"l_max": mc.l_max, "n_theta": mc.n_theta, "n_phi": mc.n_phi,
                    "oracle": True},
    )


def _pair_log_kernel(x_points, nodes, gamma, l_max):
    """Log of the extra-insertion factor (g(y)^{-1/4}/|y - x|)^{gamma^2}.

    Returns a (nodes, x_points) matrix; the chaos node sits in the y slot.
    """
    log_g = RoundMetric.log_density(nodes)
    ld = _log_inv_dist(x_points[None, :], nodes[:, None], l_max)
    return gamma**2 * (ld - 0.25 * log_g[:, None])


def _insertion_correlators(config, x_points, mc, ensemble=None):
    """Per-replica estimates of G(x; z) for a batch of x points.

    Returns (per-replica matrix (replicas, nx), per-replica base log_i,
    ensemble).  Shares one chaos ensemble across all x (common random
    numbers); the heavy work is one dense matrix product per batch.
    """
    base = config.canonical()
    l_max = None if mc.use_exact_kernels else mc.l_max
    if ensemble is None:
        radius = base.delta / 4.0
        ensemble = ChaosEnsemble(
            base.gamma, mc, centers=base.points, radii=(radius,) * len(base.points)
        )
    log_f = _log_f_weight(base, ensemble.nodes, l_max)
    lw = ensemble.log_weights(mc.seed, mc.replicas) + log_f[None, :]
    row_shift = np.max(lw, axis=1)
    weights = np.exp(lw - row_shift[:, None])
    log_i_base = row_shift + np.log(np.sum(weights, axis=1))

    x_points = np.asarray(x_points, dtype=complex)
    log_k = _pair_log_kernel(x_points, ensemble.nodes, base.gamma, l_max)
    k_shift = np.max(log_k, axis=0)
    kernel = np.exp(log_k - k_shift[None, :])
    sums = weights @ kernel  # (replicas, nx)
    if np.any(sums <= 0):
        raise NumericalDegeneracyError("chaos integral underflow in batch estimate")
    log_i_x = row_shift[:, None] + k_shift[None, :] + np.log(sums)

    s1 = base.s + 1.0
    log_pref_x = np.empty(x_points.size)
    ext_template = None
    for m, x in enumerate(x_points):
        ext = base.extend([x])
        log_pref_x[m] = log_prefactor(ext, l_max)
        ext_template = ext
    g_x = np.exp(log_pref_x[None, :] - s1 * log_i_x)
    return g_x, log_i_base, ensemble, ext_template


def kpz_check(config: InsertionConfig, mc: MCConfig = MCConfig()) -> dict:
    """Check mu*gamma*int G(x; z) d^2x = (sum alpha - 2Q) G(z).

    Both sides share the same chaos replicas; the ratio's standard error
    uses the delta method with the replica covariance.
    """
    base = config.canonical()
    s_gamma = sum(base.momenta) - 2.0 * base.q
    radius = base.delta / 4.0
    ensemble = ChaosEnsemble(
        base.gamma, mc, centers=base.points, radii=(radius,) * len(base.points)
    )
    # integrating x over the chaos ensemble's own nodes makes the discrete
    # Girsanov identity exact in expectation: the check is then limited by
    # Monte Carlo error alone
    x_nodes = ensemble.nodes
    x_weights = np.exp(ensemble.log_base - RoundMetric.log_density(x_nodes))

    g_x, log_i_base, _, _ = _insertion_correlators(
        base, x_nodes, mc, ensemble=ensemble
    )
    lhs = base.mu * base.gamma * (g_x @ x_weights)
    log_pref0 = log_prefactor(base, None if mc.use_exact_kernels else mc.l_max)
    shift, _, _ = _negative_moment_stats(log_i_base, base.s)
    rhs = s_gamma * np.exp(log_pref0 - base.s * log_i_base)

    n = mc.replicas
    lm, rm = float(np.mean(lhs)), float(np.mean(rhs))
    cov = np.cov(lhs, rhs, ddof=1)
    ratio = lm / rm
    rel_var = cov[0, 0] / lm**2 + cov[1, 1] / rm**2 - 2.0 * cov[0, 1] / (lm * rm)
    stderr = abs(ratio) * math.sqrt(max(rel_var, 0.0) / n)
    return {
        "ratio": ratio,
        "stderr": stderr,
        "lhs": lm,
        "lhs_stderr": float(np.std(lhs, ddof=1) / math.sqrt(n)),
        "rhs": rm,
        "rhs_stderr": float(np.std(rhs, ddof=1) / math.sqrt(n)),
        "coefficient": s_gamma,
        "replicas": n,
        "seed": mc.seed,
        "fingerprint": base.fingerprint(),
    }


def weyl_transform(
    estimate: CorrelationEstimate,
    phi,
    grid: SphereGrid = None,
    phi_grad=None,
    gamma: float = None,
    q: float = None,
) -> CorrelationEstimate:
    """Multiply an estimate by the conformal anomaly factor of the metric e^phi g.

    The factor is exp(((c_L - 1)/24 pi) * int (|d_z phi|^2 + g phi) d^2 z)
    with c_L = 1 + 6 Q^2 (the curvature term uses R_g = 2).  ``phi`` is a
    callable on complex points; its holomorphic derivative is taken from
    ``phi_grad`` if given, else by central differences.
    """
    if q is None:
        if gamma is None:
            raise ConfigError("need gamma or q for the anomaly coefficient")
        q = 2.0 / gamma + gamma / 2.0
    if grid is None:
        grid = SphereGrid.build(48, 96)
    z = grid.nodes
    vals = np.asarray(phi(z), dtype=float)
    if phi_grad is not None:
        grad = np.asarray(phi_grad(z), dtype=complex)
    else:
        h = 1e-5 * (1.0 + np.abs(z))
        dx = (np.asarray(phi(z + h)) - np.asarray(phi(z - h))) / (2.0 * h)
        dy = (np.asarray(phi(z + 1j * h)) - np.asarray(phi(z - 1j * h))) / (2.0 * h)
        grad = 0.5 * (dx - 1j * dy)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grad))):
        raise EvaluationError("anomaly quadrature did not converge for this phi")
    plane = grid.plane_weights
    integral = float(np.abs(grad) ** 2 @ plane) + float(
        vals @ grid.sphere_weights
    )
    anomaly = math.exp(6.0 * q**2 / (24.0 * math.pi) * integral)
    return replace(
        estimate,
        value=estimate.value * anomaly,
        stderr=estimate.stderr * anomaly,
        metric_tag=f"{estimate.metric_tag}*exp(phi)",
    )
