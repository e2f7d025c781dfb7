"""Numeric evaluation of canonical rewrite terms.

Every canonical term produced by the rewrite engine is a product of an
exact coefficient, insertion-point kernels, region indicators and chaos
factors, integrated over its free variables against correlators with
extra gamma-insertions.  This module realizes those integrals with the
same regularized kernels and the same per-replica chaos ensemble as the
correlator estimators, so the symbolic identities hold replica by
replica up to quadrature error, and sums of terms can be compared to
finite differences with common random numbers.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .correlators import (
    InsertionConfig,
    MCConfig,
    ChaosEnsemble,
    _insertion_correlators,
    _log_f_weight,
    _log_inv_dist,
    _chaos_log_integrals,
    log_prefactor,
)
from .errors import ConfigError, EvaluationError
from .geometry import RoundMetric, cos_angle, covariance_truncated_deriv
from .quadrature import contour_nodes
from .rewrite import DerivativeRequest, expand_derivative, term_group
from .terms import (
    ANNULUS,
    BALL,
    BALL_C,
    FFactor,
    Indicator,
    InsertionKernel,
    PairKernel,
    Term,
    check_absolutely_convergent,
)

__all__ = [
    "TermEstimate",
    "evaluate_term",
    "evaluate_terms",
    "finite_difference_derivative",
    "derivative_check",
]


# ---------------------------------------------------------------------------
# regularized kernel derivative


def _d_log_reg(x, y, l_max):
    """Wirtinger derivative (in the first slot) of the regularized log kernel.

    For the exact kernel this is d/dx of -ln|x - y| = -1/(2(x - y)); the
    truncated form differentiates the Legendre series, so that evaluated
    kernels match finite differences of the estimator exactly at finite
    spectral resolution.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if l_max is None:
        return -0.5 / (x - y)
    t = np.clip(cos_angle(x, y), -1.0, 1.0)
    dc = covariance_truncated_deriv(t, l_max)
    xb, yb = np.conj(x), np.conj(y)
    dt = -2.0 * (xb - np.conj(y)) * (1.0 + y * xb) / (
        (1.0 + x * xb) ** 2 * (1.0 + y * np.conj(y))
    )
    dlog_g = -2.0 * xb / (1.0 + x * xb)
    return dc * dt + 0.25 * dlog_g


def _kernel_d(x, y, l_max):
    """The estimator's realization of the kernel 1/(x - y)."""
    return -2.0 * _d_log_reg(x, y, l_max)


# ---------------------------------------------------------------------------
# term geometry


def _ball_geometry(term: Term, config: InsertionConfig, base_radius: float):
    """Map ball index -> (center point, radius).

    Later balls declared around the same insertion are nested, so their
    radii halve with each repetition; balls around distinct insertions
    share the base radius and stay disjoint for radii below delta / 2.
    """
    geom, seen = {}, {}
    for j, c in term.balls:
        if not 1 <= c <= len(config.points):
            raise EvaluationError(f"ball {j} centered on unknown insertion {c}")
        k = seen.get(c, 0)
        seen[c] = k + 1
        geom[j] = (complex(config.points[c - 1]), base_radius * 0.5**k)
    return geom


def _region_mask(nodes, regions, geom):
    mask = np.ones(nodes.shape, dtype=bool)
    for ind in regions:
        c, r = geom[ind.j]
        d = np.abs(nodes - c)
        if ind.kind == BALL:
            mask &= d <= r
        elif ind.kind == BALL_C:
            mask &= d > r
        elif ind.kind == ANNULUS:
            w = r / (4.0 * ind.j * (ind.j + 1))
            mask &= (d >= r - 0.5 * w) & (d <= r + 0.5 * w)
        else:  # pragma: no cover - indicator kinds are a closed set
            raise EvaluationError(f"unknown indicator kind {ind.kind!r}")
    return mask


def _kernel_values(term: Term, geom, pos, config, l_max):
    """Product of all kernel factors at the given variable positions.

    ``pos`` maps variable index to a broadcastable complex array; the
    indicator carried by each F-factor is evaluated here, the loose
    region indicators having already been folded into the node masks.
    """
    out = None
    for k in term.kernels:
        if isinstance(k, InsertionKernel):
            z = config.points[k.i - 1]
            if k.slot == "z":
                # kernel born from a z_i-derivative: differentiate the
                # regularized log kernel at the insertion slot
                v = -_kernel_d(z, pos[k.k], l_max)
            else:
                v = _kernel_d(pos[k.k], z, l_max)
        elif isinstance(k, PairKernel):
            v = _kernel_d(pos[k.k], pos[k.l], l_max)
        else:
            c, r = geom[k.j]
            inside = np.abs(np.asarray(pos[k.a]) - c) <= r
            v = inside * _kernel_d(pos[k.a], pos[k.b], l_max)
        out = v if out is None else out * v
    if out is None:
        return None
    return np.asarray(out, dtype=complex)


def _constant_factor(term: Term, config: InsertionConfig, l_max) -> complex:
    """Exact coefficient times the insertion-pair prefactor kernels."""
    out = term.coeff.evaluate(config)
    for p, q in term.z_kernels:
        out *= complex(
            _kernel_d(config.points[p - 1], config.points[q - 1], l_max)
        )
    return out


# ---------------------------------------------------------------------------
# per-replica evaluation paths


def _single_insertion_g(config, xs, mc, ensemble):
    g_x, _, _, _ = _insertion_correlators(config, xs, mc, ensemble=ensemble)
    return g_x  # (replicas, nx)


def _pair_insertion_g(config, xs, ys, mc, ensemble):
    """Yield (x index, per-replica G(x, y; z) matrix of shape (R, ny))."""
    base = config
    l_max = None if mc.use_exact_kernels else mc.l_max
    log_f = _log_f_weight(base, ensemble.nodes, l_max)
    lw = ensemble.log_weights(mc.seed, mc.replicas) + log_f[None, :]
    row_shift = np.max(lw, axis=1)
    weights = np.exp(lw - row_shift[:, None])

    g2 = base.gamma**2
    log_g = RoundMetric.log_density(ensemble.nodes)

    def log_kernel(points):
        ld = _log_inv_dist(points[None, :], ensemble.nodes[:, None], l_max)
        return g2 * (ld - 0.25 * log_g[:, None])

    log_kx = log_kernel(xs)
    log_ky = log_kernel(ys)
    kx_shift = np.max(log_kx, axis=0)
    ky_shift = np.max(log_ky, axis=0)
    kx = np.exp(log_kx - kx_shift[None, :])
    ky = np.exp(log_ky - ky_shift[None, :])

    # prefactor of the doubly extended configuration, split into a constant
    # and the position-dependent insertion kernels
    ref = base.extend([xs[0], ys[0]])
    lp_ref = log_prefactor(ref, l_max)

    def cross(points):
        out = np.zeros(points.shape, dtype=float)
        for z, a in zip(base.points, base.momenta):
            out += base.gamma * a * _log_inv_dist(z, points, l_max)
        return out

    cx, cy = cross(xs), cross(ys)
    cxy = g2 * _log_inv_dist(xs[:, None], ys[None, :], l_max)
    lp_const = lp_ref - cx[0] - cy[0] - cxy[0, 0]
    s_ext = base.s + 2.0

    for ix in range(xs.size):
        sums = (weights * kx[:, ix][None, :]) @ ky  # (R, ny)
        if np.any(sums <= 0):
            raise EvaluationError("pair chaos integral underflowed")
        log_i = (
            row_shift[:, None]
            + kx_shift[ix]
            + ky_shift[None, :]
            + np.log(sums)
        )
        lp = lp_const + cx[ix] + cy[None, :] + cxy[ix, :][None, :]
        yield ix, np.exp(lp - s_ext * log_i)


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class TermEstimate:
    """Monte Carlo value of one canonical term (or a CRN sum of terms)."""

    value: complex
    stderr_re: float
    stderr_im: float
    replicas: int
    seed: int
    group: str = ""
    resolution: dict = field(default_factory=dict)

    @property
    def stderr(self) -> float:
        return math.hypot(self.stderr_re, self.stderr_im)


def _aggregate(vals: np.ndarray, mc: MCConfig, group: str) -> TermEstimate:
    n = vals.size
    return TermEstimate(
        value=complex(np.mean(vals)),
        stderr_re=float(np.std(vals.real, ddof=1) / math.sqrt(n)),
        stderr_im=float(np.std(vals.imag, ddof=1) / math.sqrt(n)),
        replicas=n,
        seed=mc.seed,
        group=group,
        resolution={"l_max": mc.l_max, "exact_kernels": mc.use_exact_kernels},
    )


def _shared_ensemble(config: InsertionConfig, mc: MCConfig) -> ChaosEnsemble:
    base = config
    radius = base.delta / 4.0
    return ChaosEnsemble(
        base.gamma, mc, centers=base.points, radii=(radius,) * len(base.points)
    )


def term_replica_values(
    term: Term,
    config: InsertionConfig,
    mc: MCConfig,
    ensemble: ChaosEnsemble = None,
    ball_radius: float = None,
    contour_order: int = 64,
) -> np.ndarray:
    """Per-replica complex values of one canonical term.

    Shares ``ensemble`` across calls for common random numbers.  Raises
    ``EvaluationError`` for terms that fail the convergence certificate
    and for opaque phi markers without an evaluable realization here.
    """
    base = config
    l_max = None if mc.use_exact_kernels else mc.l_max
    if term.n_insertions and term.n_insertions != len(base.points):
        raise EvaluationError(
            "term was derived for a different number of insertions"
        )
    if not term.is_contour:
        ok, certs = check_absolutely_convergent(term, base.gamma)
        if not ok:
            raise EvaluationError(
                "term fails the absolute-convergence certificate",
            )
    if term.phi:
        raise EvaluationError(
            "term carries phi markers with no numeric realization: "
            + "; ".join(p.serialize() for p in term.phi)
        )
    if ensemble is None:
        ensemble = _shared_ensemble(base, mc)
    if ball_radius is None:
        ball_radius = base.delta / 4.0
    if ball_radius >= base.delta / 2.0:
        raise ConfigError("ball radius must stay below delta / 2")

    geom = _ball_geometry(term, base, ball_radius)
    const = _constant_factor(term, base, l_max)
    free = term.free_vars
    plane_w = np.exp(ensemble.log_base - RoundMetric.log_density(ensemble.nodes))

    if term.contours:
        if len(term.contours) != 1 or free:
            raise EvaluationError(
                "only single-contour terms without free variables are evaluable"
            )
        binding = term.contours[0]
        if binding.differential != "dxbar":
            raise EvaluationError(
                f"unsupported contour differential {binding.differential!r}"
            )
        c, r = geom[binding.j]
        pts, dz = contour_nodes(c, r, contour_order)
        g = _single_insertion_g(base, pts, mc, ensemble)
        kern = _kernel_values(term, geom, {binding.var: pts}, base, l_max)
        line = np.conj(dz)
        if kern is not None:
            line = line * kern
        return const * (g @ line)

    if not free:
        log_i, _ = _chaos_log_integrals(base, mc, ensemble=ensemble)
        g0 = np.exp(log_prefactor(base, l_max) - base.s * log_i)
        return const * g0

    if len(free) == 1:
        v = free[0]
        mask = _region_mask(ensemble.nodes, term.indicators_of(v), geom)
        if not np.any(mask):
            raise EvaluationError("no quadrature nodes in the term's region")
        xs = ensemble.nodes[mask]
        w = plane_w[mask]
        g = _single_insertion_g(base, xs, mc, ensemble)
        kern = _kernel_values(term, geom, {v: xs}, base, l_max)
        if kern is not None:
            w = w * kern
        return const * (g @ w)

    if len(free) == 2:
        masks = {}
        for v in free:
            regions = list(term.indicators_of(v))
            for k in term.kernels:
                if isinstance(k, FFactor) and k.a == v:
                    regions.append(Indicator(v, BALL, k.j))
            masks[v] = _region_mask(ensemble.nodes, tuple(regions), geom)
        # the variable with the smaller node set drives the outer loop
        va, vb = sorted(free, key=lambda v: int(np.sum(masks[v])))
        if not (np.any(masks[va]) and np.any(masks[vb])):
            raise EvaluationError("no quadrature nodes in the term's region")
        xs, ws = ensemble.nodes[masks[va]], plane_w[masks[va]]
        ys, wy = ensemble.nodes[masks[vb]], plane_w[masks[vb]]
        vals = np.zeros(mc.replicas, dtype=complex)
        for ix, g in _pair_insertion_g(base, xs, ys, mc, ensemble):
            kern = _kernel_values(
                term, geom, {va: xs[ix], vb: ys}, base, l_max
            )
            col = wy if kern is None else wy * kern
            vals += ws[ix] * (g @ col)
        return const * vals

    raise EvaluationError(
        f"terms with {len(free)} free variables are not evaluable"
    )


def evaluate_term(
    term: Term,
    config: InsertionConfig,
    mc: MCConfig = MCConfig(),
    ensemble: ChaosEnsemble = None,
    ball_radius: float = None,
    contour_order: int = 64,
) -> TermEstimate:
    """Monte Carlo value of one canonical term with propagated error."""
    vals = term_replica_values(
        term, config, mc, ensemble=ensemble, ball_radius=ball_radius,
        contour_order=contour_order,
    )
    return _aggregate(vals, mc, term_group(term))


def evaluate_terms(
    terms,
    config: InsertionConfig,
    mc: MCConfig = MCConfig(),
    ball_radius: float = None,
    contour_order: int = 64,
) -> TermEstimate:
    """CRN sum of a term list: one shared ensemble, per-replica addition."""
    terms = list(terms)
    if not terms:
        raise ConfigError("empty term list")
    ensemble = _shared_ensemble(config, mc)
    vals = np.zeros(mc.replicas, dtype=complex)
    for t in terms:
        vals += term_replica_values(
            t, config, mc, ensemble=ensemble, ball_radius=ball_radius,
            contour_order=contour_order,
        )
    return _aggregate(vals, mc, "sum")


# ---------------------------------------------------------------------------
# finite differences


def fd_replica_values(
    config: InsertionConfig,
    i: int,
    h: float,
    mc: MCConfig = MCConfig(),
    ensemble: ChaosEnsemble = None,
) -> np.ndarray:
    """Per-replica central differences of the correlator in z_i.

    The quadrature node set is frozen at the unshifted configuration so
    the difference measures the derivative of the discrete functional
    itself; node sets that track the insertions would add a spurious
    grid-motion derivative on top of it.  The random field is shared
    across all four shifted evaluations (common random numbers), and the
    real and imaginary steps combine into d/dz = (d/dx - i d/dy) / 2.
    """
    base = config
    if not 1 <= i <= len(base.points):
        raise ConfigError(f"no insertion with index {i}")
    if h <= 0 or h >= base.delta / 10.0:
        raise ConfigError("step must satisfy 0 < h < delta / 10")
    if ensemble is None:
        ensemble = _shared_ensemble(base, mc)
    l_max = None if mc.use_exact_kernels else mc.l_max
    lw = ensemble.log_weights(mc.seed, mc.replicas)

    def g0(dz):
        pts = list(base.points)
        pts[i - 1] = pts[i - 1] + dz
        if len(set(pts)) != len(pts):
            raise ConfigError("finite-difference step collides insertions")
        ext = InsertionConfig(
            points=tuple(pts), momenta=base.momenta, gamma=base.gamma,
            mu=base.mu,
        )
        log_f = _log_f_weight(ext, ensemble.nodes, l_max)
        log_i = logsumexp(lw + log_f[None, :], axis=1)
        if not np.all(np.isfinite(log_i)):
            raise EvaluationError("chaos integral underflowed in the step")
        return np.exp(log_prefactor(ext, l_max) - ext.s * log_i)

    ddx = (g0(h) - g0(-h)) / (2.0 * h)
    ddy = (g0(1j * h) - g0(-1j * h)) / (2.0 * h)
    return 0.5 * (ddx - 1j * ddy)


def finite_difference_derivative(
    config: InsertionConfig, i: int, h: float, mc: MCConfig = MCConfig()
) -> TermEstimate:
    """Central-difference estimate of the holomorphic derivative in z_i."""
    vals = fd_replica_values(config, i, h, mc)
    out = _aggregate(vals, mc, "finite-difference")
    out.resolution["h"] = h
    return out


def derivative_check(
    config: InsertionConfig,
    i: int = 1,
    mc: MCConfig = MCConfig(),
    h: float = None,
) -> dict:
    """Headline cross-check: sum of evaluated n = 1 terms vs finite difference.

    Both sides run on the same chaos ensemble (common random numbers).
    The headline sigmas use the combined stderr of the two estimates;
    the per-replica paired difference is reported as well, but its
    distribution is strongly right-skewed, so paired error bars are
    reliable only at large replica counts.
    """
    base = config
    if h is None:
        h = base.delta / 64.0
    terms = expand_derivative(DerivativeRequest(1, (i,), base))
    ensemble = _shared_ensemble(base, mc)
    sym_vals = np.zeros(mc.replicas, dtype=complex)
    for t in terms:
        sym_vals += term_replica_values(t, base, mc, ensemble=ensemble)
    fd_vals = fd_replica_values(base, i, h, mc, ensemble=ensemble)
    symbolic = _aggregate(sym_vals, mc, "sum")
    fd = _aggregate(fd_vals, mc, "finite-difference")
    fd.resolution["h"] = h
    paired = _aggregate(sym_vals - fd_vals, mc, "paired-difference")
    diff = symbolic.value - fd.value
    err_re = math.hypot(symbolic.stderr_re, fd.stderr_re)
    err_im = math.hypot(symbolic.stderr_im, fd.stderr_im)
    return {
        "symbolic": symbolic,
        "finite_difference": fd,
        "difference": diff,
        "stderr_re": err_re,
        "stderr_im": err_im,
        "sigma_re": abs(diff.real) / err_re if err_re else math.inf,
        "sigma_im": abs(diff.imag) / err_im if err_im else math.inf,
        "paired": paired,
        "terms": len(terms),
        "h": h,
        "replicas": mc.replicas,
        "seed": mc.seed,
        "fingerprint": base.fingerprint(),
    }
