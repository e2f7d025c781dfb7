"""Experiment runners: one function per experiment kind.

Each runner takes a validated parameter dict plus the (seed, replicas)
budget and returns a ResultRecord.  All Monte Carlo work goes through the
counter-based per-replica RNG streams, so results are bitwise reproducible
for a fixed config regardless of the worker count (workers only split
independent sub-tasks; aggregation is a fixed-order fold).
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .bpz import apply_to_rational, build_Dr, conformal_weight, swap_gamma
from .correlators import InsertionConfig, MCConfig, estimate_correlation, kpz_check
from .errors import ConfigError
from .fusion import (
    FusionProbeConfig,
    fusion_scaling_probe,
    predicted_slope,
    radial_band_report,
)
from .geometry import SphereGrid, covariance, truncation_tail
from .gff import GFFSampler, MollifierKernel, mollify
from .gmc import chaos_measure, kahane_compare
from .harmonics import n_harmonics, real_harmonic_basis
from .quadrature import SingularIntegralSpec, ball_complement_integral
from .results import ResultRecord, config_fingerprint
from .rng import replica_rng
from .term_eval import derivative_check

SPHERE_AREA = 4.0 * math.pi

_DEFAULT_PAIRS = (
    (0.0, 1.0),
    (1.0, -1.0),
    (0.0, 0.5),
    (0.5, 2.0),
    (1j, -1j),
    (0.3 + 0.4j, 1.2 - 0.7j),
    (2.0, 3.0),
    (0.1, 0.1 + 1.0j),
    (5.0, -0.2),
    (1.0 + 1.0j, 1.0 - 1.0j),
)


def worker_count() -> int:
    """Worker pool size; LCFT_LAB_WORKERS overrides the CPU count."""
    env = os.environ.get("LCFT_LAB_WORKERS", "")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"LCFT_LAB_WORKERS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError("LCFT_LAB_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


def _map_ordered(fn, items):
    """Parallel map with deterministic (input-order) results."""
    n = worker_count()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


def _mc(params: dict, seed: int, replicas: int) -> MCConfig:
    return MCConfig(
        replicas=replicas,
        seed=seed,
        l_max=int(params.get("l_max", 24)),
        n_theta=int(params.get("n_theta", 24)),
        n_phi=int(params.get("n_phi", 48)),
        use_exact_kernels=bool(params.get("use_exact_kernels", False)),
    )


def _insertion_config(params: dict) -> InsertionConfig:
    points = tuple(complex(p[0], p[1]) if isinstance(p, (list, tuple)) else complex(p)
                   for p in params.get("points", (0.0, 1.0, -1.0)))
    momenta = tuple(params.get("momenta", (2.0, 2.0, 2.0)))
    return InsertionConfig(
        points=points,
        momenta=momenta,
        gamma=float(params.get("gamma", 1.0)),
        mu=float(params.get("mu", 1.0)),
    )


# --------------------------------------------------------------- gff-cov


def run_gff_cov(params, seed, replicas):
    l_max = int(params.get("l_max", 64))
    pairs = params.get("pairs")
    if pairs is None:
        pairs = _DEFAULT_PAIRS
    pairs = [(complex(a), complex(b)) for a, b in pairs]
    pts = np.array([p for pair in pairs for p in pair], dtype=complex)
    basis = real_harmonic_basis(pts, l_max)
    h = n_harmonics(l_max)
    prods = np.empty((replicas, len(pairs)))
    for r in range(replicas):
        vals = basis @ replica_rng(seed, r).standard_normal(h)
        prods[r] = vals[0::2] * vals[1::2]
    from .geometry import cos_angle

    verdicts, out_rows, sigmas = {}, [], []
    for j, (a, b) in enumerate(pairs):
        emp = float(prods[:, j].mean())
        se = float(prods[:, j].std(ddof=1) / math.sqrt(replicas))
        exact = float(covariance(a, b))
        tail = float(truncation_tail(np.clip(cos_angle(a, b), -1.0, 1.0), l_max))
        sigma = abs(emp - exact) / (se + tail)
        sigmas.append(sigma)
        ok = sigma < 3.0
        verdicts[f"pair_{j}"] = bool(ok)
        out_rows.append([f"{a.real:g}{a.imag:+g}j", f"{b.real:g}{b.imag:+g}j",
                         repr(emp), repr(exact), repr(se), repr(tail), ok])
    scalars = {"max_sigma": {"value": max(sigmas)}}
    return scalars, {
        "pairs": {
            "columns": ["z1", "z2", "empirical", "analytic", "stderr", "truncation", "pass"],
            "rows": out_rows,
        }
    }, verdicts


# --------------------------------------------------------------- gmc-mass


def run_gmc_mass(params, seed, replicas):
    gammas = [float(g) for g in params.get("gammas", (0.25, 0.5, 1.0, math.sqrt(2.0)))]
    l_max = int(params.get("l_max", 16))
    grid = SphereGrid.build(int(params.get("n_theta", 16)), int(params.get("n_phi", 32)))
    sampler = GFFSampler(grid, l_max)
    samples = [sampler.sample(seed, r) for r in range(replicas)]

    def spectral_masses(g):
        return np.array([chaos_measure(s, g).total_mass() for s in samples])

    per_gamma = _map_ordered(spectral_masses, gammas)
    scalars, verdicts, rows = {}, {}, []
    for g, masses in zip(gammas, per_gamma):
        mean = float(masses.mean())
        se = float(masses.std(ddof=1) / math.sqrt(len(masses)))
        ok = abs(mean - SPHERE_AREA) < 3.0 * se
        tag = f"gamma_{g:g}"
        scalars[tag] = {"value": mean, "stderr": se}
        verdicts[tag] = bool(ok)
        rows.append([repr(g), "spectral", repr(mean), repr(se), ok])

    # mollified backend at a subset of couplings (convolution is expensive)
    m_gammas = [float(g) for g in params.get("mollified_gammas", (1.0,))]
    m_replicas = int(params.get("mollified_replicas",
                                min(max(replicas // 5, 2), 64)))
    eps = float(params.get("eps", 0.5))
    kernel = MollifierKernel(eps)
    m_samples = [mollify(sampler.sample(seed, r), kernel) for r in range(m_replicas)]
    for g in m_gammas:
        masses = np.array([chaos_measure(s, g).total_mass() for s in m_samples])
        mean = float(masses.mean())
        se = float(masses.std(ddof=1) / math.sqrt(m_replicas))
        tag = f"gamma_{g:g}"
        spectral = scalars.get(tag, {"value": mean, "stderr": se})
        agree = abs(mean - spectral["value"]) < 3.0 * math.hypot(se, spectral["stderr"])
        scalars[f"mollified_{g:g}"] = {"value": mean, "stderr": se}
        verdicts[f"backend_agreement_{g:g}"] = bool(agree)
        rows.append([repr(g), "mollified", repr(mean), repr(se), agree])
    series = {"masses": {"columns": ["gamma", "backend", "mean_mass", "stderr", "pass"],
                         "rows": rows}}
    return scalars, series, verdicts


# ----------------------------------------------------------------- kahane


def run_kahane(params, seed, replicas):
    gamma = float(params.get("gamma", 1.0))
    l_max = int(params.get("l_max", 16))
    shift_std = float(params.get("shift_std", 0.5))
    grid = SphereGrid.build(int(params.get("n_theta", 16)), int(params.get("n_phi", 32)))
    sampler = GFFSampler(grid, l_max)

    def gen_a(r):
        return sampler.sample(seed, r)

    def gen_b(r):
        # independent global Gaussian shift: covariance grows by shift_std^2
        # everywhere, the pointwise-domination hypothesis holds exactly
        s = sampler.sample(seed, r)
        xi = float(replica_rng(seed + 10**6, r).standard_normal(1)[0])
        return replace(s, values=s.values + shift_std * xi,
                       variance=s.variance + shift_std**2)

    scalars, verdicts, rows = {}, {}, []
    for name, F in (("inverse", lambda x: 1.0 / x), ("square", lambda x: x * x)):
        rep = kahane_compare(gen_a, gen_b, lambda nodes: np.ones(len(nodes)),
                             F, replicas, gamma)
        scalars[f"{name}_a"] = {"value": rep["estimate_a"], "stderr": rep["stderr_a"]}
        scalars[f"{name}_b"] = {"value": rep["estimate_b"], "stderr": rep["stderr_b"]}
        verdicts[f"ordering_{name}"] = bool(rep["ordering_holds"])
        verdicts[f"domination_{name}"] = bool(rep["domination_check"])
        rows.append([name, repr(rep["estimate_a"]), repr(rep["stderr_a"]),
                     repr(rep["estimate_b"]), repr(rep["stderr_b"]),
                     rep["ordering_holds"]])
    series = {"ordering": {"columns": ["functional", "estimate_a", "stderr_a",
                                       "estimate_b", "stderr_b", "pass"],
                           "rows": rows}}
    return scalars, series, verdicts


# ------------------------------------------------------------- correlator


def run_correlator(params, seed, replicas):
    config = _insertion_config(params)
    mc = _mc(params, seed, replicas)
    est = estimate_correlation(config, mc=mc)
    scalars = {"correlator": {"value": est.value, "stderr": est.stderr}}
    verdicts = {"positive": bool(est.value > 0.0),
                "finite": bool(math.isfinite(est.value))}
    return scalars, {}, verdicts


# -------------------------------------------------------------------- kpz


def run_kpz(params, seed, replicas):
    config = _insertion_config(params)
    mc = _mc(params, seed, replicas)
    rep = kpz_check(config, mc)
    scalars = {
        "ratio": {"value": rep["ratio"], "stderr": rep["stderr"]},
        "lhs": {"value": rep["lhs"], "stderr": rep["lhs_stderr"]},
        "rhs": {"value": rep["rhs"], "stderr": rep["rhs_stderr"]},
    }
    verdicts = {"ratio_within_3_sigma": bool(abs(rep["ratio"] - 1.0) < 3.0 * rep["stderr"])}
    return scalars, {}, verdicts


# ----------------------------------------------------------------- fusion


def run_fusion(params, seed, replicas):
    gamma = float(params.get("gamma", math.sqrt(2.0)))
    default_m = 1.45 if gamma > 1.2 else 1.9
    momenta = tuple(params.get("momenta", (default_m,) * 3))
    base = InsertionConfig(points=(0.0, 1.0, -1.0), momenta=momenta,
                           gamma=gamma, mu=float(params.get("mu", 1.0)))
    probe = FusionProbeConfig(
        base=base,
        separations=tuple(params.get("separations",
                                     tuple(0.5**k for k in range(3, 10)))),
    )
    mc = _mc(params, seed, replicas)
    rep = fusion_scaling_probe(probe, mc)
    pred = predicted_slope(gamma)
    scalars = {
        "slope": {"value": rep["slope"], "stderr": rep["slope_stderr"]},
        "predicted": {"value": pred},
    }
    verdicts = {
        "slope_within_band": bool(abs(rep["slope"] - pred) <= 0.25),
        "above_threshold": bool(rep["above_threshold"]),
    }
    rows = [[repr(t), repr(v), repr(e)] for t, v, e in
            zip(rep["separations"], rep["values"], rep["stderrs"])]
    series = {"scaling": {"columns": ["separation", "estimate", "stderr"], "rows": rows}}
    return scalars, series, verdicts


# ----------------------------------------------------------------- radial


def run_radial(params, seed, replicas):
    rep = radial_band_report(
        gamma=float(params.get("gamma", 1.0)),
        q=float(params.get("q", 0.0)),
        ks=range(int(params.get("k_max", 6)) + 1),
        horizons=tuple(params.get("horizons", (4.0, 6.0, 8.0, 10.0))),
        replicas=replicas,
        n_steps=int(params.get("n_steps", 2048)),
        seed=seed,
    )
    scalars = {"constant": {"value": rep["constant"]}}
    verdicts = {"dominated": bool(rep["dominated"])}
    rows = [[c["k"], repr(c["horizon"]), repr(c["estimate"]), repr(c["stderr"]),
             repr(c["shape"])] for c in rep["cells"]]
    series = {"bands": {"columns": ["k", "horizon", "estimate", "stderr", "shape"],
                        "rows": rows}}
    return scalars, series, verdicts


# ------------------------------------------------------------- derivative


def run_derivative(params, seed, replicas):
    config = _insertion_config(params)
    mc = _mc(params, seed, replicas)
    rep = derivative_check(config, i=int(params.get("i", 1)), mc=mc,
                           h=params.get("h"))
    sym, fd = rep["symbolic"], rep["finite_difference"]
    scalars = {
        "symbolic_re": {"value": sym.value.real, "stderr": sym.stderr_re},
        "symbolic_im": {"value": sym.value.imag, "stderr": sym.stderr_im},
        "fd_re": {"value": fd.value.real, "stderr": fd.stderr_re},
        "fd_im": {"value": fd.value.imag, "stderr": fd.stderr_im},
        "sigma_re": {"value": rep["sigma_re"]},
        "sigma_im": {"value": rep["sigma_im"]},
    }
    verdicts = {
        "re_within_3_sigma": bool(rep["sigma_re"] < 3.0),
        "im_within_3_sigma": bool(rep["sigma_im"] < 3.0),
    }
    rows = [["symbolic", repr(sym.value.real), repr(sym.value.imag),
             repr(sym.stderr_re), repr(sym.stderr_im)],
            ["finite_difference", repr(fd.value.real), repr(fd.value.imag),
             repr(fd.stderr_re), repr(fd.stderr_im)]]
    series = {"derivative": {"columns": ["method", "re", "im", "stderr_re", "stderr_im"],
                             "rows": rows}}
    return scalars, series, verdicts


# -------------------------------------------------------------------- bpz


def run_bpz(params, seed, replicas):
    import sympy as sp

    gamma = params.get("gamma", 1.0)
    r_max = int(params.get("r_max", 8))
    verdicts, rows = {}, []
    for r in range(1, r_max + 1):
        op = build_Dr(r, gamma)
        verdicts[f"word_count_r{r}"] = len(op.words) == 2 ** (r - 1)
        dual = swap_gamma(op)
        verdicts[f"duality_r{r}"] = all(
            wd.power == -w.power and wd.rational == w.rational
            for w, wd in zip(op.words, dual.words)
        )
        if r <= 4:
            for w in op.words:
                rows.append([r, w.pretty()])
    # D2 structure: L(-1)^2 + (gamma^2/4) L(-2)
    d2 = build_Dr(2, gamma)
    sigs = {(w.indices, w.rational, w.power) for w in d2.words}
    verdicts["d2_structure"] = sigs == {((1, 1), 1, 0), ((2,), 1, 1)}
    # toy application against the hand-derived closed form
    g, z, z1, a1, = sp.symbols("g z z1 alpha1", positive=True)
    opg = build_Dr(2, g)
    res = apply_to_rational(opg, (z1 - z) ** (-2), z, ((z1, a1),))
    hand = (6 + g**2 / 4 * (2 + conformal_weight(a1, g))) * (z1 - z) ** (-4)
    verdicts["d2_toy_identity"] = bool(sp.simplify(res - hand) == 0)
    scalars = {"max_order": {"value": r_max}}
    series = {"words": {"columns": ["r", "word"], "rows": rows}}
    return scalars, series, verdicts


# --------------------------------------------------------- lemma-integral


def run_lemma_integral(params, seed, replicas):
    exponents = [float(a) for a in params.get(
        "exponents", (0.0, 1.0, 2.0, 2.5, 2.9, 3.0, 3.2, 4.0))]

    def probe(a):
        return ball_complement_integral(SingularIntegralSpec(exponent=a))

    reports = _map_ordered(probe, exponents)
    verdicts, rows = {}, []
    for a, rep in zip(exponents, reports):
        if a < 3.0:
            expected = "convergent"
        elif a == 3.0:
            expected = "marginal"
        else:
            expected = "divergent"
        ok = rep["verdict"] == expected
        verdicts[f"a_{a:g}"] = bool(ok)
        rows.append([repr(a), rep["verdict"], expected,
                     repr(rep["growth_exponent"]), repr(rep["limit"])])
    series = {"verdicts": {"columns": ["exponent", "verdict", "expected",
                                       "growth_exponent", "limit"],
                           "rows": rows}}
    return {}, series, verdicts


# ---------------------------------------------------------------- catalog

EXPERIMENTS = {
    "gff-cov": (run_gff_cov, 10000,
                "GFF covariance matches the round-metric Green function"),
    "gmc-mass": (run_gmc_mass, 1000,
                 "mean total chaos mass equals the sphere area 4*pi"),
    "kahane": (run_kahane, 800,
               "Kahane convexity ordering under a covariance-dominating shift"),
    "correlator": (run_correlator, 400,
                   "negative-moment correlator estimate on the sphere"),
    "kpz": (run_kpz, 400,
            "KPZ identity: mu*gamma*int G(x;z) dx = (sum alpha - 2Q) G(z)"),
    "fusion": (run_fusion, 4000,
               "pair-merging scaling exponent -gamma^2 + (2*gamma-Q)^2/2"),
    "radial": (run_radial, 20000,
               "radial running-max band moments against the drift envelope"),
    "derivative": (run_derivative, 320,
                   "n=1 rewriting-calculus derivative vs finite differences"),
    "bpz": (run_bpz, 1,
            "degenerate-field operators: composition enumeration and duality"),
    "lemma-integral": (run_lemma_integral, 1,
                       "ball/complement singular-integral phase boundary at a=3"),
}

_DEFAULT_SEEDS = {"fusion": 777}


def list_experiments() -> list:
    """Stable catalog of (kind, description) pairs."""
    return [(kind, EXPERIMENTS[kind][2]) for kind in EXPERIMENTS]


def validate_config(config: dict) -> dict:
    """Schema-check a config dict; returns the normalized copy."""
    if not isinstance(config, dict):
        raise ConfigError("config root must be a mapping")
    allowed = {"kind", "seed", "replicas", "out", "params"}
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kind = config.get("kind")
    if kind not in EXPERIMENTS:
        raise ConfigError(
            f"kind must be one of {sorted(EXPERIMENTS)}, got {kind!r}")
    params = config.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")
    seed = config.get("seed", _DEFAULT_SEEDS.get(kind, 1))
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    replicas = config.get("replicas", EXPERIMENTS[kind][1])
    if not isinstance(replicas, int) or isinstance(replicas, bool) or replicas < 1:
        raise ConfigError("replicas must be a positive integer")
    out = config.get("out", "results")
    if not isinstance(out, str):
        raise ConfigError("out must be a path string")
    return {"kind": kind, "seed": seed, "replicas": replicas,
            "out": out, "params": params}


def run_experiment(config: dict) -> ResultRecord:
    """Validate, execute, and package one experiment."""
    cfg = validate_config(config)
    kind, seed, replicas = cfg["kind"], cfg["seed"], cfg["replicas"]
    fn = EXPERIMENTS[kind][0]
    fingerprint = config_fingerprint(kind, cfg["params"], seed, replicas)
    t0 = time.time()
    scalars, series, verdicts = fn(cfg["params"], seed, replicas)
    return ResultRecord(
        kind=kind,
        fingerprint=fingerprint,
        params=cfg["params"],
        seed=seed,
        replicas=replicas,
        scalars=scalars,
        series=series,
        verdicts=verdicts,
        wall_clock=time.time() - t0,
        version=__version__,
    )
