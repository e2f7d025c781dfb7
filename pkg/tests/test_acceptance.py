"""End-to-end acceptance gate.

Each test pins one headline claim of the package at its stated tolerance
and replica budget.  These are slower than the unit tests by design; the
whole module stays within the documented wall-clock budgets on one CPU.
"""

import collections
import itertools
import math
import pathlib
from fractions import Fraction

import numpy as np
import pytest

from lcft_lab.bpz import apply_to_rational, build_Dr, conformal_weight, swap_gamma
from lcft_lab.correlators import InsertionConfig, MCConfig, kpz_check
from lcft_lab.fusion import FusionProbeConfig, fusion_scaling_probe, predicted_slope
from lcft_lab.rewrite import DerivativeRequest, expand_derivative, term_group
from lcft_lab.runner import (
    run_gff_cov,
    run_gmc_mass,
    run_kahane,
    run_lemma_integral,
    run_radial,
)
from lcft_lab.term_eval import derivative_check
from lcft_lab.terms import TermList, check_absolutely_convergent, f_class_check

GOLDEN = pathlib.Path(__file__).parent / "golden"
CONFIG = InsertionConfig(points=(0.0, 1.0, -1.0), momenta=(2.0, 2.0, 2.0), gamma=1.0)


# 1. GFF covariance against the closed-form Green function ------------------


def test_covariance_oracle():
    scalars, series, verdicts = run_gff_cov(
        {"l_max": 64}, seed=1, replicas=10000
    )
    assert len(verdicts) == 10
    assert all(verdicts.values()), series["pairs"]["rows"]
    # the two hand-checked values are in the default pair list
    rows = series["pairs"]["rows"]
    by_pair = {(r[0], r[1]): float(r[3]) for r in rows}
    assert by_pair[("0+0j", "1+0j")] == pytest.approx(0.5 * math.log(2.0) - 0.5)
    assert by_pair[("1+0j", "-1+0j")] == pytest.approx(-0.5)


# 2. Mean total chaos mass = 4 pi for gamma across the subcritical range ----


def test_gmc_mass_normalization():
    scalars, series, verdicts = run_gmc_mass({}, seed=1, replicas=1000)
    # spectral regularization at every gamma, mollified backend cross-check
    assert all(verdicts.values()), verdicts


# 3. KPZ insertion identity --------------------------------------------------


def test_kpz_identity():
    rep = kpz_check(CONFIG, MCConfig(replicas=400, seed=1))
    assert rep["stderr"] <= 0.05 * abs(rep["ratio"])
    assert abs(rep["ratio"] - 1.0) < 3.0 * rep["stderr"], rep


# 4. Fusion scaling exponents ------------------------------------------------


@pytest.mark.parametrize(
    "gamma,momentum,expected",
    [(math.sqrt(2.0), 1.45, -1.75), (1.0, 1.9, -0.875)],
    ids=["gamma-sqrt2", "gamma-1"],
)
def test_fusion_scaling(gamma, momentum, expected):
    base = InsertionConfig(points=(0.0, 1.0, -1.0), momenta=(momentum,) * 3,
                           gamma=gamma)
    probe = FusionProbeConfig(base=base)
    rep = fusion_scaling_probe(probe, MCConfig(replicas=4000, seed=777))
    assert predicted_slope(gamma) == pytest.approx(expected)
    assert abs(rep["slope"] - expected) <= 0.25, rep
    assert rep["slope"] > -2.0
    assert rep["above_threshold"]


# 5. First-derivative cross-check: calculus vs finite differences -----------


def test_derivative_crosscheck():
    rep = derivative_check(CONFIG, i=1, mc=MCConfig(replicas=320, seed=7))
    assert rep["terms"] == 7
    assert rep["sigma_re"] < 3.0, rep
    assert rep["sigma_im"] < 3.0, rep


# 6. Rewriting calculus: structure, closure, convergence ---------------------


def test_rewrite_first_derivative_multiset():
    out = expand_derivative(DerivativeRequest(1, (1,), CONFIG))
    groups = collections.Counter(term_group(t) for t in out)
    assert groups == {
        "prefactor": 2,
        "chaos_pair": 1,
        "ball_insertion": 2,
        "complement_insertion": 1,
        "contour": 1,
    }
    assert out.serialize() == (GOLDEN / "terms_n1.txt").read_text().strip()


def test_rewrite_full_sweep_closure():
    # every index sequence up to order 4: all non-contour output terms are
    # class members with a passing absolute-convergence certificate
    total = 0
    for n in (1, 2, 3, 4):
        for seq in itertools.product((1, 2, 3), repeat=n):
            out = expand_derivative(DerivativeRequest(n, seq, CONFIG))
            for t in out:
                if t.is_contour:
                    continue
                total += 1
                assert f_class_check(t, t.level), t
                ok, certs = check_absolutely_convergent(t, CONFIG.gamma)
                assert ok, (t, certs)
    assert total > 100000  # the order-4 expansion is genuinely large


def test_rewrite_fuzz_closure_and_idempotence(fuzz_corpus):
    assert len(fuzz_corpus) >= 1000
    tl = TermList(fuzz_corpus).canonicalize()
    assert tl.canonicalize().serialize() == tl.serialize()


# 7. Ball/complement singular integral: phase boundary at exponent 3 --------


def test_lemma_integral_phases():
    _, series, verdicts = run_lemma_integral({}, seed=1, replicas=1)
    assert set(verdicts) == {
        "a_0", "a_1", "a_2", "a_2.5", "a_2.9", "a_3", "a_3.2", "a_4"
    }
    assert all(verdicts.values()), series["verdicts"]["rows"]


# 8. Radial band moments dominated by the drift envelope ---------------------


def test_radial_band_domination():
    scalars, series, verdicts = run_radial({}, seed=1, replicas=20000)
    assert verdicts["dominated"], series["bands"]["rows"]
    ks = {row[0] for row in series["bands"]["rows"]}
    assert ks == set(range(0, 7))


# 9. Degenerate-field operators ----------------------------------------------


def test_bpz_operator_suite():
    import sympy as sp

    for r in range(1, 9):
        assert len(build_Dr(r).words) == 2 ** (r - 1)
    # frozen hand oracle for the full order-3 word table
    table = {w.indices: (w.rational, w.power) for w in build_Dr(3).words}
    assert table == {
        (3,): (Fraction(1), 2),
        (2, 1): (Fraction(1, 2), 1),
        (1, 2): (Fraction(1, 2), 1),
        (1, 1, 1): (Fraction(1, 4), 0),
    }
    # duality flips every coupling power
    d4 = build_Dr(4, gamma=1)
    assert [w.power for w in swap_gamma(d4).words] == [
        -w.power for w in d4.words
    ]
    # exact symbolic application against the hand-derived identity
    z, z1, g, a = sp.symbols("z z1 g a", positive=True)
    out = apply_to_rational(build_Dr(2, gamma=g), (z1 - z) ** -2, z,
                            insertions=((z1, a),))
    expected = (6 + g**2 / 4 * (2 + conformal_weight(a, g))) * (z1 - z) ** -4
    assert sp.simplify(out - expected) == 0


# 10. Kahane convexity ordering ----------------------------------------------


def test_kahane_ordering():
    scalars, series, verdicts = run_kahane({}, seed=1, replicas=800)
    assert verdicts["domination_inverse"] and verdicts["domination_square"]
    assert verdicts["ordering_inverse"], scalars
    assert verdicts["ordering_square"], scalars
