import math
from fractions import Fraction

import numpy as np
import pytest

from lcft_lab.correlators import InsertionConfig, MCConfig
from lcft_lab.errors import ConfigError, EvaluationError
from lcft_lab.rewrite import DerivativeRequest, expand_derivative, term_group
from lcft_lab.terms import (
    BALL,
    BALL_C,
    Coefficient,
    Indicator,
    PairKernel,
    PhiMarker,
    Term,
)
from lcft_lab.term_eval import (
    derivative_check,
    evaluate_term,
    evaluate_terms,
    fd_replica_values,
    finite_difference_derivative,
    term_replica_values,
)

CONFIG = InsertionConfig(points=(0.0, 1.0, -1.0), momenta=(2.0, 2.0, 2.0), gamma=1.0)
MC = MCConfig(replicas=80, seed=3, l_max=12, n_theta=16, n_phi=32,
              refine_levels=10, refine_angular=10)


@pytest.fixture(scope="module")
def n1_terms():
    return list(expand_derivative(DerivativeRequest(1, (1,), CONFIG)))


def test_prefactor_terms_cancel_at_symmetric_config(n1_terms):
    # d/dz1 acting on the z-prefactor: the two kernels 1/(z1-z2), 1/(z1-z3)
    # cancel exactly at the antipodal-pair configuration z = (0, 1, -1)
    pre = [t for t in n1_terms if term_group(t) == "prefactor"]
    assert len(pre) == 2
    vals = sum(term_replica_values(t, CONFIG, MC) for t in pre)
    assert np.max(np.abs(vals)) < 1e-10


def test_term_values_deterministic(n1_terms):
    t = next(t for t in n1_terms if term_group(t) == "chaos_pair")
    a = term_replica_values(t, CONFIG, MC)
    b = term_replica_values(t, CONFIG, MC)
    assert np.array_equal(a, b)


def test_evaluate_term_estimate_fields(n1_terms):
    t = next(t for t in n1_terms if term_group(t) == "complement_insertion")
    est = evaluate_term(t, CONFIG, MC)
    assert est.replicas == MC.replicas
    assert est.group == "complement_insertion"
    assert est.stderr == pytest.approx(math.hypot(est.stderr_re, est.stderr_im))


def test_contour_term_radius_invariance(n1_terms):
    contour = [t for t in n1_terms if t.is_contour]
    assert len(contour) == 1
    est_a = evaluate_terms(n1_terms, CONFIG, MC, ball_radius=CONFIG.delta / 4)
    est_b = evaluate_terms(n1_terms, CONFIG, MC, ball_radius=CONFIG.delta / 6)
    err = math.hypot(est_a.stderr, est_b.stderr)
    assert abs(est_a.value - est_b.value) < 3.0 * err + 1e-3


def test_contour_order_doubling(n1_terms):
    est_a = evaluate_terms(n1_terms, CONFIG, MC, contour_order=64)
    est_b = evaluate_terms(n1_terms, CONFIG, MC, contour_order=128)
    assert abs(est_a.value - est_b.value) < 1e-6 + 3.0 * math.hypot(
        est_a.stderr, est_b.stderr
    )


def test_evaluate_terms_rejects_empty():
    with pytest.raises(ConfigError):
        evaluate_terms([], CONFIG, MC)


def test_term_eval_rejects_wrong_insertion_count(n1_terms):
    four = InsertionConfig(points=(0.0, 1.0, -1.0, 2.0),
                           momenta=(2.0, 2.0, 2.0, 1.0), gamma=1.0)
    with pytest.raises(EvaluationError):
        term_replica_values(n1_terms[0], four, MC)


def test_term_eval_rejects_divergent_term():
    divergent = Term(
        Coefficient(Fraction(1)),
        level=1,
        kernels=(PairKernel(1, 2),) * 3,
        indicators=(Indicator(1, BALL, 1), Indicator(2, BALL_C, 1)),
        balls=((1, 1),),
        n_insertions=3,
    )
    with pytest.raises(EvaluationError):
        term_replica_values(divergent, CONFIG, MC)


def test_term_eval_rejects_opaque_phi_marker():
    t = Term(
        Coefficient(Fraction(1)),
        level=1,
        phi=(PhiMarker(kind="diffquot", payload="swap(x1,x2): F[9](x1,x3)"),),
        balls=((1, 1),),
        n_insertions=3,
    )
    with pytest.raises(EvaluationError):
        term_replica_values(t, CONFIG, MC)


def test_fd_richardson_consistency():
    h = CONFIG.delta / 64.0
    coarse = finite_difference_derivative(CONFIG, 1, h, MC)
    fine = finite_difference_derivative(CONFIG, 1, h / 2.0, MC)
    # same replicas (common random numbers): central differences of a smooth
    # functional agree to O(h^2) well below the Monte Carlo scatter
    assert abs(coarse.value - fine.value) < 1e-4 + 0.1 * coarse.stderr
    assert coarse.resolution["h"] == h


def test_fd_validates_step():
    with pytest.raises(ConfigError):
        fd_replica_values(CONFIG, 1, CONFIG.delta, MC)
    with pytest.raises(ConfigError):
        fd_replica_values(CONFIG, 1, 0.0, MC)
    with pytest.raises(ConfigError):
        fd_replica_values(CONFIG, 0, 1e-3, MC)


def test_derivative_check_smoke():
    rep = derivative_check(CONFIG, i=1, mc=MC)
    assert rep["terms"] == 7
    assert rep["replicas"] == MC.replicas
    # loose bound at this tiny budget; the acceptance test uses the real one
    assert rep["sigma_re"] < 5.0
    assert rep["sigma_im"] < 5.0
    assert rep["h"] == pytest.approx(CONFIG.delta / 64.0)
    assert rep["paired"].group == "paired-difference"
