import collections
import pathlib
from fractions import Fraction

import pytest

from lcft_lab.errors import ConfigError, RewriteError
from lcft_lab.rewrite import (
    DerivativeRequest,
    expand_derivative,
    reduce_insertion_kernel,
    symmetrize,
    term_group,
)
from lcft_lab.terms import (
    BALL,
    BALL_C,
    Coefficient,
    FFactor,
    Indicator,
    InsertionKernel,
    PairKernel,
    Term,
    TermList,
    check_absolutely_convergent,
    f_class_check,
    parse_term_list,
)

GOLDEN = pathlib.Path(__file__).parent / "golden"


def test_request_validation(default_config):
    DerivativeRequest(0, (), default_config)
    with pytest.raises(RewriteError):
        DerivativeRequest(99, (1,) * 99, default_config)
    with pytest.raises(ConfigError):
        DerivativeRequest(2, (1,), default_config)
    with pytest.raises(ConfigError):
        DerivativeRequest(1, (4,), default_config)
    with pytest.raises(ConfigError):
        DerivativeRequest(1, (1,), default_config, ball_radius=1.0)


def test_order_zero_is_identity(default_config):
    out = expand_derivative(DerivativeRequest(0, (), default_config))
    assert len(out) == 1
    t = next(iter(out))
    assert t.coeff.rational == Fraction(1)
    assert not t.kernels and not t.contours and not t.z_kernels


def test_first_derivative_group_multiset(default_config):
    out = expand_derivative(DerivativeRequest(1, (1,), default_config))
    groups = collections.Counter(term_group(t) for t in out)
    assert groups == {
        "prefactor": 2,
        "chaos_pair": 1,
        "ball_insertion": 2,
        "complement_insertion": 1,
        "contour": 1,
    }


def test_first_derivative_matches_golden(default_config):
    out = expand_derivative(DerivativeRequest(1, (1,), default_config))
    assert out.serialize() == (GOLDEN / "terms_n1.txt").read_text().strip()


def test_second_derivative_matches_golden(default_config):
    out = expand_derivative(DerivativeRequest(2, (1, 1), default_config))
    assert out.serialize() == (GOLDEN / "terms_n2.txt").read_text().strip()


def test_expansion_deterministic(default_config):
    # z-kernels are oriented (the first slot records which insertion was
    # differentiated), so (1,2) and (2,1) give distinct serializations even
    # though their values agree; each expansion itself is reproducible
    a = expand_derivative(DerivativeRequest(2, (1, 2), default_config))
    b = expand_derivative(DerivativeRequest(2, (1, 2), default_config))
    assert a.serialize() == b.serialize()
    c = expand_derivative(DerivativeRequest(2, (2, 1), default_config))
    assert len(c) > 0 and c.serialize() != a.serialize()


def test_expansion_closure_level_two(default_config):
    out = expand_derivative(DerivativeRequest(2, (1, 3), default_config))
    for t in out:
        if t.is_contour:
            continue
        assert f_class_check(t, t.level)
        ok, _ = check_absolutely_convergent(t, default_config.gamma)
        assert ok


def test_serialization_roundtrip_of_expansion(default_config):
    out = expand_derivative(DerivativeRequest(2, (2, 3), default_config))
    back = parse_term_list(out.serialize()).canonicalize()
    assert back.serialize() == out.serialize()


def test_reduce_insertion_kernel_identity_without_kernels(default_config):
    t = Term(Coefficient(Fraction(2)), z_kernels=((1, 2),), n_insertions=3)
    out = reduce_insertion_kernel(t, 1, 1)
    assert len(out) == 1 and next(iter(out)) == t


def test_reduce_insertion_kernel_missing(default_config):
    t = Term(
        Coefficient(Fraction(1)),
        level=1,
        kernels=(InsertionKernel(1, 2),),
        indicators=(Indicator(1, BALL, 1),),
        balls=((1, 2),),
        n_insertions=3,
    )
    with pytest.raises(RewriteError):
        reduce_insertion_kernel(t, 1, 3)


def test_reduce_insertion_kernel_structure(default_config):
    t = Term(
        Coefficient(Fraction(1)),
        level=1,
        kernels=(InsertionKernel(1, 1),),
        indicators=(Indicator(1, BALL, 1),),
        balls=((1, 1),),
        n_insertions=3,
    )
    out = reduce_insertion_kernel(t, 1, 1)
    groups = collections.Counter(term_group(u) for u in out)
    # one complement piece, other-insertion ball pieces, one contour piece
    assert groups["contour"] == 1
    assert sum(groups.values()) == len(out)
    for u in out:
        if not u.is_contour:
            assert f_class_check(u, u.level)


def _symmetrizable_term():
    return Term(
        Coefficient(Fraction(1)),
        level=1,
        kernels=(PairKernel(1, 2), FFactor(1, 1, 3)),
        indicators=(Indicator(1, BALL, 2), Indicator(3, BALL_C, 1)),
        balls=((1, 1), (2, 1)),
        n_insertions=3,
    )


def test_symmetrize_produces_diffquot_and_f_part():
    out = symmetrize(_symmetrizable_term(), 1, 2)
    assert len(out) == 2
    kinds = sorted(
        "diffquot" if t.phi else "f_part" for t in out
    )
    assert kinds == ["diffquot", "f_part"]
    diff = next(t for t in out if t.phi)
    assert diff.coeff.rational == Fraction(1, 2)
    # the symmetric part localizes both variables in the ball
    assert any(i.var == 2 and i.kind == BALL for i in diff.indicators)
    f_part = next(t for t in out if not t.phi)
    assert any(isinstance(k, FFactor) and {k.a, k.b} == {1, 2}
               for k in f_part.kernels)


def test_symmetrize_orientation_sign():
    # kernel stored as P(x2,x1): symmetrizing in (1,2) flips the sign
    t = Term(
        Coefficient(Fraction(1)),
        level=1,
        kernels=(PairKernel(2, 1),),
        indicators=(Indicator(1, BALL, 1),),
        balls=((1, 1),),
        n_insertions=3,
    )
    out = symmetrize(t, 1, 2)
    f_part = next(u for u in out if not u.phi)
    assert f_part.coeff.rational == Fraction(-1)


def test_symmetrize_antisymmetric_vanishing():
    # no other kernel depends on the swapped pair: the difference quotient
    # vanishes identically and only the F-adjoined part survives
    t = Term(
        Coefficient(Fraction(1)),
        level=1,
        kernels=(PairKernel(1, 2),),
        indicators=(Indicator(1, BALL, 1),),
        balls=((1, 1),),
        n_insertions=3,
    )
    out = symmetrize(t, 1, 2)
    assert len(out) == 1
    assert not next(iter(out)).phi


def test_symmetrize_preconditions():
    t = _symmetrizable_term()
    with pytest.raises(RewriteError):
        symmetrize(t, 1, 3)  # no pair kernel on (1, 3)
    no_ball = Term(
        Coefficient(Fraction(1)),
        level=1,
        kernels=(PairKernel(1, 2),),
        indicators=(Indicator(1, BALL_C, 1),),
        balls=((1, 1),),
        n_insertions=3,
    )
    with pytest.raises(RewriteError):
        symmetrize(no_ball, 1, 2)


def test_fuzz_corpus_closure_and_idempotence(fuzz_corpus):
    tl = TermList(fuzz_corpus)
    once = tl.canonicalize()
    assert once.canonicalize().serialize() == once.serialize()
    for t in fuzz_corpus:
        if t.is_contour:
            continue
        assert f_class_check(t, t.level)
        ok, _ = check_absolutely_convergent(t, 1.0)
        assert ok
