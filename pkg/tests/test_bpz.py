import pathlib
from fractions import Fraction

import pytest
import sympy as sp

from lcft_lab.bpz import (
    SymbolicOperator,
    VirasoroWord,
    apply_generator,
    apply_to_rational,
    build_Dr,
    conformal_weight,
    swap_gamma,
)
from lcft_lab.errors import ConfigError, UnsupportedExpressionError

GOLDEN = pathlib.Path(__file__).parent / "golden"


def test_conformal_weight():
    # gamma = 1: Q = 5/2; Delta_2 = 1 * (5/2 - 1) = 3/2
    assert conformal_weight(2, 1) == sp.Rational(3, 2)
    g = sp.Symbol("g", positive=True)
    delta = conformal_weight(-g / 2, g)
    # the degenerate weight Delta_{-gamma/2} = -1/2 - 3 gamma^2 / 16
    assert sp.simplify(delta - (-sp.Rational(1, 2) - 3 * g**2 / 16)) == 0


def test_word_validation_and_pretty():
    w = VirasoroWord((3, 1), Fraction(1, 3), 2)
    assert w.order == 4
    assert w.pretty() == "(g^2/4)^2/3 * L[-3]L[-1]"
    assert VirasoroWord((1,), Fraction(1), 0).pretty() == "1 * L[-1]"
    with pytest.raises(ConfigError):
        VirasoroWord((), Fraction(1), 0)
    with pytest.raises(ConfigError):
        VirasoroWord((0, 1), Fraction(1), 0)


def test_word_counts_are_compositions():
    for r in range(1, 9):
        assert len(build_Dr(r).words) == 2 ** (r - 1)


def test_order_validation():
    for bad in (0, 9, -1, 1.5):
        with pytest.raises(ConfigError):
            build_Dr(bad)


def test_d1_and_d2_coefficients():
    d1 = build_Dr(1)
    assert [w.pretty() for w in d1.words] == ["1 * L[-1]"]
    d2 = build_Dr(2)
    table = {w.indices: (w.rational, w.power) for w in d2.words}
    assert table == {(2,): (Fraction(1), 1), (1, 1): (Fraction(1), 0)}


def test_d3_word_table():
    # denominators (prod of split products) for compositions of 3
    table = {w.indices: (w.rational, w.power) for w in build_Dr(3).words}
    assert table == {
        (3,): (Fraction(1), 2),
        (2, 1): (Fraction(1, 2), 1),
        (1, 2): (Fraction(1, 2), 1),
        (1, 1, 1): (Fraction(1, 4), 0),  # splits (1|1 1) and (1 1|1): 2 * 2
    }


def test_golden_word_tables():
    for r in range(1, 5):
        got = build_Dr(r).pretty()
        assert got == (GOLDEN / f"bpz_r{r}.txt").read_text().strip()


def test_duality_swap():
    d3 = build_Dr(3, gamma=1)
    dual = swap_gamma(d3)
    assert all(w.power == -v.power for w, v in zip(dual.words, d3.words))
    assert sp.simplify(dual.gamma - 4) == 0  # 4/gamma at gamma=1
    # involution up to the gamma relabel
    back = swap_gamma(dual)
    assert [(w.indices, w.rational, w.power) for w in back.words] == [
        (w.indices, w.rational, w.power) for w in d3.words
    ]


def test_apply_generator_l1_is_derivative():
    z, z1 = sp.symbols("z z1")
    expr = (z1 - z) ** -2
    out = apply_generator(1, expr, z, ((z1, 2),), 1)
    assert sp.simplify(out - 2 * (z1 - z) ** -3) == 0


def test_apply_l2_weight_term():
    # L_{-2} acting on the constant 1: only the weight term survives
    z, z1 = sp.symbols("z z1")
    op = SymbolicOperator(order=2, words=(VirasoroWord((2,), Fraction(1), 0),),
                          gamma=1)
    out = apply_to_rational(op, 1, z, insertions=((z1, 2),))
    assert sp.simplify(out - sp.Rational(3, 2) / (z1 - z) ** 2) == 0


def test_d2_toy_identity():
    # D_2 applied to (z1 - z)^-2 with one insertion of momentum alpha:
    # [6 + (g^2/4)(2 + Delta_alpha)] (z1 - z)^-4
    z, z1, g, a = sp.symbols("z z1 g a", positive=True)
    op = build_Dr(2, gamma=g)
    out = apply_to_rational(op, (z1 - z) ** -2, z, insertions=((z1, a),))
    delta = conformal_weight(a, g)
    expected = (6 + g**2 / 4 * (2 + delta)) * (z1 - z) ** -4
    assert sp.simplify(out - expected) == 0


def test_weight_table():
    op = build_Dr(2, gamma=1)
    assert op.weight_table((2,)) == (sp.Rational(3, 2),)
    with pytest.raises(ConfigError):
        build_Dr(2).weight_table((2,))


def test_apply_rejects_non_rational():
    z, z1 = sp.symbols("z z1")
    op = build_Dr(1, gamma=1)
    with pytest.raises(UnsupportedExpressionError):
        apply_to_rational(op, sp.exp(z), z, insertions=((z1, 2),))
    with pytest.raises(UnsupportedExpressionError):
        apply_to_rational(op, sp.Symbol("w") / (z1 - z), z, insertions=((z1, 2),))


def test_apply_requires_gamma():
    z = sp.Symbol("z")
    with pytest.raises(ConfigError):
        apply_to_rational(build_Dr(1), z, z)
