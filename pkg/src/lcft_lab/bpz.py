"""Degenerate-field differential operators.

The order-r operator D_r is a coefficient-weighted sum over the ordered
compositions (n_1, ..., n_k) of r in the lowering generators L_{-n}:

    D_r = sum_{n_1 + ... + n_k = r}
          (gamma^2/4)^{r-k}
          / prod_{j=1}^{k-1} (n_1 + ... + n_j)(n_{j+1} + ... + n_k)
          * L_{-n_1} ... L_{-n_k},

with L_{-1} = d/dz and, for n >= 2,

    L_{-n} = sum_i ( -(z_i - z)^{1-n} d/dz_i
                     + Delta_{alpha_i} (n-1) (z_i - z)^{-n} ),

where Delta_alpha = (alpha/2)(Q - alpha/2).  Words act left-to-right as
written: L_{-n_1} is the outermost operator.

Everything here is exact: coefficients are rationals times integer powers
of gamma^2/4, and application to rational test functions goes through
sympy's exact arithmetic.
"""

from dataclasses import dataclass
from fractions import Fraction

import sympy as sp

from .errors import ConfigError, UnsupportedExpressionError

MAX_ORDER = 8


def conformal_weight(alpha, gamma):
    """Delta_alpha = (alpha/2)(Q - alpha/2) with Q = 2/gamma + gamma/2."""
    q = 2 / sp.sympify(gamma) + sp.sympify(gamma) / 2
    return sp.sympify(alpha) / 2 * (q - sp.sympify(alpha) / 2)


@dataclass(frozen=True)
class VirasoroWord:
    """L_{-n_1}...L_{-n_k} with coefficient `rational * (gamma^2/4)^power`."""

    indices: tuple
    rational: Fraction
    power: int

    def __post_init__(self):
        if not self.indices or any(n < 1 for n in self.indices):
            raise ConfigError("generator indices must be integers >= 1")
        object.__setattr__(self, "indices", tuple(int(n) for n in self.indices))
        object.__setattr__(self, "rational", Fraction(self.rational))

    @property
    def order(self) -> int:
        return sum(self.indices)

    def coefficient(self, gamma):
        g = sp.sympify(gamma)
        return sp.Rational(self.rational.numerator, self.rational.denominator) * (
            g**2 / 4
        ) ** self.power

    def pretty(self) -> str:
        num, den = self.rational.numerator, self.rational.denominator
        parts = []
        if self.power == 0 or num != 1:
            parts.append(str(num))
        if self.power:
            exp = "" if self.power == 1 else f"^{self.power}"
            parts.append(f"(g^2/4){exp}")
        coeff = "*".join(parts) if parts else "1"
        if den != 1:
            coeff += f"/{den}"
        word = "".join(f"L[-{n}]" for n in self.indices)
        return f"{coeff} * {word}"


@dataclass(frozen=True)
class SymbolicOperator:
    """A finite sum of Virasoro words at fixed total order."""

    order: int
    words: tuple
    gamma: object = None

    def pretty(self) -> str:
        return "\n".join(w.pretty() for w in self.words)

    def weight_table(self, momenta):
        """Conformal weights Delta_alpha for the given momenta."""
        if self.gamma is None:
            raise ConfigError("operator carries no gamma value")
        return tuple(conformal_weight(a, self.gamma) for a in momenta)


def _compositions(r: int):
    """Ordered compositions of r, first part descending (stable order)."""
    if r == 0:
        yield ()
        return
    for first in range(r, 0, -1):
        for rest in _compositions(r - first):
            yield (first,) + rest


def build_Dr(r: int, gamma=None) -> SymbolicOperator:
    """The order-r degenerate-field operator as an exact word sum."""
    if not isinstance(r, int) or not 1 <= r <= MAX_ORDER:
        raise ConfigError(f"order must be an integer in 1..{MAX_ORDER}, got {r}")
    words = []
    for comp in _compositions(r):
        k = len(comp)
        den = 1
        for j in range(1, k):
            den *= sum(comp[:j]) * sum(comp[j:])
        words.append(VirasoroWord(comp, Fraction(1, den), r - k))
    return SymbolicOperator(order=r, words=tuple(words), gamma=gamma)


def swap_gamma(op: SymbolicOperator) -> SymbolicOperator:
    """The dual operator under gamma/2 <-> 2/gamma (gamma^2/4 -> 4/gamma^2)."""
    words = tuple(
        VirasoroWord(w.indices, w.rational, -w.power) for w in op.words
    )
    gamma = None if op.gamma is None else 4 / sp.sympify(op.gamma)
    return SymbolicOperator(order=op.order, words=words, gamma=gamma)


def _check_rational(expr, symbols):
    expr = sp.sympify(expr)
    free = expr.free_symbols
    for s in free:
        if not expr.is_rational_function(s):
            raise UnsupportedExpressionError(
                f"expression is not rational in {s}: {expr}"
            )
    unknown = free - set(symbols)
    if unknown:
        raise UnsupportedExpressionError(
            f"expression contains unexpected symbols {sorted(map(str, unknown))}"
        )
    return expr


def apply_generator(n: int, expr, z, insertions, gamma):
    """Apply one generator L_{-n} to a sympy expression.

    `insertions` is a sequence of (z_i symbol, alpha_i) pairs; alpha and
    gamma may be numbers or sympy symbols.
    """
    expr = sp.sympify(expr)
    if n == 1:
        return sp.diff(expr, z)
    out = sp.S.Zero
    for zi, ai in insertions:
        delta = conformal_weight(ai, gamma)
        out += -((zi - z) ** (1 - n)) * sp.diff(expr, zi)
        out += delta * (n - 1) * (zi - z) ** (-n) * expr
    return out


def apply_to_rational(op: SymbolicOperator, expr, z, insertions=()):
    """Apply the operator to a rational expression in z and the z_i.

    Returns the exact simplified result.  Raises
    UnsupportedExpressionError for non-rational input.
    """
    if op.gamma is None:
        raise ConfigError("operator carries no gamma value")
    gamma = sp.sympify(op.gamma)
    z = sp.sympify(z)
    insertions = tuple((sp.sympify(zi), sp.sympify(ai)) for zi, ai in insertions)
    allowed = {z} | {zi for zi, _ in insertions}
    for _, ai in insertions:
        allowed |= ai.free_symbols
    allowed |= gamma.free_symbols
    expr = _check_rational(expr, allowed)
    total = sp.S.Zero
    for word in op.words:
        acc = expr
        for n in reversed(word.indices):  # innermost generator first
            acc = apply_generator(n, acc, z, insertions, gamma)
        total += word.coefficient(gamma) * acc
    return sp.simplify(total)
