"""Rewriting engine: derivative expansion to canonical convergent form.

Differentiating the correlator G(z) produces integrals that do not converge
absolutely.  The engine applies two moves until every term is either
canonical-convergent or a contour term:

* ``symmetrize``: splits a pair kernel 1/(x_a - x_b) supported in a ball via
  1 = 1_B(x_b) + 1_{B^c}(x_b); the symmetric part becomes a bounded
  difference-quotient marker, the rest adjoins an F factor.

* ``reduce_insertion_kernel``: solves for the singular insertion kernel
  1/(x_k - z_i) on a fresh ball B around z_i using the pointwise identity

      K(x; z_i) G(x; z) = -(2/(gamma a_i)) d_x G
                          - sum_{j != i} (a_j/a_i) K(x; z_j) G
                          - (mu gamma / a_i) int G(x, y; z)/(y - x) d^2 y

  integrated over B, with Stokes int_B d_x G = (i/2) oint_dB G dxbar and the
  antisymmetry of the in-ball pair integral.  Outputs: the complement term,
  one ball term per other insertion, the F-adjoined chaos term, a bounded
  dF marker term when other factors depend on x_k, and one contour term.

The expansion seed is the first-derivative formula

    d_{z_i} G = -sum_{j != i} (a_i a_j / 2) 1/(z_i - z_j) G
                - (mu gamma a_i / 2) int K(x; z_i) G(x; z) d^2 x,

and each subsequent derivative adds the analogous prefactor, cross-kernel,
and fresh-insertion terms plus ball-motion contour terms for the indicator
supports centered at the differentiated insertion.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .correlators import InsertionConfig
from .errors import ConfigError, RewriteError
from .terms import (
    BALL,
    BALL_C,
    Coefficient,
    ContourBinding,
    FFactor,
    Indicator,
    InsertionKernel,
    PairKernel,
    PhiMarker,
    Term,
    TermList,
    _kernel_bounded,
    f_class_check,
)

MAX_ORDER = 4
_MAX_BALLS = 64


@dataclass(frozen=True)
class DerivativeRequest:
    """Order-n derivative d_{z_{i(1)}} ... d_{z_{i(n)}} G of a base config."""

    order: int
    indices: tuple
    base: InsertionConfig
    ball_radius: float = None
    max_order: int = MAX_ORDER

    def __post_init__(self):
        if not 0 <= self.order <= self.max_order:
            raise RewriteError(
                f"derivative order {self.order} exceeds the maximum "
                f"{self.max_order}"
            )
        if len(self.indices) != self.order:
            raise ConfigError("need one insertion index per derivative")
        n_ins = len(self.base.points)
        if any(not 1 <= i <= n_ins for i in self.indices):
            raise ConfigError("derivative index out of range")
        r = self.ball_radius
        if r is None:
            r = self.base.delta / 4.0
        if not 0.0 < r < self.base.delta / 2.0:
            raise ConfigError("ball radius must lie in (0, delta/2)")
        object.__setattr__(self, "ball_radius", float(r))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


def _next_ball(term: Term) -> int:
    j = 1 + max((j for j, _ in term.balls), default=0)
    if j > _MAX_BALLS:
        raise RewriteError("ball-index budget exhausted (depth error)")
    return j


def _next_var(term: Term) -> int:
    used = set(term.free_vars) | {c.var for c in term.contours}
    return 1 + max(used, default=0)


def _depends_on(kernel, variables) -> bool:
    if isinstance(kernel, FFactor):
        return kernel.a in variables or kernel.b in variables
    if isinstance(kernel, InsertionKernel):
        return kernel.k in variables
    return kernel.k in variables or kernel.l in variables


def symmetrize(term: Term, a: int, b: int) -> TermList:
    """The two-term ball split of a pair kernel (symmetrization lemma)."""
    pair = next(
        (
            k
            for k in term.kernels
            if isinstance(k, PairKernel) and {k.k, k.l} == {a, b}
        ),
        None,
    )
    if pair is None:
        raise RewriteError(f"no pair kernel on (x{a}, x{b}) to symmetrize")
    ball = next(
        (
            ind
            for ind in term.indicators_of(a)
            if ind.kind == BALL
        ),
        None,
    )
    if ball is None:
        raise RewriteError(f"variable x{a} carries no ball indicator")
    sign = 1 if (pair.k, pair.l) == (a, b) else -1
    rest_kernels = tuple(k for k in term.kernels if k is not pair)
    out = []

    # (i) symmetric part: both variables in the ball, kernel replaced by the
    # antisymmetric difference quotient of the dependent factors
    dependent = tuple(k for k in rest_kernels if _depends_on(k, {a, b}))
    if dependent:
        marker = PhiMarker(
            kind="diffquot",
            payload="swap(x%d,x%d): %s"
            % (a, b, " ".join(k.serialize() for k in dependent)),
            smooth_off=tuple(
                sorted({k.j for k in dependent if isinstance(k, FFactor)})
            ),
        )
        out.append(
            replace(
                term,
                coeff=term.coeff * Fraction(sign, 2),
                level=term.level + 1,
                kernels=tuple(k for k in rest_kernels if k not in dependent),
                indicators=term.indicators + (Indicator(b, BALL, ball.j),),
                phi=term.phi + (marker,),
            )
        )
    # else: F(x) - F(x; a<->b) vanishes identically -> exact zero, no term

    # (ii) F-adjoined part from 1_B(x_a) 1_{B^c}(x_b) / (x_a - x_b)
    out.append(
        replace(
            term,
            coeff=term.coeff * sign,
            level=term.level + 1,
            kernels=rest_kernels + (FFactor(ball.j, a, b),),
            indicators=tuple(
                ind for ind in term.indicators if ind is not ball
            ),
        )
    )
    result = TermList(out).canonicalize()
    for t in result:
        if not f_class_check(t, max(t.level, ball.j)):
            raise RewriteError("symmetrize produced a non-class term")
    return result


def _drop_redundant(indicators, var, center, new_j):
    """Remove ball indicators of ``var`` at the same center that strictly
    contain the new smaller ball (identically 1 on it)."""
    return tuple(
        ind
        for ind in indicators
        if not (ind.var == var and ind.kind == BALL and ind.j < new_j)
    )


def reduce_insertion_kernel(term: Term, k: int, i: int) -> TermList:
    """Solve for the kernel 1/(x_k - z_i) on a fresh ball around z_i."""
    if not term.kernels:
        return TermList([term])
    kernel = next(
        (
            ker
            for ker in term.kernels
            if isinstance(ker, InsertionKernel) and ker.k == k and ker.i == i
        ),
        None,
    )
    if kernel is None:
        raise RewriteError(f"no insertion kernel 1/(x{k} - z{i}) present")
    rest = tuple(ker for ker in term.kernels if ker is not kernel)
    if not f_class_check(replace(term, kernels=rest), max(term.level, 1) + 1):
        raise RewriteError("kernel-free part is not in the class")

    jnew = _next_ball(term)
    balls = term.balls + ((jnew, i),)
    n_ins = term.n_insertions
    if n_ins < 1:
        raise RewriteError("term does not record its insertion count")
    out = []

    # complement part: kernel bounded away from z_i
    out.append(
        replace(
            term,
            level=term.level + 1,
            balls=balls,
            indicators=term.indicators + (Indicator(k, BALL_C, jnew),),
        )
    )
    # ball parts from the other insertions
    for j in range(1, n_ins + 1):
        if j == i:
            continue
        out.append(
            replace(
                term,
                coeff=term.coeff
                * Coefficient(Fraction(-1), alphas=((j, 1), (i, -1))),
                level=term.level + 1,
                balls=balls,
                kernels=rest + (InsertionKernel(k, j),),
                indicators=_drop_redundant(term.indicators, k, i, jnew)
                + (Indicator(k, BALL, jnew),),
            )
        )
    # F-adjoined chaos term with a fresh gamma-insertion variable
    m = _next_var(term)
    out.append(
        replace(
            term,
            coeff=term.coeff
            * Coefficient(Fraction(1), mu=1, gamma=1, alphas=((i, -1),)),
            level=term.level + 1,
            balls=balls,
            kernels=rest + (FFactor(jnew, k, m),),
            indicators=_drop_redundant(term.indicators, k, i, jnew),
        )
    )
    # bounded dF term when other factors depend on x_k
    dependent = tuple(ker for ker in rest if _depends_on(ker, {k}))
    if dependent:
        marker = PhiMarker(
            kind="dF",
            payload="d/dx%d: %s" % (k, " ".join(d.serialize() for d in dependent)),
            smooth_off=tuple(
                sorted({d.j for d in dependent if isinstance(d, FFactor)})
            ),
        )
        marker_inds = _drop_redundant(term.indicators, k, i, jnew) + (
            Indicator(k, BALL, jnew),
        )
        # keep ball support of the consumed F-factor arguments explicit
        for d in dependent:
            if isinstance(d, FFactor):
                for v in (d.a, d.b):
                    if v != k and not any(
                        ind.var == v and ind.kind == BALL and ind.j == d.j
                        for ind in marker_inds
                    ):
                        marker_inds += (Indicator(v, BALL, d.j),)
        out.append(
            replace(
                term,
                coeff=term.coeff
                * Coefficient(Fraction(2), gamma=-1, alphas=((i, -1),)),
                level=term.level + 1,
                balls=balls,
                kernels=tuple(ker for ker in rest if ker not in dependent),
                indicators=marker_inds,
                phi=term.phi + (marker,),
            )
        )
    # contour term from Stokes: int_B d_x G = (i/2) oint_dB G dxbar
    out.append(
        replace(
            term,
            coeff=term.coeff
            * Coefficient(Fraction(-1), gamma=-1, i_pow=1, alphas=((i, -1),)),
            level=term.level + 1,
            balls=balls,
            kernels=rest,
            indicators=tuple(ind for ind in term.indicators if ind.var != k),
            contours=term.contours + (ContourBinding(k, jnew, "dxbar"),),
        )
    )
    return TermList(out).canonicalize()


def _canonical_terms(term: Term) -> list:
    """Apply rewrite moves until every bare kernel is class-bounded."""
    for kernel in term.kernels:
        if isinstance(kernel, FFactor) or _kernel_bounded(term, kernel):
            continue
        if isinstance(kernel, InsertionKernel):
            reduced = reduce_insertion_kernel(term, kernel.k, kernel.i)
        else:
            ball = next(
                (
                    ind
                    for ind in term.indicators_of(kernel.k)
                    if ind.kind == BALL
                ),
                None,
            )
            if ball is None:
                raise RewriteError(
                    "cannot symmetrize a pair kernel without a ball support"
                )
            reduced = symmetrize(term, kernel.k, kernel.l)
        out = []
        for t in reduced:
            out.extend(_canonical_terms(t))
        return out
    return [term]


def _differentiate(term: Term, i: int) -> list:
    """Product-rule derivative of one canonical term in z_i (pre-rewrite)."""
    n_insertions = term.n_insertions
    out = []
    # z-prefactor power rule
    for (p, q) in term.z_kernels:
        if i == p:
            out.append(
                replace(
                    term,
                    coeff=term.coeff * Fraction(-1),
                    z_kernels=term.z_kernels + ((p, q),),
                )
            )
        elif i == q:
            out.append(
                replace(term, z_kernels=term.z_kernels + ((p, q),))
            )
    # insertion-pair prefactors of G
    for j in range(1, n_insertions + 1):
        if j == i:
            continue
        out.append(
            replace(
                term,
                coeff=term.coeff
                * Coefficient(Fraction(-1, 2), alphas=((i, 1), (j, 1))),
                z_kernels=term.z_kernels + ((i, j),),
            )
        )
    # cross terms against the existing gamma-insertion variables
    for k in term.free_vars + tuple(c.var for c in term.contours):
        out.append(
            replace(
                term,
                coeff=term.coeff
                * Coefficient(Fraction(1, 2), gamma=1, alphas=((i, 1),)),
                kernels=term.kernels + (InsertionKernel(k, i, "z"),),
            )
        )
    # the fresh gamma insertion
    m = _next_var(term)
    out.append(
        replace(
            term,
            coeff=term.coeff
            * Coefficient(Fraction(-1, 2), mu=1, gamma=1, alphas=((i, 1),)),
            kernels=term.kernels + (InsertionKernel(m, i, "z"),),
        )
    )
    # ball-motion boundary terms: supports centered at z_i move with it
    moving = [ind for ind in term.indicators if term.ball_center(ind.j) == i]
    for k in term.kernels:
        if isinstance(k, FFactor) and term.ball_center(k.j) == i:
            moving += [Indicator(k.a, BALL, k.j), Indicator(k.b, BALL_C, k.j)]
    for ind in moving:
        out.append(
            replace(
                term,
                indicators=tuple(d for d in term.indicators if d is not ind),
                contours=term.contours + (ContourBinding(ind.var, ind.j, "ds"),),
                phi=term.phi
                + (
                    PhiMarker(
                        kind="ball_motion",
                        payload=ind.serialize(),
                        smooth_off=(ind.j,),
                    ),
                ),
            )
        )
    return out


def expand_derivative(req: DerivativeRequest) -> TermList:
    """Canonical TermList for the requested derivative of G."""
    current = TermList(
        [Term(Coefficient(Fraction(1)), n_insertions=len(req.base.points))]
    )
    for i in req.indices:
        produced = []
        for term in current:
            for t in _differentiate(term, i):
                produced.extend(_canonical_terms(t))
        current = TermList(produced).canonicalize()
    return current


def term_group(term: Term) -> str:
    """Structural group label (used for the first-derivative multiset check)."""
    has_f = any(isinstance(k, FFactor) for k in term.kernels)
    has_ins = any(isinstance(k, InsertionKernel) for k in term.kernels)
    kinds = {ind.kind for ind in term.indicators}
    if term.is_contour:
        return "contour"
    if has_f:
        return "chaos_pair"
    if has_ins and BALL in kinds:
        return "ball_insertion"
    if has_ins and BALL_C in kinds:
        return "complement_insertion"
    if term.z_kernels and not term.kernels:
        return "prefactor"
    return "other"
