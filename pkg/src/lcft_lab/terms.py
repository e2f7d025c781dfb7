"""The term algebra for derivatives of correlation functions.

A ``Term`` denotes (coefficient) * (product of z-prefactors 1/(z_i - z_j))
* (product of kernel factors) * (indicator supports) * (opaque bounded
factor phi) * G(x_1, ..., x_m; z), integrated over its free x variables,
with contour-bound variables integrated over circles instead.  Kernel
factors are one of

    F_j(x_a, x_b)   = 1_{B_j}(x_a) 1_{B_j^c}(x_b) / (x_a - x_b)
    K(x_k; z_i)     = 1 / (x_k - z_i)
    P(x_k, x_l)     = 1 / (x_k - x_l)

where B_j = B(z_{c(j)}, r/j) is the j-th ball (radius r/j, center recorded
per term) and A_j is the closed annulus of width r/(4 j (j+1)) around the
circle dB_j.  Coefficients are exact: a rational number times integer
powers of mu, gamma, (s+1), i, and the insertion momenta alpha_i.

Class membership (``f_class_check``): a term is in the class at level n if
its F-factor indices form a subset of {1..n} without repetition, every
bare K/P kernel is bounded on the term's indicator support (its
singularity is separated from the support by a positive distance), and the
phi markers are bounded with smoothness failing only on the circles dB_j.

Serialization: one term per line,

    coeff | kernels | indicators | contours | phi

with space-separated tokens; the grammar is implemented by ``serialize_term``
and ``parse_term`` and round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import ConfigError, RewriteError

# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class Coefficient:
    """rational * mu^a * gamma^b * (s+1)^c * i^d * prod alpha_i^{e_i}."""

    rational: Fraction = Fraction(1)
    mu: int = 0
    gamma: int = 0
    s1: int = 0
    i_pow: int = 0
    alphas: tuple = ()  # sorted tuple of (insertion index, power)

    def __post_init__(self):
        object.__setattr__(self, "rational", Fraction(self.rational))
        object.__setattr__(self, "i_pow", self.i_pow % 4)
        merged = {}
        for idx, p in self.alphas:
            merged[idx] = merged.get(idx, 0) + p
        object.__setattr__(
            self,
            "alphas",
            tuple(sorted((k, v) for k, v in merged.items() if v != 0)),
        )

    def __mul__(self, other):
        if isinstance(other, Coefficient):
            return Coefficient(
                self.rational * other.rational,
                self.mu + other.mu,
                self.gamma + other.gamma,
                self.s1 + other.s1,
                self.i_pow + other.i_pow,
                self.alphas + other.alphas,
            )
        return Coefficient(
            self.rational * Fraction(other), self.mu, self.gamma,
            self.s1, self.i_pow, self.alphas,
        )

    @property
    def is_zero(self) -> bool:
        return self.rational == 0

    def evaluate(self, config) -> complex:
        out = complex(self.rational)
        out *= config.mu**self.mu * config.gamma**self.gamma
        out *= (config.s + 1.0) ** self.s1
        out *= 1j**self.i_pow
        for idx, p in self.alphas:
            out *= config.momenta[idx - 1] ** p
        return out

    def serialize(self) -> str:
        ser = getattr(self, "_ser", None)
        if ser is None:
            parts = [str(self.rational)]
            for sym, p in (("mu", self.mu), ("gamma", self.gamma),
                           ("s1", self.s1), ("i", self.i_pow)):
                if p:
                    parts.append(f"{sym}^{p}")
            for idx, p in self.alphas:
                parts.append(f"a{idx}^{p}")
            ser = " ".join(parts)
            object.__setattr__(self, "_ser", ser)
        return ser


def parse_coefficient(text: str) -> Coefficient:
    tokens = text.split()
    if not tokens:
        raise ConfigError("empty coefficient")
    kwargs = {"rational": Fraction(tokens[0]), "alphas": ()}
    for tok in tokens[1:]:
        sym, _, p = tok.partition("^")
        p = int(p)
        if sym == "mu":
            kwargs["mu"] = p
        elif sym == "gamma":
            kwargs["gamma"] = p
        elif sym == "s1":
            kwargs["s1"] = p
        elif sym == "i":
            kwargs["i_pow"] = p
        elif sym.startswith("a"):
            kwargs["alphas"] += ((int(sym[1:]), p),)
        else:
            raise ConfigError(f"unknown coefficient symbol {sym!r}")
    return Coefficient(**kwargs)


# ---------------------------------------------------------------------------
# kernel factors, indicators, contours, phi markers


@dataclass(frozen=True)
class FFactor:
    """F_j(x_a, x_b) = 1_{B_j}(x_a) 1_{B_j^c}(x_b) / (x_a - x_b)."""

    j: int
    a: int
    b: int

    def __post_init__(self):
        if self.a == self.b:
            raise RewriteError("F factor requires distinct variables")

    def serialize(self):
        return f"F[{self.j}](x{self.a},x{self.b})"


@dataclass(frozen=True)
class InsertionKernel:
    """1 / (x_k - z_i).

    ``slot`` records which argument the kernel arose from by
    differentiation: "x" for the moving-point slot (integration by parts
    and kernel reduction), "z" for the insertion slot (derivatives in
    z_i).  The two realizations agree in the continuum; at finite
    spectral resolution the regularized kernels differ by a truncation
    asymmetry, and numeric evaluation must use the matching slot.
    """

    k: int
    i: int
    slot: str = "x"

    def __post_init__(self):
        if self.slot not in ("x", "z"):
            raise RewriteError(f"unknown kernel slot {self.slot!r}")

    def serialize(self):
        star = "*" if self.slot == "z" else ""
        return f"K{star}(x{self.k};z{self.i})"


@dataclass(frozen=True)
class PairKernel:
    """1 / (x_k - x_l)."""

    k: int
    l: int

    def __post_init__(self):
        if self.k == self.l:
            raise RewriteError("pair kernel requires distinct variables")

    def serialize(self):
        return f"P(x{self.k},x{self.l})"


BALL, BALL_C, ANNULUS = "ball", "ball_c", "annulus"


@dataclass(frozen=True)
class Indicator:
    """Support restriction of variable x_var to a region tied to ball j."""

    var: int
    kind: str  # ball | ball_c | annulus
    j: int

    def __post_init__(self):
        if self.kind not in (BALL, BALL_C, ANNULUS):
            raise ConfigError(f"unknown indicator kind {self.kind!r}")

    def serialize(self):
        tag = {BALL: "B", BALL_C: "Bc", ANNULUS: "A"}[self.kind]
        return f"{tag}[{self.j}](x{self.var})"


@dataclass(frozen=True)
class ContourBinding:
    """Variable x_var bound to the circle dB_j; differential dx or dxbar."""

    var: int
    j: int
    differential: str = "dxbar"

    def serialize(self):
        return f"dB[{self.j}](x{self.var},{self.differential})"


@dataclass(frozen=True)
class PhiMarker:
    """Opaque bounded factor with an evaluable closed form.

    kind "diffquot": [F(..x_a..) - F(..x_b..)] / (x_a - x_b), antisymmetric
    difference quotient of the recorded swapped factors (bounded by their
    smoothness on the recorded region).  kind "dF": derivative of the
    recorded F-product in the recorded variable (bounded on the recorded
    ball).  The payload stores the serialized factors so the marker stays
    evaluable.
    """

    kind: str
    payload: str = ""
    smooth_off: tuple = ()

    def as_dict(self):
        return {"kind": self.kind, "payload": self.payload,
                "smooth_off": list(self.smooth_off)}

    def serialize(self):
        return json.dumps(self.as_dict(), sort_keys=True,
                          separators=(",", ":"))


# ---------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class Term:
    """One canonical summand; immutable value with exact coefficient."""

    coeff: Coefficient
    level: int = 0
    z_kernels: tuple = ()  # oriented (i, j) per power of 1/(z_i - z_j)
    kernels: tuple = ()
    indicators: tuple = ()
    contours: tuple = ()
    phi: tuple = ()
    balls: tuple = ()  # ((j, center insertion index), ...)
    n_insertions: int = 0  # number of insertions of the underlying config

    def __post_init__(self):
        # z-kernels keep their orientation: the first index is the slot the
        # derivative acted on, which the regularized realization depends on
        for i, j in self.z_kernels:
            if i == j:
                raise RewriteError("z-prefactor requires distinct insertions")
        object.__setattr__(self, "z_kernels", tuple(sorted(self.z_kernels)))
        centers = {}
        for j, c in self.balls:
            if j in centers and centers[j] != c:
                raise RewriteError(f"ball {j} declared with two centers")
            centers[j] = c
        object.__setattr__(
            self, "balls", tuple(sorted(centers.items()))
        )

    # -- structure helpers ------------------------------------------------

    @property
    def free_vars(self) -> tuple:
        bound = {c.var for c in self.contours}
        out = set()
        for k in self.kernels:
            if isinstance(k, FFactor):
                out |= {k.a, k.b}
            elif isinstance(k, InsertionKernel):
                out.add(k.k)
            else:
                out |= {k.k, k.l}
        out |= {ind.var for ind in self.indicators}
        return tuple(sorted(out - bound))

    @property
    def is_contour(self) -> bool:
        return bool(self.contours)

    def ball_center(self, j: int):
        for jj, c in self.balls:
            if jj == j:
                return c
        raise RewriteError(f"ball {j} has no declared center")

    def indicators_of(self, var: int) -> tuple:
        return tuple(ind for ind in self.indicators if ind.var == var)

    def signature(self) -> str:
        """Canonicalization key: the full serialized structure sans coefficient."""
        sig = getattr(self, "_sig", None)
        if sig is None:
            sig = "|".join(serialize_term(self).split("|")[1:])
            object.__setattr__(self, "_sig", sig)
        return sig

    def scaled(self, factor) -> "Term":
        return replace(self, coeff=self.coeff * factor)


class TermList:
    """Ordered list of terms with canonical normal form."""

    def __init__(self, terms=()):
        self.terms = tuple(terms)

    def canonicalize(self) -> "TermList":
        """Merge equal-structure terms, drop zero coefficients, sort by key."""
        merged = {}
        for t in self.terms:
            c = t.coeff
            key = (t.signature(), (c.mu, c.gamma, c.s1, c.i_pow, c.alphas))
            if key in merged:
                prev = merged[key]
                merged[key] = replace(
                    prev,
                    coeff=replace(
                        prev.coeff,
                        rational=prev.coeff.rational + t.coeff.rational,
                    ),
                )
            else:
                merged[key] = t
        out = [
            (sig, t.coeff.serialize(), t)
            for (sig, _), t in merged.items()
            if not t.coeff.is_zero
        ]
        out.sort(key=lambda e: (e[0], e[1]))
        return TermList(t for _, _, t in out)

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other):
        return TermList(self.terms + tuple(other))

    def serialize(self) -> str:
        return "\n".join(serialize_term(t) for t in self.terms)


# ---------------------------------------------------------------------------
# serialization


def serialize_term(t: Term) -> str:
    kernel_tokens = [f"n={t.level}", f"N={t.n_insertions}"]
    kernel_tokens += [f"Z(z{i},z{j})" for i, j in t.z_kernels]
    kernel_tokens += [k.serialize() for k in t.kernels]
    ind_tokens = [f"ball[{j}]@z{c}" for j, c in t.balls]
    ind_tokens += [ind.serialize() for ind in sorted(
        t.indicators, key=lambda d: (d.var, d.kind, d.j))]
    contour_tokens = [c.serialize() for c in sorted(
        t.contours, key=lambda c: (c.var, c.j))]
    phi_field = (
        json.dumps([p.as_dict() for p in t.phi], sort_keys=True,
                   separators=(",", ":"))
        if t.phi
        else "1"
    )
    return " | ".join([
        t.coeff.serialize(),
        " ".join(kernel_tokens),
        " ".join(ind_tokens) or "-",
        " ".join(contour_tokens) or "-",
        phi_field,
    ])


def _parse_var(tok: str) -> int:
    if not tok.startswith("x"):
        raise ConfigError(f"expected variable token, got {tok!r}")
    return int(tok[1:])


def parse_term(line: str) -> Term:
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != 5:
        raise ConfigError("term line must have 5 |-separated fields")
    coeff = parse_coefficient(parts[0])
    level = 0
    n_insertions = 0
    z_kernels, kernels = [], []
    for tok in parts[1].split():
        if tok.startswith("n="):
            level = int(tok[2:])
        elif tok.startswith("N="):
            n_insertions = int(tok[2:])
        elif tok.startswith("Z("):
            a, b = tok[2:-1].split(",")
            z_kernels.append((int(a[1:]), int(b[1:])))
        elif tok.startswith("F["):
            j, rest = tok[2:].split("]")
            a, b = rest[1:-1].split(",")
            kernels.append(FFactor(int(j), _parse_var(a), _parse_var(b)))
        elif tok.startswith("K(") or tok.startswith("K*("):
            slot = "z" if tok[1] == "*" else "x"
            body = tok[3:-1] if slot == "z" else tok[2:-1]
            k, i = body.split(";")
            kernels.append(InsertionKernel(_parse_var(k), int(i[1:]), slot))
        elif tok.startswith("P("):
            k, l = tok[2:-1].split(",")
            kernels.append(PairKernel(_parse_var(k), _parse_var(l)))
        else:
            raise ConfigError(f"unknown kernel token {tok!r}")
    balls, indicators = [], []
    if parts[2] != "-":
        for tok in parts[2].split():
            if tok.startswith("ball["):
                j, c = tok[5:].split("]@z")
                balls.append((int(j), int(c)))
            else:
                tag, rest = tok.split("[")
                j, var = rest.split("](")
                kind = {"B": BALL, "Bc": BALL_C, "A": ANNULUS}[tag]
                indicators.append(Indicator(_parse_var(var[:-1]), kind, int(j)))
    contours = []
    if parts[3] != "-":
        for tok in parts[3].split():
            j, rest = tok[3:].split("](")
            var, diff = rest[:-1].split(",")
            contours.append(ContourBinding(_parse_var(var), int(j), diff))
    phi = []
    if parts[4] != "1":
        for d in json.loads(parts[4]):
            phi.append(PhiMarker(d["kind"], d["payload"],
                                 tuple(d["smooth_off"])))
    return Term(coeff, level, tuple(z_kernels), tuple(kernels),
                tuple(indicators), tuple(contours), tuple(phi), tuple(balls),
                n_insertions)


def parse_term_list(text: str) -> TermList:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    return TermList([parse_term(ln) for ln in lines])


# ---------------------------------------------------------------------------
# geometry of the symbolic regions


def _region_separated(term: Term, r1: Indicator, r2: Indicator) -> bool:
    """Positive distance between two indicator regions (structural rules).

    Balls have radii r/j with distinct j; annuli A_j have width
    r/(4 j (j+1)), which keeps them strictly inside the gap between
    consecutive balls at the same center.
    """
    c1, c2 = term.ball_center(r1.j), term.ball_center(r2.j)
    k1, k2 = r1.kind, r2.kind
    if k2 < k1:
        r1, r2, c1, c2, k1, k2 = r2, r1, c2, c1, k2, k1
    if c1 != c2:
        # distinct centers: bounded regions around distinct insertions are
        # separated (r < delta/2); a complement reaches everywhere
        return BALL_C not in (k1, k2)
    if k1 == ANNULUS and k2 == ANNULUS:
        return r1.j != r2.j
    if k1 == ANNULUS and k2 == BALL:
        return r2.j != r1.j  # annulus straddles its own circle only
    if k1 == ANNULUS and k2 == BALL_C:
        return r1.j > r2.j  # annulus strictly inside the smaller-index ball
    if k1 == BALL and k2 == BALL:
        return False  # nested/overlapping disks at one center
    if k1 == BALL and k2 == BALL_C:
        return r1.j > r2.j  # strictly smaller ball inside the complement's ball
    return False  # two complements overlap


def _regions_of(term: Term, var: int) -> tuple:
    regions = term.indicators_of(var)
    for c in term.contours:
        if c.var == var:
            regions += (Indicator(var, ANNULUS, c.j),)
    for k in term.kernels:
        if isinstance(k, FFactor) and var in (k.a, k.b):
            regions += (Indicator(var, BALL, k.j),)
    return regions


def _kernel_bounded(term: Term, kernel) -> bool:
    """A bare K/P kernel is bounded iff indicators separate its singularity."""
    if isinstance(kernel, InsertionKernel):
        for reg in _regions_of(term, kernel.k):
            center = term.ball_center(reg.j)
            if reg.kind == BALL and center != kernel.i:
                return True
            if reg.kind in (BALL_C, ANNULUS) and center == kernel.i:
                return True
            if reg.kind == ANNULUS and center != kernel.i:
                return True
        return False
    if isinstance(kernel, PairKernel):
        for ra in _regions_of(term, kernel.k):
            for rb in _regions_of(term, kernel.l):
                if _region_separated(term, ra, rb):
                    return True
        return False
    return True


def f_class_check(term: Term, n: int) -> bool:
    """Membership in the level-n class (structural conditions 1-4)."""
    f_indices = [k.j for k in term.kernels if isinstance(k, FFactor)]
    if len(set(f_indices)) != len(f_indices):
        return False
    if any(not 1 <= j <= n for j in f_indices):
        return False
    declared = {j for j, _ in term.balls}
    used = set(f_indices)
    used |= {ind.j for ind in term.indicators}
    used |= {c.j for c in term.contours}
    if not used <= declared:
        return False
    for k in term.kernels:
        if isinstance(k, FFactor):
            continue
        if not _kernel_bounded(term, k):
            return False
    for p in term.phi:
        if any(not 1 <= j <= n for j in p.smooth_off):
            return False
    return True


# ---------------------------------------------------------------------------
# absolute convergence (annulus-split certificate)


def zeta(gamma: float) -> float:
    """The fusion gap: 2 + (leading fusion exponent), positive for gamma<2."""
    q = 2.0 / gamma + gamma / 2.0
    return 2.0 - gamma**2 + 0.5 * (2.0 * gamma - q) ** 2


def check_absolutely_convergent(term: Term, gamma: float = 1.0):
    """Certificate-producing convergence check after the annulus split.

    Per ball boundary j, the singular exponent is one power per kernel
    factor straddling dB_j plus the fusion contribution 2 - zeta of the
    correlator for the straddling pair; the threshold is the planar lemma
    exponent 3.  Variables whose singular support would have to sit in two
    disjoint annuli make the integrand vanish (certificate "vanishes").

    Returns (bool, list of per-boundary certificates).
    """
    z = zeta(gamma)
    straddle = {}  # boundary j -> kernel power count
    var_annuli = {}  # var -> set of boundaries it straddles
    for k in term.kernels:
        if isinstance(k, FFactor):
            straddle.setdefault(k.j, 0)
            straddle[k.j] += 1
            var_annuli.setdefault(k.a, set()).add(k.j)
            var_annuli.setdefault(k.b, set()).add(k.j)
        elif isinstance(k, PairKernel) and not _kernel_bounded(term, k):
            # unseparated bare pair: singular across every shared boundary
            shared = {r.j for r in _regions_of(term, k.k)} & {
                r.j for r in _regions_of(term, k.l)
            }
            j = min(shared) if shared else 0
            straddle.setdefault(j, 0)
            straddle[j] += 1
            var_annuli.setdefault(k.k, set()).add(j)
            var_annuli.setdefault(k.l, set()).add(j)
        elif isinstance(k, InsertionKernel) and not _kernel_bounded(term, k):
            return False, [{"kernel": k.serialize(),
                            "reason": "unbounded insertion kernel"}]
    certificates = []
    vanishing = {v for v, js in var_annuli.items() if len(js) > 1}
    ok = True
    for j, count in sorted(straddle.items()):
        vars_here = sorted(v for v, js in var_annuli.items() if j in js)
        if any(v in vanishing for v in vars_here):
            certificates.append(
                {"boundary": j, "verdict": "vanishes",
                 "reason": "variable pinned to two disjoint annuli"}
            )
            continue
        exponent = count + (2.0 - z)
        passed = exponent < 3.0
        certificates.append(
            {"boundary": j, "annulus": j, "kernel_powers": count,
             "exponent": exponent, "threshold": 3.0,
             "verdict": "convergent" if passed else "divergent"}
        )
        ok = ok and passed
    return ok, certificates
