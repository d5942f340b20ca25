"""Divisibility combination, conflicting cores and their resolvents, and
weak Cooper elimination of a single variable."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .arith import extended_gcd, gcd, lcm
from .bounds import bound_ineq, div_has_solution, val
from .model import (
    BoundStack,
    Constraint,
    Divisibility,
    Inequality,
    Poly,
    Problem,
    Variable,
    VariableOrder,
    VarKind,
)

INTERVAL = "interval"
DIVISIBILITY = "divisibility"
DIOPHANTINE = "diophantine"


def _oriented(D: Divisibility, x: Variable) -> Divisibility:
    """D rewritten so that its coefficient on x is positive."""
    if D.poly.coeffs.get(x, 0) < 0:
        return Divisibility(D.modulus, -D.poly)
    return D


def divsolve(x: Variable, I1: Divisibility, I2: Divisibility) -> tuple[Divisibility, Divisibility]:
    """Replace two divisibility constraints on x by an equivalent pair in
    which only the first mentions x."""
    I1, I2 = _oriented(I1, x), _oriented(I2, x)
    a1, a2 = I1.poly.coeffs.get(x, 0), I2.poly.coeffs.get(x, 0)
    if a1 == 0 or a2 == 0:
        raise ValueError(f"{x} must occur in both {I1} and {I2}")
    d1, d2 = I1.modulus, I2.modulus
    p1, p2 = I1.poly.without(x), I2.poly.without(x)
    d, c1, c2 = extended_gcd(a1 * d2, a2 * d1)
    first = Divisibility(d1 * d2, Poly({x: d}) + p1.scale(c1 * d2) + p2.scale(c2 * d1))
    second = Divisibility(d, p2.scale(-a1) + p1.scale(a2))
    return first, second


def combine_divs(x: Variable, C: Problem) -> Problem:
    """Leave exactly one divisibility constraint on x (adding 1 | x if none)."""
    out = Problem(order=C.order)
    divs = []
    for c in C:
        if isinstance(c, Divisibility) and c.coeff(x) != 0:
            divs.append(_oriented(c, x))
        else:
            out.add(c)
    if not divs:
        out.add(Divisibility(1, Poly({x: 1})))
        return out
    current = divs[0]
    for other in divs[1:]:
        current, rest = divsolve(x, current, other)
        out.add(rest)
    out.add(current)
    return out


# ---------------------------------------------------------------------------
# conflicting cores


@dataclass(frozen=True)
class ConflictingCore:
    var: Variable
    kind: str
    constraints: tuple  # (lower, upper) / (lower, upper, div) / (div,)

    def signature(self):
        return (self.var, frozenset(self.constraints))


@dataclass(frozen=True)
class StrongResolvent:
    r_k: tuple
    r_c: tuple
    fresh: Optional[Variable] = None

    @property
    def constraints(self) -> tuple:
        return self.r_k + self.r_c


def _pair_parts(lower_c: Inequality, upper_c: Inequality, x: Variable):
    """-a*x + p <= 0 and b*x - q <= 0  ->  (a, p, b, q)."""
    a = -lower_c.poly.coeffs[x]
    p = lower_c.poly.without(x)
    b = upper_c.poly.coeffs[x]
    q = -upper_c.poly.without(x)
    return a, p, b, q


def classify_core(x: Variable, C: Iterable[Constraint], M: BoundStack, order: VariableOrder,
                  index: Optional[Callable] = None) -> Optional[ConflictingCore]:
    """Find a conflicting core at x among the constraints whose top is x.

    Every other variable of those constraints has to be fixed in M.
    Preference: diophantine, then divisibility, then interval; ties between
    equally strong inequalities go to the earliest inserted one.
    """
    rank = order.rank
    rx = rank[x]
    lowers, uppers, divs = [], [], []
    for pos, c in enumerate(C):
        a = c.poly.coeffs.get(x, 0)
        if a == 0:
            continue
        if any(rank[v] > rx for v in c.poly.coeffs):
            continue
        for v in c.poly.coeffs:
            if v != x and not M.is_fixed(v):
                raise ValueError(f"classify_core: {v} in {c} is not fixed")
        key = index(c) if index else pos
        if isinstance(c, Divisibility):
            divs.append((key, _oriented(c, x)))
        elif a < 0:
            lowers.append((key, c))
        else:
            uppers.append((key, c))

    best_l = best_u = None
    if lowers:
        best_l = max(lowers, key=lambda t: (bound_ineq(t[1], x, M), -t[0]))[1]
    if uppers:
        best_u = min(uppers, key=lambda t: (bound_ineq(t[1], x, M), t[0]))[1]
    divs.sort(key=lambda t: t[0])

    for _, D in divs:
        c = D.poly.coeffs[x]
        s = val(D.poly.without(x), M)
        if s % gcd(c, D.modulus) != 0:
            return ConflictingCore(x, DIOPHANTINE, (D,))
    if best_l is not None and best_u is not None:
        bl, bu = bound_ineq(best_l, x, M), bound_ineq(best_u, x, M)
        if bl <= bu:
            for _, D in divs:
                c = D.poly.coeffs[x]
                s = val(D.poly.without(x), M)
                if not div_has_solution(D.modulus, c, s, bl, bu):
                    return ConflictingCore(x, DIVISIBILITY, (best_l, best_u, D))
        else:
            return ConflictingCore(x, INTERVAL, (best_l, best_u))
    return None


def _fresh_default() -> Variable:
    return Variable("_k", VarKind.FRESH)


def cooper(core: ConflictingCore, fresh: Optional[Variable] = None) -> StrongResolvent:
    """Strong resolvent for a conflicting core; `fresh` is the new k."""
    x = core.var
    if core.kind == DIOPHANTINE:
        (D,) = core.constraints
        c = D.poly.coeffs[x]
        return StrongResolvent((), (Divisibility(gcd(c, D.modulus), D.poly.without(x)),))
    k = fresh or _fresh_default()
    K = Poly({k: 1})
    a, p, b, q = _pair_parts(core.constraints[0], core.constraints[1], x)
    main = Inequality(p.scale(b) - q.scale(a) + K.scale(b))
    if core.kind == INTERVAL:
        r_k = (Inequality(-K), Inequality(K.add_const(-a + 1)))
        r_c = (main, Divisibility(a, K + p))
        return StrongResolvent(r_k, r_c, k)
    D = core.constraints[2]
    c = D.poly.coeffs[x]
    d = D.modulus
    s = D.poly.without(x)
    m = lcm(a, a * d // gcd(a * d, c)) - 1
    r_k = (Inequality(-K), Inequality(K.add_const(-m)))
    r_c = (main, Divisibility(a, K + p), Divisibility(a * d, p.scale(c) + s.scale(a) + K.scale(c)))
    return StrongResolvent(r_k, r_c, k)


# ---------------------------------------------------------------------------
# weak Cooper elimination


def _trivial(c: Constraint) -> bool:
    return c.is_trivially_true()


def _fresh_namer(C: Problem):
    taken = {v.name for v in C.variables()}
    n = [0]

    def make() -> Variable:
        while True:
            n[0] += 1
            name = f"_k{n[0]}"
            if name not in taken:
                taken.add(name)
                return Variable(name, VarKind.FRESH)

    return make


def weak_cooper_eliminate(x: Variable, C: Problem, fresh: Optional[Callable[[], Variable]] = None) -> Problem:
    """A problem without x that is satisfiable iff C is (for some x).

    Each lower/upper pair of inequalities on x contributes one fresh bounded
    variable; no disjunction is produced.
    """
    fresh = fresh or _fresh_namer(C)
    combined = combine_divs(x, C)
    order = C.order.copy() if C.order is not None else None
    out = Problem(order=order)
    lowers, uppers, D = [], [], None
    for c in combined:
        a = c.coeff(x)
        if a == 0:
            if not _trivial(c):
                out.add(c)
        elif isinstance(c, Divisibility):
            D = _oriented(c, x)
        elif a < 0:
            lowers.append(c)
        else:
            uppers.append(c)
    c_x = D.poly.coeffs[x]
    d = D.modulus
    s = D.poly.without(x)
    g = Divisibility(gcd(c_x, d), s)
    if not _trivial(g):
        out.add(g)
    for lo in lowers:
        for up in uppers:
            k = fresh()
            if order is not None:
                order.add_fresh(k)
            core = ConflictingCore(x, DIVISIBILITY, (lo, up, D))
            for r in cooper(core, k).constraints:
                if not _trivial(r):
                    out.add(r)
    return out


def constraints_on(x: Variable, C: Iterable[Constraint]) -> list[Constraint]:
    return [c for c in C if c.coeff(x) != 0]


__all__ = [
    "ConflictingCore",
    "StrongResolvent",
    "divsolve",
    "combine_divs",
    "classify_core",
    "cooper",
    "weak_cooper_eliminate",
    "INTERVAL",
    "DIVISIBILITY",
    "DIOPHANTINE",
]
