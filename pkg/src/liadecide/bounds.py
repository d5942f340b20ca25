"""Interval evaluation of polynomials under a bound stack, and the bound
values that inequalities and divisibility constraints imply for a variable."""

from __future__ import annotations

from typing import Union

from .arith import ceil_div, floor_div, gcd
from .model import (
    NEG_INF,
    POS_INF,
    BoundStack,
    Constraint,
    Divisibility,
    Inequality,
    Poly,
    Variable,
)

BoundValue = Union[int, float]  # float only for +/- inf

LOWER = "lower"
UPPER = "upper"


def lower(p: Poly, M: BoundStack) -> BoundValue:
    total = p.const
    lo, hi = M._lo, M._hi
    for v, a in p.coeffs.items():
        if a > 0:
            b = lo.get(v)
        else:
            b = hi.get(v)
        if b is None:
            return NEG_INF
        total += a * b
    return total


def upper(p: Poly, M: BoundStack) -> BoundValue:
    total = p.const
    lo, hi = M._lo, M._hi
    for v, a in p.coeffs.items():
        if a > 0:
            b = hi.get(v)
        else:
            b = lo.get(v)
        if b is None:
            return POS_INF
        total += a * b
    return total


def _lower_without(p: Poly, x: Variable, M: BoundStack) -> BoundValue:
    total = p.const
    lo, hi = M._lo, M._hi
    for v, a in p.coeffs.items():
        if v == x:
            continue
        b = lo.get(v) if a > 0 else hi.get(v)
        if b is None:
            return NEG_INF
        total += a * b
    return total


def is_fixed_poly(p: Poly, M: BoundStack) -> bool:
    return all(M.is_fixed(v) for v in p.coeffs)


def val(p: Poly, M: BoundStack) -> int:
    total = p.const
    for v, a in p.coeffs.items():
        if not M.is_fixed(v):
            raise ValueError(f"val: variable {v} is not fixed")
        total += a * M._lo[v]
    return total


def bound_ineq(J: Inequality, x: Variable, M: BoundStack) -> BoundValue:
    """Bound on x implied by J = a*x + p <= 0: an upper bound when a > 0,
    a lower bound when a < 0."""
    a = J.poly.coeffs.get(x, 0)
    if a == 0:
        raise ValueError(f"{x} does not occur in {J}")
    lp = _lower_without(J.poly, x, M)
    if a > 0:
        return POS_INF if lp == NEG_INF else -ceil_div(lp, a)
    return NEG_INF if lp == NEG_INF else -floor_div(lp, a)


def _split_div(D: Divisibility, x: Variable, M: BoundStack):
    a = D.poly.coeffs.get(x, 0)
    if a <= 0:
        raise ValueError(f"bound_div needs a positive coefficient on {x} in {D}")
    rest = D.poly.without(x)
    return a, val(rest, M)


def bound_div(D: Divisibility, x: Variable, M: BoundStack, direction: str = LOWER) -> int:
    """Next value of x, from its current lower (or upper) bound onward, at
    which d | a*x + k can hold, where k is the fixed value of the rest."""
    a, k = _split_div(D, x, M)
    d = D.modulus
    if direction == LOWER:
        b = M.lower(x)
        if b == NEG_INF:
            raise ValueError(f"bound_div: {x} has no lower bound")
        return ceil_div(d * ceil_div(a * b + k, d) - k, a)
    b = M.upper(x)
    if b == POS_INF:
        raise ValueError(f"bound_div: {x} has no upper bound")
    return floor_div(d * floor_div(a * b + k, d) - k, a)


def improves(J: Inequality, x: Variable, M: BoundStack) -> bool:
    b = bound_ineq(J, x, M)
    if b == NEG_INF or b == POS_INF:
        return False
    if J.poly.coeffs[x] < 0:
        return M.lower(x) < b <= M.upper(x)
    return M.lower(x) <= b < M.upper(x)


def first_improved(J: Inequality, M: BoundStack):
    """First variable of J (in coefficient order) on which `improves` holds,
    or None. One pass over J instead of one per variable."""
    lo, hi = M._lo, M._hi
    total = J.poly.const
    infinite = 0
    missing = None
    parts = []
    for v, a in J.poly.coeffs.items():
        b = lo.get(v) if a > 0 else hi.get(v)
        if b is None:
            infinite += 1
            missing = v
            parts.append((v, a, None))
            if infinite > 1:
                return None
        else:
            total += a * b
            parts.append((v, a, a * b))
    for v, a, contrib in parts:
        if infinite:
            if v != missing:
                continue
            rest = total
        else:
            rest = total - contrib
        vlo, vhi = lo.get(v, NEG_INF), hi.get(v, POS_INF)
        if a > 0:
            b = -ceil_div(rest, a)
            if vlo <= b < vhi:
                return v
        else:
            b = -floor_div(rest, a)
            if vlo < b <= vhi:
                return v
    return None


def div_has_solution(d: int, a: int, k: int, lo: int, hi: int) -> bool:
    """Is there e in [lo, hi] with d | a*e + k? Only one residue period is scanned."""
    if lo > hi:
        return False
    period = d // gcd(a, d)
    top = min(hi, lo + period - 1)
    for e in range(lo, top + 1):
        if (a * e + k) % d == 0:
            return True
    return False


def div_conflict_var(D: Divisibility, M: BoundStack):
    """The variable whose interval witnesses that D is a conflict, or None.

    D is a conflict when all but one variable x is fixed, x has finite
    bounds, and no value of x in them satisfies D. When everything is fixed
    the latest-fixed variable is reported.
    """
    unfixed = [v for v in D.poly.coeffs if not M.is_fixed(v)]
    if len(unfixed) > 1:
        return None
    if D.is_constant():
        return None
    if unfixed:
        x = unfixed[0]
    else:
        x = _latest_fixed(D, M)
    lo, hi = M.lower(x), M.upper(x)
    if lo == NEG_INF or hi == POS_INF:
        return None
    a = D.poly.coeffs[x]
    k = val(D.poly.without(x), M)
    if div_has_solution(D.modulus, a, k, lo, hi):
        return None
    return x


def _latest_fixed(D: Divisibility, M: BoundStack):
    """Variable of D whose last bound entry is the newest one on M."""
    want = set(D.poly.coeffs)
    for b in reversed(M.entries):
        if b.var in want:
            return b.var
    return next(iter(D.poly.coeffs))


def is_conflict(c: Constraint, M: BoundStack) -> bool:
    if isinstance(c, Inequality):
        return lower(c.poly, M) > 0
    if c.is_constant():
        return c.poly.const % c.modulus != 0
    return div_conflict_var(c, M) is not None
