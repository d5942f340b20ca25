"""Justifications for propagated bounds.

A propagated bound x >= b (or x <= b) has to be justified by an inequality
with coefficient -1 (or +1) on x that is implied by the constraints and
implies a bound at least as strong as b. `tight` derives one from an
arbitrary inequality by walking the bound stack downward and rewriting the
part of the inequality that is not yet divisible by the pivot coefficient.
"""

from __future__ import annotations

from typing import Iterable, Optional

from .arith import ceil_div, floor_div
from .bounds import LOWER
from .errors import InternalError
from .model import (
    Bound,
    BoundStack,
    Divisibility,
    Inequality,
    Poly,
    Variable,
    VarKind,
)


def resolve(gamma: Bound, J: Inequality) -> Inequality:
    """Eliminate gamma's variable from J using gamma's justification, when
    the two have opposite signs on it; otherwise return J unchanged."""
    if gamma.decided:
        raise ValueError(f"cannot resolve with decided bound {gamma}")
    return Inequality(_resolve_poly(gamma, J.poly))


def _resolve_poly(gamma: Bound, p: Poly) -> Poly:
    y = gamma.var
    a = p.coeffs.get(y, 0)
    just = gamma.justification.poly
    c = just.coeffs[y]
    if a * c >= 0:
        return p
    # |c| = 1 by the justification shape
    return p.without(y) + just.without(y).scale(abs(a))


class _Derivation:
    """Working state <prefix | left (+) right> of a tightening run."""

    def __init__(self, x: Variable, pivot: int, right: Poly, M: BoundStack, frozen: Iterable[Variable]):
        self.x = x
        self.a = abs(pivot)
        self.left: dict[Variable, int] = {x: pivot}
        self.right = right
        self.M = M
        self.pos = len(M)
        self.frozen = set(frozen) | {x}
        self.steps: list[str] = []

    def consume(self, order_key) -> bool:
        cands = [
            y for y, c in self.right.coeffs.items()
            if y not in self.frozen and c % self.a == 0
        ]
        if not cands:
            return False
        y = max(cands, key=order_key)
        c = self.right.coeffs[y]
        self.left[y] = self.left.get(y, 0) + c
        self.right = self.right.without(y)
        self.steps.append("Consume")
        return True

    def pop_entry(self) -> None:
        self.pos -= 1
        gamma = self.M[self.pos]
        y = gamma.var
        c = self.right.coeffs.get(y, 0)
        if c == 0:
            return
        if y == self.x:
            if gamma.decided:
                raise InternalError(f"tight: pivot {y} has a decided bound in the prefix")
            self.right = _resolve_poly(gamma, self.right)
            self.steps.append("Resolve-Implied")
            return
        if not gamma.decided:
            self.right = _resolve_poly(gamma, self.right)
            self.steps.append("Resolve-Implied")
            return
        # decided bound: use the propagated bound on the other side of y
        # that the decision copied its value from
        j = self.M.latest(y, not gamma.is_lower, before=self.pos)
        if j is None or self.M[j].decided:
            raise InternalError(f"tight: decided {gamma} has no propagated counterpart")
        just = self.M[j].justification.poly
        q = just.without(y)
        rest = self.right.without(y)
        a = self.a
        if gamma.is_lower:
            # decided y >= b, justification y + q <= 0
            if c < 0:
                self.right = rest + q.scale(-c)
                self.steps.append("Decide-Lower-Neg")
            else:
                k = ceil_div(c, a)
                self._add_left(y, a * k)
                self.right = rest + q.scale(a * k - c)
                self.steps.append("Decide-Lower")
        else:
            # decided y <= b, justification -y + q <= 0
            if c > 0:
                self.right = rest + q.scale(c)
                self.steps.append("Decide-Upper-Pos")
            else:
                k = floor_div(c, a)
                self._add_left(y, a * k)
                self.right = rest + q.scale(c - a * k)
                self.steps.append("Decide-Upper")

    def _add_left(self, y: Variable, c: int) -> None:
        n = self.left.get(y, 0) + c
        if n:
            self.left[y] = n
        else:
            self.left.pop(y, None)

    def run(self, order_key) -> Inequality:
        while True:
            while self.consume(order_key):
                pass
            if self.right.is_constant():
                break
            if self.pos == 0:
                raise InternalError(
                    f"tight: bound stack exhausted with non-constant right side {self.right}"
                )
            self.pop_entry()
        a = self.a
        coeffs = {}
        for y, c in self.left.items():
            if c % a:
                raise InternalError("tight: left side lost divisibility by the pivot")
            coeffs[y] = c // a
        self.steps.append("Round")
        return Inequality(Poly(coeffs, ceil_div(self.right.const, a)))


def _default_key(v: Variable):
    return v.name


def tight(J: Inequality, x: Variable, M: BoundStack, order_key=None, trace: Optional[list] = None) -> Inequality:
    """Tightly propagating justification for the bound bound_ineq(J, x, M)."""
    a = J.poly.coeffs.get(x, 0)
    if a == 0:
        raise ValueError(f"{x} does not occur in {J}")
    run = _Derivation(x, a, J.poly.without(x), M, ())
    out = run.run(order_key or _default_key)
    if trace is not None:
        trace.extend(run.steps)
    return out


_FRESH_Z = Variable("__z", VarKind.FRESH)


def _check_div(D: Divisibility, x: Variable) -> int:
    a = D.poly.coeffs.get(x, 0)
    if a <= 0:
        raise ValueError(f"need a positive coefficient on {x} in {D}")
    return a


def div_part(D: Divisibility, x: Variable, M: BoundStack, direction: str = LOWER, order_key=None) -> Inequality:
    """Bound on the quotient z of d*z = a*x + p, as -z + r <= 0 (lower) or
    z + r <= 0 (upper); x and z are never moved to the left side."""
    _check_div(D, x)
    z = _FRESH_Z
    d = D.modulus
    pivot = -d if direction == LOWER else d
    right = D.poly if direction == LOWER else -D.poly
    run = _Derivation(z, pivot, right, M, (x,))
    out = run.run(order_key or _default_key)
    if x in out.poly.coeffs:
        raise InternalError(f"div_part: {x} survived in {out}")
    return out


def div_derive(D: Divisibility, x: Variable, M: BoundStack, direction: str = LOWER, order_key=None) -> Inequality:
    """Justification for the bound bound_div(D, x, M, direction)."""
    a = _check_div(D, x)
    z = _FRESH_Z
    part = div_part(D, x, M, direction, order_key)
    r = part.poly.without(z)
    d = D.modulus
    p = D.poly.without(x)
    ax = Poly({x: a})
    if direction == LOWER:
        combined = -ax + r.scale(d) - p
    else:
        combined = ax + r.scale(d) + p
    return tight(Inequality(combined), x, M, order_key)


def justification_holds(just: Inequality, b: Bound) -> bool:
    """Shape check: coefficient -1 for lower bounds, +1 for upper bounds."""
    return just.poly.coeffs.get(b.var) == (-1 if b.is_lower else 1)

