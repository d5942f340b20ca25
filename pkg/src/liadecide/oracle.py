"""Independent deciders used to cross-check the engine.

* `enumerate_box` tries every point of a finite box (vectorised with numpy).
* `box_search` is a small depth-first search with interval pruning; it is
  exact on a finite box and much faster than plain enumeration.
* `qe_decide` eliminates unguarded variables by weak Cooper elimination
  until only bounded variables remain, decides the rest by `box_search`
  and reconstructs values of the eliminated variables one by one.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .arith import ceil_div, floor_div, gcd, lcm
from .config import SolverConfig
from .cooper import weak_cooper_eliminate
from .engine import solve
from .errors import BudgetError, InternalError
from .model import (
    Constraint,
    Divisibility,
    Inequality,
    Poly,
    Problem,
    Sat,
    StepLimit,
    Unsat,
    Variable,
    VarKind,
    default_order,
    guard_box,
    guarded_variables,
)

DEFAULT_CAP = 10**7
UNGUARDED_SPAN = 64


class NoSolutionInBox:
    verdict = "unsat"

    def __repr__(self):
        return "NoSolutionInBox()"

    def __eq__(self, other):
        return isinstance(other, NoSolutionInBox)

    def __hash__(self):
        return hash("NoSolutionInBox")


@dataclass
class Box:
    bounds: dict  # Variable -> (lo, hi)

    def __post_init__(self):
        for v, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise ValueError(f"empty interval for {v}: [{lo}, {hi}]")

    def size(self) -> int:
        n = 1
        for lo, hi in self.bounds.values():
            n *= hi - lo + 1
        return n

    def __contains__(self, v):
        return v in self.bounds


# ---------------------------------------------------------------------------
# plain enumeration


def _ordered_vars(problem: Problem, box: Box) -> list:
    if problem.order is not None and all(v in problem.order for v in box.bounds):
        return sorted(box.bounds, key=problem.order.key)
    return sorted(box.bounds, key=lambda v: v.name)


_CHUNK = 1 << 20


def enumerate_box(problem: Iterable[Constraint], box: Box, cap: int = DEFAULT_CAP):
    """Lexicographically first point of the box satisfying every constraint
    (variables in increasing order, values ascending), or NoSolutionInBox."""
    if not isinstance(problem, Problem):
        problem = Problem(problem)
    for c in problem:
        for v in c.variables:
            if v not in box:
                raise ValueError(f"variable {v} has no interval in the box")
    if box.size() > cap:
        raise BudgetError(f"box has {box.size()} points, cap is {cap}")
    vs = _ordered_vars(problem, box)
    constraints = list(problem)
    for c in constraints:
        if c.is_constant() and not c.holds({}):
            return NoSolutionInBox()
    magnitude = max((max(abs(lo), abs(hi)) for lo, hi in box.bounds.values()), default=0)
    wide = any(
        sum(abs(a) for a in c.poly.coeffs.values()) * magnitude + abs(c.poly.const) >= 2**62
        or c.modulus >= 2**62
        for c in constraints
    )
    found = _enum_rec(constraints, vs, box, {}, 0, wide)
    if found is None:
        return NoSolutionInBox()
    return Sat(found)


def _enum_rec(constraints, vs, box, fixed, i, wide):
    rest = vs[i:]
    size = 1
    for v in rest:
        lo, hi = box.bounds[v]
        size *= hi - lo + 1
    if size <= _CHUNK or i == len(vs):
        return _enum_block(constraints, rest, box, fixed, wide)
    v = vs[i]
    lo, hi = box.bounds[v]
    for value in range(lo, hi + 1):
        fixed[v] = value
        hit = _enum_block_or_rec(constraints, vs, box, fixed, i + 1, wide)
        if hit is not None:
            return hit
    del fixed[v]
    return None


def _enum_block_or_rec(constraints, vs, box, fixed, i, wide):
    return _enum_rec(constraints, vs, box, fixed, i, wide)


def _enum_block(constraints, rest, box, fixed, wide):
    dtype = object if wide else np.int64
    n = len(rest)
    axes = {}
    for j, v in enumerate(rest):
        lo, hi = box.bounds[v]
        shape = [1] * n
        shape[j] = hi - lo + 1
        axes[v] = np.arange(lo, hi + 1, dtype=np.int64).astype(dtype).reshape(shape)
    full = tuple(box.bounds[v][1] - box.bounds[v][0] + 1 for v in rest)
    mask = np.ones(full, dtype=bool)
    for c in constraints:
        total = np.zeros((1,) * n, dtype=dtype) + c.poly.const
        for v, a in c.poly.coeffs.items():
            if v in fixed:
                total = total + a * fixed[v]
            else:
                total = total + a * axes[v]
        if isinstance(c, Divisibility):
            ok = (total % c.modulus) == 0
        else:
            ok = total <= 0
        mask &= np.broadcast_to(np.asarray(ok, dtype=bool), full)
        if not mask.any():
            return None
    flat = int(np.argmax(mask.reshape(-1)))
    idx = np.unravel_index(flat, full) if n else ()
    out = dict(fixed)
    for j, v in enumerate(rest):
        out[v] = box.bounds[v][0] + int(idx[j])
    return out


# ---------------------------------------------------------------------------
# depth-first search with interval pruning


def _tighten_domains(constraints, dom) -> bool:
    """Shrink domains with inequality reasoning; False if one empties."""
    for _ in range(50):
        changed = False
        for c in constraints:
            if isinstance(c, Divisibility):
                free = [v for v in c.poly.coeffs if dom[v][0] != dom[v][1]]
                if not free:
                    total = c.poly.const + sum(a * dom[v][0] for v, a in c.poly.coeffs.items())
                    if total % c.modulus:
                        return False
                elif len(free) == 1:
                    x = free[0]
                    a = c.poly.coeffs[x]
                    k = c.poly.const + sum(a2 * dom[v][0] for v, a2 in c.poly.coeffs.items() if v != x)
                    lo, hi = dom[x]
                    period = c.modulus // gcd(a, c.modulus)
                    new_lo = next((e for e in range(lo, min(hi, lo + period - 1) + 1) if (a * e + k) % c.modulus == 0), None)
                    if new_lo is None:
                        return False
                    new_hi = next(e for e in range(hi, max(lo, hi - period + 1) - 1, -1) if (a * e + k) % c.modulus == 0)
                    if (new_lo, new_hi) != (lo, hi):
                        dom[x] = (new_lo, new_hi)
                        changed = True
                continue
            mins = {}
            total = c.poly.const
            for v, a in c.poly.coeffs.items():
                lo, hi = dom[v]
                m = a * lo if a > 0 else a * hi
                mins[v] = m
                total += m
            if total > 0:
                return False
            for v, a in c.poly.coeffs.items():
                slack = -(total - mins[v])  # a*v <= slack
                lo, hi = dom[v]
                if a > 0:
                    nh = floor_div(slack, a)
                    if nh < hi:
                        if nh < lo:
                            return False
                        dom[v] = (lo, nh)
                        changed = True
                else:
                    nl = ceil_div(slack, a)
                    if nl > lo:
                        if nl > hi:
                            return False
                        dom[v] = (nl, hi)
                        changed = True
        if not changed:
            return True
    return True


def box_search(problem: Iterable[Constraint], box: Box, node_cap: int = DEFAULT_CAP):
    """Exact decision over a finite box; returns Sat(point) or NoSolutionInBox."""
    constraints = [c for c in problem]
    for c in constraints:
        if c.is_constant() and not c.holds({}):
            return NoSolutionInBox()
        for v in c.variables:
            if v not in box:
                raise ValueError(f"variable {v} has no interval in the box")
    dom = dict(box.bounds)
    nodes = [0]

    def rec(dom):
        nodes[0] += 1
        if nodes[0] > node_cap:
            raise BudgetError("box_search node budget exceeded")
        if not _tighten_domains(constraints, dom):
            return None
        free = [v for v, (lo, hi) in dom.items() if lo != hi]
        if not free:
            point = {v: lo for v, (lo, hi) in dom.items()}
            return point if all(c.holds(point) for c in constraints) else None
        v = min(free, key=lambda u: (dom[u][1] - dom[u][0], u.name))
        lo, hi = dom[v]
        if hi - lo <= 16:
            for value in range(lo, hi + 1):
                sub = dict(dom)
                sub[v] = (value, value)
                hit = rec(sub)
                if hit is not None:
                    return hit
            return None
        mid = (lo + hi) // 2
        for part in ((lo, mid), (mid + 1, hi)):
            sub = dict(dom)
            sub[v] = part
            hit = rec(sub)
            if hit is not None:
                return hit
        return None

    hit = rec(dom)
    return NoSolutionInBox() if hit is None else Sat(hit)


# ---------------------------------------------------------------------------
# elimination-based decision


def _solve_for(x: Variable, constraints: list, values: Mapping[Variable, int]) -> Optional[int]:
    """Some value of x satisfying all constraints once `values` are plugged in."""
    lo, hi = -math.inf, math.inf
    period = 1
    divs = []
    for c in constraints:
        p = c.poly.substitute({v: values[v] for v in c.poly.coeffs if v != x})
        a = p.coeffs.get(x, 0)
        if set(p.coeffs) - {x}:
            raise InternalError(f"{c} still has free variables besides {x}")
        if a == 0:
            if not (p.const <= 0 if isinstance(c, Inequality) else p.const % c.modulus == 0):
                return None
            continue
        if isinstance(c, Divisibility):
            divs.append((c.modulus, a, p.const))
            period = lcm(period, c.modulus // gcd(a, c.modulus))
        elif a > 0:
            hi = min(hi, floor_div(-p.const, a))
        else:
            lo = max(lo, ceil_div(-p.const, a))
    if lo > hi:
        return None
    if lo == -math.inf and hi == math.inf:
        start = 0
    elif lo == -math.inf:
        start = hi - period + 1
    else:
        start = lo
    stop = start + period - 1
    if hi != math.inf:
        stop = min(stop, hi)
    for e in range(start, stop + 1):
        if all((a * e + k) % d == 0 for d, a, k in divs):
            return e
    return None


def _fresh_counter(problem: Problem):
    taken = {v.name for v in problem.variables()}
    n = [0]

    def make():
        while True:
            n[0] += 1
            name = f"_q{n[0]}"
            if name not in taken:
                taken.add(name)
                return Variable(name, VarKind.FRESH)

    return make


def qe_decide(problem: Problem, node_cap: int = DEFAULT_CAP):
    """Decide by eliminating the largest unguarded variable until none is left."""
    if problem.order is None:
        problem = Problem(problem, default_order(problem))
    original = problem.variables()
    fresh = _fresh_counter(problem)
    current = problem
    history = []
    while True:
        guarded = guarded_variables(current)
        free = [v for v in current.variables() if v not in guarded]
        if not free:
            break
        x = max(free, key=current.order.key)
        history.append((x, [c for c in current if c.coeff(x) != 0]))
        current = weak_cooper_eliminate(x, current, fresh)
    box = guard_box(current)
    for v, (lo, hi) in box.items():
        if lo > hi:
            return Unsat()
    if any(c.is_constant() and not c.holds({}) for c in current):
        return Unsat()
    res = box_search(current, Box(box), node_cap)
    if isinstance(res, NoSolutionInBox):
        return Unsat()
    values = dict(res.assignment)
    # variables that dropped out of every constraint are unconstrained
    eliminated = {x for x, _ in history}
    for v in original:
        if v not in values and v not in eliminated:
            values[v] = 0
    for x, on_x in reversed(history):
        e = _solve_for(x, on_x, values)
        if e is None:
            raise InternalError(f"back-substitution failed for {x}")
        values[x] = e
    model = {v: values[v] for v in original}
    for c in problem:
        if not c.holds(model):
            raise InternalError(f"reconstructed model violates {c}")
    return Sat(model)


# ---------------------------------------------------------------------------
# differential runner


def default_box(problem: Problem, span: int = UNGUARDED_SPAN) -> tuple[Box, bool]:
    """Guard intervals for guarded variables, [-span, span] for the rest.
    The flag says whether the box covers the full solution space."""
    gb = guard_box(problem)
    bounds = {}
    complete = True
    for v in problem.variables():
        if v in gb:
            lo, hi = gb[v]
            if lo > hi:
                return Box({}), True
            bounds[v] = gb[v]
        else:
            bounds[v] = (-span, span)
            complete = False
    return Box(bounds), complete


@dataclass
class Agreement:
    engine: str
    qe: str
    enumeration: str
    notes: list = field(default_factory=list)

    @property
    def agree(self) -> bool:
        decisive = [v for v in (self.engine, self.qe, self.enumeration) if v in ("sat", "unsat")]
        return len(set(decisive)) <= 1


def _verdict(result) -> str:
    if isinstance(result, Sat):
        return "sat"
    if isinstance(result, (Unsat, NoSolutionInBox)):
        return "unsat"
    if isinstance(result, StepLimit):
        return "unknown"
    return "skipped"


def reference_verdict(problem: Problem, node_cap: int = DEFAULT_CAP) -> str:
    """"sat" or "unsat" without the engine: enumeration when every variable
    is guarded, elimination otherwise."""
    box, complete = default_box(problem)
    if complete:
        if not box.bounds and problem.variables():
            return "unsat"
        return _verdict(box_search(problem, box, node_cap))
    return _verdict(qe_decide(problem, node_cap))


def differential(problem: Problem, config: Optional[SolverConfig] = None,
                 run_qe: bool = True, run_enum: bool = True) -> Agreement:
    notes = []
    eng = solve(problem, config or SolverConfig(max_steps=10**6))
    if isinstance(eng, Sat) and not problem.holds(eng.assignment):
        notes.append("engine model fails")
    qe_v = "skipped"
    if run_qe:
        try:
            qe_v = _verdict(qe_decide(problem))
        except BudgetError:
            qe_v = "budget"
    enum_v = "skipped"
    if run_enum:
        box, complete = default_box(problem)
        if any(c.is_constant() and not c.holds({}) for c in problem) and not box.bounds:
            enum_v = "unsat"
        elif not box.bounds and problem.variables():
            enum_v = "unsat"  # an empty guard interval
        else:
            try:
                res = enumerate_box(problem, box)
                enum_v = _verdict(res)
                if enum_v == "unsat" and not complete:
                    enum_v = "inconclusive"
            except BudgetError:
                enum_v = "budget"
    return Agreement(_verdict(eng), qe_v, enum_v, notes)


# ---------------------------------------------------------------------------
# seeded random instances


def random_problem(rng: random.Random, n_vars: int = 3, n_constraints: int = 4, max_coeff: int = 5,
                   guarded: Optional[int] = None, guard_span: tuple = (-10, 10),
                   div_prob: float = 0.3, unit_prob: float = 0.15, max_terms: int = 3,
                   max_modulus: int = 6, const_span: int = 10) -> Problem:
    """Random conjunction over x0..x{n-1}.

    The first `guarded` variables get both unit guards inside `guard_span`;
    these 2*guarded guards come on top of the `n_constraints` others, which
    are one-sided unit bounds, divisibility constraints or inequalities.
    """
    vs = [Variable(f"x{i}") for i in range(n_vars)]
    if guarded is None:
        guarded = rng.randint(0, n_vars)
    cs: list[Constraint] = []
    g_lo, g_hi = guard_span
    for v in vs[:guarded]:
        lo = rng.randint(g_lo, g_hi)
        hi = rng.randint(lo, g_hi)
        cs.append(Inequality(Poly({v: -1}, lo)))
        cs.append(Inequality(Poly({v: 1}, -hi)))

    def coeff():
        c = 0
        while c == 0:
            c = rng.randint(-max_coeff, max_coeff)
        return c

    for _ in range(n_constraints):
        roll = rng.random()
        if roll < unit_prob:
            v = rng.choice(vs)
            cs.append(Inequality(Poly({v: rng.choice((-1, 1))}, rng.randint(-const_span, const_span))))
            continue
        k = rng.randint(1, min(max_terms, n_vars))
        poly = Poly({v: coeff() for v in rng.sample(vs, k)}, rng.randint(-const_span, const_span))
        if roll < unit_prob + div_prob:
            cs.append(Divisibility(rng.randint(2, max_modulus), poly))
        else:
            cs.append(Inequality(poly))
    return Problem(cs, default_order(cs))
