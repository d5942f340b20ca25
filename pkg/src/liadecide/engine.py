"""The transition system and its rule-selection strategy.

Guarded variables (both unit guards present in the input) are handled by a
conflict-driven search: propagate, decide, analyse conflicts, learn and
backjump. Unguarded variables are handled one at a time in increasing order;
when the constraints whose top variable is x admit no value for x, a
conflicting core is turned into a strong resolvent over smaller variables and
the search backs up to where those variables were decided.
"""

from __future__ import annotations

import bisect
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .arith import gcd_all
from .bounds import (
    LOWER,
    NEG_INF,
    POS_INF,
    UPPER,
    first_improved,
    bound_div,
    bound_ineq,
    div_conflict_var,
    improves,
    is_conflict,
    lower,
    val,
)
from .config import SolverConfig
from .cooper import ConflictingCore, classify_core, cooper, divsolve
from .errors import FrozenStateError, InternalError, InvariantViolation
from .model import (
    Bound,
    BoundStack,
    Conflict,
    Constraint,
    Divisibility,
    Inequality,
    Poly,
    Problem,
    Sat,
    Search,
    StepLimit,
    Unsat,
    Variable,
    VariableOrder,
    VarKind,
    default_order,
    guarded_variables,
    normalize,
    reduce_residues,
    render_constraint,
    unit_guard,
)
from .tighten import div_derive, resolve, tight


class Rule(Enum):
    PROPAGATE = "Propagate"
    PROPAGATE_DIV = "Propagate-Div"
    DECIDE = "Decide"
    CONFLICT = "Conflict"
    CONFLICT_DIV = "Conflict-Div"
    SAT = "Sat"
    UNSAT_DIV = "Unsat-Div"
    FORGET = "Forget"
    SLACK_INTRO = "Slack-Intro"
    RESOLVE = "Resolve"
    SKIP_DECISION = "Skip-Decision"
    BACKJUMP = "Backjump"
    UNSAT = "Unsat"
    LEARN = "Learn"
    RESOLVE_COOPER = "Resolve-Cooper"
    SOLVE_DIV_LEFT = "Solve-Div-Left"
    SOLVE_DIV_RIGHT = "Solve-Div-Right"


@dataclass(frozen=True)
class TraceEvent:
    step: int
    rule: Rule
    var: Optional[str] = None
    detail: dict = field(default_factory=dict)

    def record(self) -> dict:
        """Flat JSON-ready form: step, rule, var (or None) and detail."""
        return {"step": self.step, "rule": self.rule.value, "var": self.var, "detail": dict(self.detail)}


@dataclass
class Stats:
    rules: Counter = field(default_factory=Counter)
    steps: int = 0
    peak_depth: int = 0
    fresh_vars: int = 0

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "peak_depth": self.peak_depth,
            "fresh_vars": self.fresh_vars,
            "rules": {r.value: n for r, n in sorted(self.rules.items(), key=lambda t: t[0].value)},
        }


_SEARCH, _CONFLICT, _DONE = "search", "conflict", "done"


class Solver:
    """Mutable solver instance; call `step()` repeatedly or `run()`."""

    def __init__(self, problem: Problem, max_steps: int = 0, debug: bool = False,
                 sink: Optional[Callable[[TraceEvent], None]] = None):
        constraints = list(problem)
        order = problem.order.copy() if problem.order is not None else default_order(constraints)
        self.order: VariableOrder = order
        self.original = constraints
        self.original_vars = problem.variables()
        self.max_steps = max_steps
        self.debug = debug
        self.sink = sink
        self.stats = Stats()

        self.M = BoundStack()
        self.C = Problem(order=order)
        self.mode = _SEARCH
        self.conflict: Optional[Inequality] = None
        self.result = None

        self.guarded: set[Variable] = guarded_variables(constraints)
        self.vars: set[Variable] = set()
        self.by_top: dict[Variable, list[Constraint]] = {}
        self.guarded_cs: list[Constraint] = []
        self.units: list[Inequality] = []
        self.unguarded_sorted: list[Variable] = []
        self.pending_unsat: Optional[Divisibility] = None

        self.slack: Optional[Variable] = None
        self.slacked: set[Variable] = set()
        self.resolvents: dict = {}           # core signature -> set of constraints
        self.resolvent_members: set = set()
        self.learned: set = set()
        self._names = {v.name for v in problem.variables()}
        self._fresh_count = 0

        for v in problem.variables():
            if v not in order:
                raise ValueError(f"variable {v} missing from the order")
        for v in order.ascending():
            if v in problem.variables():
                self._register_var(v)
        for c in constraints:
            self._add(c)

    # ------------------------------------------------------------------
    # constraint bookkeeping

    def _register_var(self, v: Variable) -> None:
        if v in self.vars:
            return
        self.vars.add(v)
        if v not in self.guarded:
            keys = [self.order.rank[u] for u in self.unguarded_sorted]
            i = bisect.bisect(keys, self.order.rank[v])
            self.unguarded_sorted.insert(i, v)

    def _is_guarded_constraint(self, c: Constraint) -> bool:
        return all(v in self.guarded for v in c.variables)

    def _add(self, c: Constraint) -> Optional[Constraint]:
        """Add c to C; returns the stored (normalized) constraint or None if
        it was already present or trivially true."""
        c = self._canonical(c)
        if c.is_trivially_true() or c in self.C:
            return None
        for v in c.variables:
            self._register_var(v)
        self.C.add(c)
        if c.variables:
            top = self.order.top(c.variables)
            self.by_top.setdefault(top, []).append(c)
        if self._is_guarded_constraint(c):
            self.guarded_cs.append(c)
        g = unit_guard(c)
        if g is not None:
            self.units.append(c)
            v = g[0]
            if v not in self.guarded and v.kind is not VarKind.SLACK:
                # guardedness only ever grows through learned guarded
                # constraints, so an unguarded variable cannot gain guards
                if guarded_variables(self.C) & {v}:
                    raise InternalError(f"{v} became guarded mid-run")
        if isinstance(c, Divisibility) and self.pending_unsat is None:
            g2 = gcd_all([c.modulus, *c.poly.coeffs.values()])
            if c.poly.const % g2 != 0:
                self.pending_unsat = c
        return c

    def _canonical(self, c: Constraint) -> Constraint:
        return normalize(reduce_residues(c), self.order)

    def _remove(self, c: Constraint) -> None:
        self.C.remove(c)
        if c.variables:
            self.by_top[self.order.top(c.variables)].remove(c)
        if c in self.guarded_cs:
            self.guarded_cs.remove(c)

    def _fresh(self, stem: str, kind: VarKind) -> Variable:
        while True:
            self._fresh_count += 1
            name = f"_{stem}{self._fresh_count}" if kind is VarKind.FRESH else f"_{stem}"
            if name not in self._names:
                break
            if kind is VarKind.SLACK:
                stem += "_"
        self._names.add(name)
        return Variable(name, kind)

    # ------------------------------------------------------------------
    # public state views

    @property
    def state(self):
        if self.result is not None:
            return self.result
        if self.mode == _CONFLICT:
            return Conflict(tuple(self.M.entries), tuple(self.C), self.conflict)
        return Search(tuple(self.M.entries), tuple(self.C))

    def is_guarded_var(self, v: Variable) -> bool:
        return v in self.guarded

    def prefix(self, y: Optional[Variable]) -> int:
        """Length of the largest prefix of M whose decisions are all on
        variables strictly below y."""
        if y is None:
            ry = None
        else:
            ry = self.order.rank[y]
        for i, b in enumerate(self.M.entries):
            if b.decided and (ry is None or self.order.rank[b.var] >= ry):
                return i
        return len(self.M)

    # ------------------------------------------------------------------
    # driving

    def run(self):
        while self.result is None:
            if self.max_steps and self.stats.steps >= self.max_steps:
                return StepLimit(self.stats.steps)
            self.step()
        return self.result

    def step(self) -> TraceEvent:
        if self.result is not None:
            raise InternalError("step called on a final state")
        if self.pending_unsat is not None:
            c = self.pending_unsat
            self.result = Unsat()
            self.mode = _DONE
            ev = self._emit(Rule.UNSAT_DIV, None, constraint=self._r(c))
        elif self.mode == _CONFLICT:
            ev = self._conflict_step()
        else:
            ev = (
                self._try_sat()
                or self._guarded_conflict()
                or self._unit_propagate()
                or self._guarded_propagate()
                or self._guarded_decide()
                or self._unguarded_layer()
            )
            if ev is None:
                raise FrozenStateError("no rule applies")
        if self.debug and self.result is None:
            self.check_invariants()
        return ev

    def _r(self, c: Constraint) -> str:
        return render_constraint(c, self.order)

    def _emit(self, rule: Rule, var: Optional[Variable], **detail) -> TraceEvent:
        self.stats.steps += 1
        self.stats.rules[rule] += 1
        if len(self.M) > self.stats.peak_depth:
            self.stats.peak_depth = len(self.M)
        ev = TraceEvent(self.stats.steps, rule, var.name if var is not None else None, detail)
        if self.sink is not None:
            self.sink(ev)
        return ev

    def _push(self, rule: Rule, b: Bound) -> TraceEvent:
        self.M.push(b)
        detail = {"bound": str(b)}
        if b.justification is not None:
            detail["justification"] = self._r(b.justification)
        return self._emit(rule, b.var, **detail)

    # ------------------------------------------------------------------
    # Sat

    def _try_sat(self) -> Optional[TraceEvent]:
        lo = self.M._lo
        for v in self.vars:
            if v not in lo:
                return None
        assignment = dict(lo)
        for c in self.C:
            if not c.holds(assignment):
                return None
        model = {v: assignment[v] for v in self.original_vars}
        self.result = Sat(model)
        self.mode = _DONE
        return self._emit(Rule.SAT, None, model={v.name: n for v, n in sorted(model.items(), key=lambda t: t[0].name)})

    # ------------------------------------------------------------------
    # guarded layer

    def _guarded_conflict(self) -> Optional[TraceEvent]:
        M = self.M
        for c in self.guarded_cs:
            if isinstance(c, Inequality):
                if lower(c.poly, M) > 0:
                    self.mode = _CONFLICT
                    self.conflict = c
                    return self._emit(Rule.CONFLICT, None, constraint=self._r(c))
            else:
                x = div_conflict_var(c, M)
                if x is None:
                    continue
                D = c if c.coeff(x) > 0 else Divisibility(c.modulus, -c.poly)
                if M.lower(x) == NEG_INF:
                    raise InternalError(f"guarded {x} without lower bound")
                if bound_div(D, x, M, LOWER) <= M.upper(x):
                    # no value fits, but the rounded bound does not overshoot
                    # yet; Propagate-Div moves the lower bound first
                    continue
                I = div_derive(D, x, M, LOWER, self.order.rank.__getitem__)
                if self.debug and not is_conflict(I, M):
                    raise InvariantViolation(f"Conflict-Div produced non-conflict {I}")
                self.mode = _CONFLICT
                self.conflict = I
                return self._emit(Rule.CONFLICT_DIV, x, constraint=self._r(c), derived=self._r(I))
        return None

    def _propagate_ineq(self, rule: Rule, J: Inequality, x: Variable) -> TraceEvent:
        b = bound_ineq(J, x, self.M)
        just = tight(J, x, self.M, self.order.rank.__getitem__)
        return self._push(rule, Bound(x, J.coeff(x) < 0, b, just))

    def _unit_propagate(self) -> Optional[TraceEvent]:
        M = self.M
        for c in self.units:
            (x, a), = c.poly.coeffs.items()
            if improves(c, x, M):
                return self._push(Rule.PROPAGATE, Bound(x, a < 0, bound_ineq(c, x, M), c))
        return None

    def _propagate_div(self, D: Divisibility, x: Variable, direction: str) -> TraceEvent:
        b = bound_div(D, x, self.M, direction)
        just = div_derive(D, x, self.M, direction, self.order.rank.__getitem__)
        return self._push(Rule.PROPAGATE_DIV, Bound(x, direction == LOWER, b, just))

    def _div_step(self, D: Divisibility, x: Variable, allow_upper: bool) -> Optional[TraceEvent]:
        """Propagate-Div on x when it strictly improves a bound (and does not
        cross the opposite bound, which would be a conflict instead)."""
        M = self.M
        if D.coeff(x) < 0:
            D = Divisibility(D.modulus, -D.poly)
        a = D.coeff(x)
        k = val(D.poly.without(x), M)
        d = D.modulus
        lo, hi = M.lower(x), M.upper(x)
        if lo != NEG_INF:
            if (a * lo + k) % d != 0:
                b = bound_div(D, x, M, LOWER)
                if b <= hi:
                    return self._propagate_div(D, x, LOWER)
                return None
        if allow_upper and hi != POS_INF and (a * hi + k) % d != 0:
            b = bound_div(D, x, M, UPPER)
            if b >= lo:
                return self._propagate_div(D, x, UPPER)
        return None

    def _guarded_propagate(self) -> Optional[TraceEvent]:
        M = self.M
        for c in self.guarded_cs:
            if isinstance(c, Inequality):
                x = first_improved(c, M)
                if x is not None:
                    return self._propagate_ineq(Rule.PROPAGATE, c, x)
            else:
                unfixed = [v for v in c.poly.coeffs if not M.is_fixed(v)]
                if len(unfixed) == 1:
                    ev = self._div_step(c, unfixed[0], allow_upper=False)
                    if ev is not None:
                        return ev
        return None

    def _guarded_decide(self) -> Optional[TraceEvent]:
        M = self.M
        best = None
        for v in self.guarded:
            if v in self.vars and not M.is_fixed(v):
                if best is None or self.order.rank[v] < self.order.rank[best]:
                    best = v
        if best is None:
            return None
        lo = M.lower(best)
        if lo == NEG_INF or M.upper(best) == POS_INF:
            raise InternalError(f"guarded {best} lacks a bound when deciding")
        return self._push(Rule.DECIDE, Bound(best, False, lo))

    # ------------------------------------------------------------------
    # conflict analysis

    def _conflict_step(self) -> TraceEvent:
        I = self.conflict
        M = self.M
        if I.is_constant():
            if I.poly.const > 0:
                self.result = Unsat()
                self.mode = _DONE
                return self._emit(Rule.UNSAT, None, constraint=self._r(I))
            raise InternalError(f"conflict {I} is not a conflict")
        if not M.entries:
            raise InternalError(f"conflict {I} with an empty bound stack")
        gamma = M.entries[-1]
        if not gamma.decided:
            M.pop()
            self.conflict = resolve(gamma, I)
            return self._emit(Rule.RESOLVE, gamma.var, bound=str(gamma), constraint=self._r(self.conflict))
        M.pop()
        if lower(I.poly, M) > 0:
            return self._emit(Rule.SKIP_DECISION, gamma.var, bound=str(gamma))
        if I not in self.C:
            M.push(gamma)
            if not self._is_guarded_constraint(I):
                raise InvariantViolation(f"learning unguarded {I}")
            stored = self._add(I)
            if stored is not None:
                self.learned.add(stored)
            return self._emit(Rule.LEARN, None, constraint=self._r(I))
        # Backjump: M is now the prefix below the decision
        candidates = [gamma.var] + [v for v in I.poly.coeffs if v != gamma.var]
        for x in candidates:
            if I.coeff(x) != 0 and improves(I, x, M):
                b = bound_ineq(I, x, M)
                just = tight(I, x, M, self.order.rank.__getitem__)
                self.mode = _SEARCH
                self.conflict = None
                return self._push(Rule.BACKJUMP, Bound(x, I.coeff(x) < 0, b, just))
        raise FrozenStateError(f"no backjump target for {I} after popping {gamma}")

    # ------------------------------------------------------------------
    # unguarded layer

    def _unguarded_layer(self) -> Optional[TraceEvent]:
        M = self.M
        for y in self.unguarded_sorted:
            cs = self.by_top.get(y, ())
            divs = [c for c in cs if isinstance(c, Divisibility)]
            if len(divs) >= 2:
                return self._solve_div(y, divs[0], divs[1])
            core = classify_core(y, cs, M, self.order, self.C.index_of)
            if core is not None:
                return self._resolve_cooper(core)
            ev = self._unguarded_propagate(y, cs, divs)
            if ev is not None:
                return ev
            if not M.is_fixed(y):
                if not M.has_bound(y):
                    return self._slack_intro(y)
                return self._unguarded_decide(y, cs)
            for c in cs:
                if is_conflict(c, M):
                    raise FrozenStateError(f"conflict {c} at fixed {y} without a core")
        return None

    def _unguarded_propagate(self, y, cs, divs) -> Optional[TraceEvent]:
        M = self.M
        best = None  # (strength, index, J)
        for c in cs:
            if isinstance(c, Inequality) and improves(c, y, M):
                b = bound_ineq(c, y, M)
                strength = b if c.coeff(y) < 0 else -b
                cand = (strength, -self.C.index_of(c), c)
                if best is None or cand[:2] > best[:2]:
                    best = cand
        if best is not None:
            return self._propagate_ineq(Rule.PROPAGATE, best[2], y)
        if divs:
            return self._div_step(divs[0], y, allow_upper=True)
        return None

    def _unguarded_decide(self, y: Variable, cs) -> TraceEvent:
        M = self.M
        lo, hi = M.lower(y), M.upper(y)
        b = Bound(y, False, lo) if lo != NEG_INF else Bound(y, True, hi)
        M.push(b)
        bad = [c for c in cs if is_conflict(c, M)]
        M.pop()
        if bad:
            raise FrozenStateError(f"deciding {b} would falsify {bad[0]}")
        return self._push(Rule.DECIDE, b)

    def _slack_intro(self, y: Variable) -> TraceEvent:
        if y in self.slacked:
            raise InternalError(f"{y} is stuck twice")
        self.slacked.add(y)
        if self.slack is None:
            self.slack = self._fresh("s", VarKind.SLACK)
            self.order.add_slack(self.slack)
            self._register_var(self.slack)
        s = self.slack
        added = []
        for c in (
            Inequality(Poly({s: -1})),
            Inequality(Poly({y: 1, s: -1})),
            Inequality(Poly({y: -1, s: -1})),
        ):
            if self._add(c) is not None:
                added.append(self._r(c))
        return self._emit(Rule.SLACK_INTRO, y, added=added)

    def _solve_div(self, y: Variable, D1: Divisibility, D2: Divisibility) -> TraceEvent:
        new1, new2 = divsolve(y, D1, D2)
        self._remove(D1)
        self._remove(D2)
        n1 = self._canonical(new1)
        n2 = self._canonical(new2)
        self._add(n1)
        self._add(n2)
        for sig, members in self.resolvents.items():
            if D1 in members or D2 in members:
                members.discard(D1)
                members.discard(D2)
                members.update(c for c in (n1, n2) if not c.is_trivially_true())
        for c in (D1, D2):
            if c in self.resolvent_members:
                self.resolvent_members.discard(c)
                self.resolvent_members.update(n for n in (n1, n2) if not n.is_trivially_true())
        detail = {"removed": [self._r(D1), self._r(D2)], "added": [self._r(n1), self._r(n2)]}
        if not n2.is_trivially_true() and is_conflict(n2, self.M):
            top = self.order.top(n2.variables) if n2.variables else None
            self.M.truncate(self.prefix(top))
            return self._emit(Rule.SOLVE_DIV_RIGHT, y, **detail)
        return self._emit(Rule.SOLVE_DIV_LEFT, y, **detail)

    def _resolve_cooper(self, core: ConflictingCore) -> TraceEvent:
        sig = core.signature()
        if sig in self.resolvents:
            raise InvariantViolation(f"core at {core.var} selected twice")
        for c in self.C:
            if c.variables and self.order.less(self.order.top(c.variables), core.var) and is_conflict(c, self.M):
                raise InvariantViolation(f"Resolve-Cooper at {core.var} with smaller conflict {c}")
        k = None
        if core.kind != "diophantine":
            k = self._fresh("k", VarKind.FRESH)
            self.order.add_fresh(k)
            self.guarded.add(k)
            self._register_var(k)
            self.stats.fresh_vars += 1
        R = cooper(core, k)
        stored = set()
        added = []
        for c in R.constraints:
            n = self._canonical(c)
            if n.is_trivially_true():
                continue
            stored.add(n)
            if self._add(n) is not None:
                added.append(self._r(n))
        self.resolvents[sig] = stored
        self.resolvent_members.update(stored)
        # tops of the stored forms: residue reduction can lower a top
        canon = [self._canonical(c) for c in R.r_c]
        tops = [self.order.top(c.variables) for c in canon if c.variables and not c.is_trivially_true()]
        y = min(tops, key=self.order.rank.__getitem__) if tops else None
        self.M.truncate(self.prefix(y))
        return self._emit(
            Rule.RESOLVE_COOPER, core.var, core=core.kind,
            constraints=[self._r(c) for c in core.constraints], added=added,
        )

    # ------------------------------------------------------------------
    # Forget (never chosen by the strategy; available for callers)

    def forget(self, c: Constraint) -> TraceEvent:
        if self.mode != _SEARCH:
            raise ValueError("Forget applies to search states only")
        c = normalize(c, self.order)
        if isinstance(c, Divisibility) or c in self.resolvent_members:
            raise ValueError(f"{c} may not be forgotten")
        if not self._is_guarded_constraint(c):
            raise ValueError(f"{c} is not guarded")
        rest = [d for d in self.C if d != c]
        if not _implied_syntactically(c, rest):
            raise ValueError(f"{c} is not known to be implied by the rest")
        self._remove(c)
        if c in self.units:
            self.units.remove(c)
        self.learned.discard(c)
        return self._emit(Rule.FORGET, None, constraint=self._r(c))

    # ------------------------------------------------------------------
    # debug checks

    def check_invariants(self) -> None:
        M = self.M
        for v in self.vars:
            if M.lower(v) > M.upper(v):
                raise InvariantViolation(f"inconsistent bounds on {v}")
        for b in M.entries:
            if b.justification is not None:
                if b.justification.coeff(b.var) != (-1 if b.is_lower else 1):
                    raise InvariantViolation(f"bad justification shape for {b}")
                if b.var in self.guarded and not self._is_guarded_constraint(b.justification):
                    raise InvariantViolation(f"guarded {b.var} justified by unguarded {b.justification}")
        if self.mode == _CONFLICT and not is_conflict(self.conflict, M):
            raise InvariantViolation(f"conflict {self.conflict} is not a conflict")
        if not check_eager_top_level(self):
            raise InvariantViolation("state is not eager top-level propagated")


def _implied_syntactically(c: Constraint, rest) -> bool:
    """Cheap sufficient test for Forget: a constraint with the same
    variable part and a constant at least as large is already present."""
    for d in rest:
        if isinstance(d, Inequality) and d.poly.coeffs == c.poly.coeffs and d.poly.const >= c.poly.const:
            return True
    return False


def check_eager_top_level(solver: Solver) -> bool:
    """Every decided unguarded x: all other variables of constraints with
    top x were fixed when x was decided, and none of those constraints is a
    conflict now."""
    M = solver.M
    running = BoundStack()
    for b in M.entries:
        if b.decided and b.var not in solver.guarded:
            x = b.var
            for c in solver.by_top.get(x, ()):
                for v in c.variables:
                    if v != x and not running.is_fixed(v):
                        return False
                if is_conflict(c, M):
                    return False
        running.push(b)
    return True


def detect_stuck(solver: Solver) -> set:
    """Variables with no bound in M for which no inequality of C propagates."""
    M = solver.M
    out = set()
    for v in solver.vars:
        if M.has_bound(v):
            continue
        stuck = True
        for c in solver.C:
            if isinstance(c, Inequality) and c.coeff(v) != 0 and improves(c, v, M):
                stuck = False
                break
        if stuck:
            out.add(v)
    return out


def solve(problem: Problem, config: Optional[SolverConfig] = None,
          sink: Optional[Callable[[TraceEvent], None]] = None, stats_out: Optional[list] = None):
    """Decide problem; returns Sat(model), Unsat() or StepLimit(steps)."""
    config = config or SolverConfig()
    solver = Solver(problem, max_steps=config.max_steps, debug=config.debug, sink=sink)
    result = solver.run()
    if stats_out is not None:
        stats_out.append(solver.stats)
    if isinstance(result, Sat):
        for c in problem:
            if not c.holds(result.assignment):
                raise InternalError(f"model violates {c}")
    return result
