"""Variables, polynomials, constraints, bound stacks and problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import InvariantViolation

NEG_INF = -math.inf
POS_INF = math.inf


class VarKind(Enum):
    ORIGINAL = "original"
    SLACK = "slack"
    FRESH = "fresh"


class Variable:
    """A named integer unknown. Two variables are equal iff their names are."""

    __slots__ = ("name", "kind", "_hash")

    def __init__(self, name: str, kind: VarKind = VarKind.ORIGINAL):
        self.name = name
        self.kind = kind
        self._hash = hash(name)

    @property
    def id(self) -> str:
        return self.name

    def __eq__(self, other):
        return self is other or (isinstance(other, Variable) and other.name == self.name)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return self.name

    __str__ = __repr__


Assignment = dict  # Variable -> int


class Poly:
    """Linear polynomial sum(c_i * x_i) + const with no zero coefficients.

    Treated as immutable: every operation returns a new object.
    """

    __slots__ = ("coeffs", "const", "_hash")

    def __init__(self, coeffs: Optional[Mapping[Variable, int]] = None, const: int = 0):
        if coeffs:
            self.coeffs = {v: c for v, c in coeffs.items() if c != 0}
        else:
            self.coeffs = {}
        self.const = const
        self._hash = None

    @classmethod
    def _raw(cls, coeffs: dict, const: int) -> "Poly":
        # caller guarantees there are no zero coefficients
        p = cls.__new__(cls)
        p.coeffs = coeffs
        p.const = const
        p._hash = None
        return p

    @classmethod
    def of(cls, *terms, const: int = 0) -> "Poly":
        """Poly.of((3, x), (-1, y), const=2) -> 3x - y + 2"""
        acc: dict = {}
        for c, v in terms:
            acc[v] = acc.get(v, 0) + c
        return cls(acc, const)

    @classmethod
    def constant(cls, c: int) -> "Poly":
        return cls._raw({}, c)

    def coeff(self, v: Variable) -> int:
        return self.coeffs.get(v, 0)

    @property
    def variables(self):
        return self.coeffs.keys()

    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "Poly") -> "Poly":
        acc = dict(self.coeffs)
        for v, c in other.coeffs.items():
            n = acc.get(v, 0) + c
            if n:
                acc[v] = n
            else:
                acc.pop(v, None)
        return Poly._raw(acc, self.const + other.const)

    def __neg__(self) -> "Poly":
        return Poly._raw({v: -c for v, c in self.coeffs.items()}, -self.const)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def scale(self, k: int) -> "Poly":
        if k == 0:
            return Poly._raw({}, 0)
        return Poly._raw({v: k * c for v, c in self.coeffs.items()}, k * self.const)

    def without(self, v: Variable) -> "Poly":
        acc = dict(self.coeffs)
        acc.pop(v, None)
        return Poly._raw(acc, self.const)

    def add_const(self, k: int) -> "Poly":
        return Poly._raw(dict(self.coeffs), self.const + k)

    def substitute(self, values: Mapping[Variable, int]) -> "Poly":
        """Replace the variables found in `values` by their integer value."""
        acc = {}
        const = self.const
        for v, c in self.coeffs.items():
            if v in values:
                const += c * values[v]
            else:
                acc[v] = c
        return Poly._raw(acc, const)

    def eval(self, assignment: Mapping[Variable, int]) -> int:
        total = self.const
        for v, c in self.coeffs.items():
            try:
                total += c * assignment[v]
            except KeyError:
                raise ValueError(f"variable {v} is not assigned") from None
        return total

    def __eq__(self, other):
        return (
            isinstance(other, Poly)
            and self.const == other.const
            and self.coeffs == other.coeffs
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((frozenset(self.coeffs.items()), self.const))
        return self._hash

    def __repr__(self):
        return render_poly(self)


def eval_poly(p: Poly, assignment: Mapping[Variable, int]) -> int:
    return p.eval(assignment)


class Constraint:
    """Base for `Inequality` (poly <= 0) and `Divisibility` (d | poly)."""

    __slots__ = ("poly", "_hash")
    modulus = 0

    def holds(self, assignment: Mapping[Variable, int]) -> bool:
        raise NotImplementedError

    @property
    def variables(self):
        return self.poly.coeffs.keys()

    def coeff(self, v: Variable) -> int:
        return self.poly.coeffs.get(v, 0)

    def is_constant(self) -> bool:
        return not self.poly.coeffs


class Inequality(Constraint):
    __slots__ = ()

    def __init__(self, poly: Poly):
        self.poly = poly
        self._hash = None

    def holds(self, assignment):
        return self.poly.eval(assignment) <= 0

    def is_trivially_true(self) -> bool:
        return self.is_constant() and self.poly.const <= 0

    def __eq__(self, other):
        return isinstance(other, Inequality) and self.poly == other.poly

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(("ineq", self.poly))
        return self._hash

    def __repr__(self):
        return render_constraint(self)


class Divisibility(Constraint):
    __slots__ = ("modulus",)

    def __init__(self, modulus: int, poly: Poly):
        if modulus == 0:
            raise ValueError("divisibility modulus must be nonzero")
        self.modulus = modulus
        self.poly = poly
        self._hash = None

    def holds(self, assignment):
        return self.poly.eval(assignment) % self.modulus == 0

    def is_trivially_true(self) -> bool:
        if abs(self.modulus) == 1:
            return True
        return self.is_constant() and self.poly.const % self.modulus == 0

    def __eq__(self, other):
        return (
            isinstance(other, Divisibility)
            and self.modulus == other.modulus
            and self.poly == other.poly
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(("div", self.modulus, self.poly))
        return self._hash

    def __repr__(self):
        return render_constraint(self)


def ineq(*terms, const: int = 0) -> Inequality:
    """Shorthand: ineq((1, x), (-1, y), const=3) is x - y + 3 <= 0."""
    return Inequality(Poly.of(*terms, const=const))


def div(d: int, *terms, const: int = 0) -> Divisibility:
    return Divisibility(d, Poly.of(*terms, const=const))


# ---------------------------------------------------------------------------
# variable order


class VariableOrder:
    """Total order on variables; guarded ones rank below unguarded ones.

    Rank slot `len(guarded)` is reserved for the slack variable, which must
    sit directly below every unguarded variable. Fresh variables are
    prepended as the new global minimum.
    """

    def __init__(self, guarded: Iterable[Variable] = (), unguarded: Iterable[Variable] = ()):
        self.rank: dict[Variable, int] = {}
        guarded = list(guarded)
        for i, v in enumerate(guarded):
            self.rank[v] = i
        self.slack_rank = len(guarded)
        for i, v in enumerate(unguarded):
            self.rank[v] = self.slack_rank + 1 + i
        self._min = 0

    def copy(self) -> "VariableOrder":
        other = VariableOrder()
        other.rank = dict(self.rank)
        other.slack_rank = self.slack_rank
        other._min = self._min
        return other

    def __contains__(self, v):
        return v in self.rank

    def key(self, v: Variable) -> int:
        return self.rank[v]

    def less(self, a: Variable, b: Variable) -> bool:
        return self.rank[a] < self.rank[b]

    def add_fresh(self, v: Variable) -> None:
        self._min = min(self._min, min(self.rank.values(), default=0)) - 1
        self.rank[v] = self._min

    def add_slack(self, v: Variable) -> None:
        if any(r == self.slack_rank for r in self.rank.values()):
            raise ValueError("slack slot already taken")
        self.rank[v] = self.slack_rank

    def add_last(self, v: Variable) -> None:
        self.rank[v] = max(max(self.rank.values(), default=0), self.slack_rank) + 1

    def ascending(self) -> list[Variable]:
        return sorted(self.rank, key=self.rank.__getitem__)

    def top(self, variables: Iterable[Variable]) -> Variable:
        return max(variables, key=self.rank.__getitem__)

    def __repr__(self):
        return " < ".join(v.name for v in self.ascending())


def top_variable(c: Constraint, order: VariableOrder) -> Variable:
    if c.is_constant():
        raise ValueError(f"constant constraint {c} has no top variable")
    return order.top(c.variables)


def normalize(c: Constraint, order: Optional[VariableOrder] = None) -> Constraint:
    """Canonical form: positive modulus and, for divisibility, a positive
    coefficient on the top variable (d | p and d | -p are the same)."""
    if isinstance(c, Inequality):
        return c
    d = abs(c.modulus)
    poly = c.poly
    if poly.coeffs:
        if order is not None and all(v in order for v in poly.coeffs):
            lead = order.top(poly.coeffs)
        else:
            lead = max(poly.coeffs, key=lambda v: v.name)
        if poly.coeffs[lead] < 0:
            poly = -poly
    elif poly.const < 0:
        poly = -poly
    if d == c.modulus and poly is c.poly:
        return c
    return Divisibility(d, poly)


def reduce_content(c: Constraint) -> Constraint:
    """Divide a divisibility constraint by gcd(d, coefficients, constant);
    d | p and (d/g) | (p/g) have the same solutions. Inequalities pass through."""
    if not isinstance(c, Divisibility):
        return c
    g = math.gcd(c.modulus, c.poly.const, *c.poly.coeffs.values())
    if g <= 1:
        return c
    return Divisibility(c.modulus // g, Poly({v: a // g for v, a in c.poly.coeffs.items()}, c.poly.const // g))


def reduce_residues(c: Constraint) -> Constraint:
    """Bring every coefficient and the constant of d | p into (-d/2, d/2],
    then divide out the content. Adding multiples of d to any term leaves
    the solution set unchanged; variables whose coefficient becomes 0 drop
    out. Inequalities pass through."""
    if not isinstance(c, Divisibility):
        return c
    d = c.modulus
    if d == 0:
        return c

    def sym(a: int) -> int:
        r = a % d
        return r - d if 2 * r > d else r

    coeffs = {v: sym(a) for v, a in c.poly.coeffs.items()}
    const = sym(c.poly.const)
    if all(coeffs[v] == a for v, a in c.poly.coeffs.items()) and const == c.poly.const:
        return reduce_content(c)
    return reduce_content(Divisibility(d, Poly(coeffs, const)))


def unit_guard(c: Constraint):
    """(var, is_upper, value) if c is x - u <= 0 or -x + l <= 0, else None."""
    if not isinstance(c, Inequality) or len(c.poly.coeffs) != 1:
        return None
    (v, a), = c.poly.coeffs.items()
    if a == 1:
        return v, True, -c.poly.const
    if a == -1:
        return v, False, c.poly.const
    return None


def is_guarded(x: Variable, constraints: Iterable[Constraint]) -> bool:
    lo = hi = False
    for c in constraints:
        g = unit_guard(c)
        if g is not None and g[0] == x:
            if g[1]:
                hi = True
            else:
                lo = True
    return lo and hi


def guarded_variables(constraints: Iterable[Constraint]) -> set[Variable]:
    lo: set = set()
    hi: set = set()
    for c in constraints:
        g = unit_guard(c)
        if g is not None:
            (hi if g[1] else lo).add(g[0])
    return lo & hi


def guard_box(constraints: Iterable[Constraint]) -> dict[Variable, tuple[int, int]]:
    """Tightest syntactic guard interval for every guarded variable."""
    lo: dict = {}
    hi: dict = {}
    for c in constraints:
        g = unit_guard(c)
        if g is None:
            continue
        v, upper, val = g
        if upper:
            hi[v] = min(hi.get(v, val), val)
        else:
            lo[v] = max(lo.get(v, val), val)
    return {v: (lo[v], hi[v]) for v in lo if v in hi}


# ---------------------------------------------------------------------------
# problems


class Problem:
    """Insertion-ordered set of constraints plus the variable order."""

    def __init__(self, constraints: Iterable[Constraint] = (), order: Optional[VariableOrder] = None):
        self.order = order
        self._index: dict[Constraint, int] = {}
        self._next = 0
        for c in constraints:
            self.add(c)

    def add(self, c: Constraint) -> bool:
        c = normalize(c, self.order)
        if c in self._index:
            return False
        self._index[c] = self._next
        self._next += 1
        return True

    def remove(self, c: Constraint) -> None:
        del self._index[normalize(c, self.order)]

    def index_of(self, c: Constraint) -> int:
        return self._index[c]

    def __contains__(self, c):
        return normalize(c, self.order) in self._index

    def __iter__(self) -> Iterator[Constraint]:
        return iter(list(self._index))

    def __len__(self):
        return len(self._index)

    @property
    def constraints(self) -> list[Constraint]:
        return list(self._index)

    def variables(self) -> set[Variable]:
        out: set = set()
        for c in self._index:
            out.update(c.variables)
        return out

    def guarded(self) -> set[Variable]:
        return guarded_variables(self._index)

    def holds(self, assignment: Mapping[Variable, int]) -> bool:
        return all(c.holds(assignment) for c in self._index)

    def copy(self) -> "Problem":
        p = Problem(order=self.order.copy() if self.order else None)
        p._index = dict(self._index)
        p._next = self._next
        return p

    def same_constraints(self, other: "Problem") -> bool:
        return set(self._index) == set(other._index)

    def __repr__(self):
        return "{" + ", ".join(render_constraint(c, self.order) for c in self._index) + "}"


def default_order(constraints: Iterable[Constraint], lexicographic: bool = False) -> VariableOrder:
    """Guarded variables first, each class in first-occurrence (or name) order."""
    constraints = list(constraints)
    seen: dict[Variable, None] = {}
    for c in constraints:
        for v in c.variables:
            seen.setdefault(v, None)
    names = list(seen)
    if lexicographic:
        names.sort(key=lambda v: v.name)
    g = guarded_variables(constraints)
    return VariableOrder([v for v in names if v in g], [v for v in names if v not in g])


def make_problem(constraints: Iterable[Constraint], order: Optional[VariableOrder] = None) -> Problem:
    constraints = list(constraints)
    if order is None:
        order = default_order(constraints)
    return Problem(constraints, order)


# ---------------------------------------------------------------------------
# bounds and the bound stack


@dataclass(frozen=True)
class Bound:
    var: Variable
    is_lower: bool
    value: int
    justification: Optional[Inequality] = None  # None marks a decision

    @property
    def decided(self) -> bool:
        return self.justification is None

    def __str__(self):
        op = ">=" if self.is_lower else "<="
        return f"{self.var.name} {op} {self.value}"


class BoundStack:
    """The sequence M of decided and propagated bounds.

    Current lower/upper values are cached per variable; each push remembers
    the value it replaced so that popping is O(1).
    """

    def __init__(self, entries: Iterable[Bound] = ()):
        self.entries: list[Bound] = []
        self._lo: dict[Variable, int] = {}
        self._hi: dict[Variable, int] = {}
        self._undo: list = []
        for b in entries:
            self.push(b)

    def lower(self, x: Variable):
        return self._lo.get(x, NEG_INF)

    def upper(self, x: Variable):
        return self._hi.get(x, POS_INF)

    def is_fixed(self, x: Variable) -> bool:
        lo = self._lo.get(x)
        return lo is not None and lo == self._hi.get(x)

    def has_bound(self, x: Variable) -> bool:
        return x in self._lo or x in self._hi

    def value(self, x: Variable) -> int:
        if not self.is_fixed(x):
            raise ValueError(f"variable {x} is not fixed")
        return self._lo[x]

    def push(self, b: Bound) -> None:
        x = b.var
        if b.is_lower:
            if not b.value > self.lower(x):
                raise InvariantViolation(f"{b} does not improve lower bound {self.lower(x)}")
            if b.value > self.upper(x):
                raise InvariantViolation(f"{b} exceeds upper bound {self.upper(x)}")
            self._undo.append(self._lo.get(x))
            self._lo[x] = b.value
        else:
            if not b.value < self.upper(x):
                raise InvariantViolation(f"{b} does not improve upper bound {self.upper(x)}")
            if b.value < self.lower(x):
                raise InvariantViolation(f"{b} is below lower bound {self.lower(x)}")
            self._undo.append(self._hi.get(x))
            self._hi[x] = b.value
        self.entries.append(b)

    def pop(self) -> Bound:
        b = self.entries.pop()
        prev = self._undo.pop()
        table = self._lo if b.is_lower else self._hi
        if prev is None:
            del table[b.var]
        else:
            table[b.var] = prev
        return b

    def truncate(self, n: int) -> None:
        while len(self.entries) > n:
            self.pop()

    def copy(self) -> "BoundStack":
        return BoundStack(self.entries)

    def latest(self, x: Variable, is_lower: bool, before: Optional[int] = None) -> Optional[int]:
        """Index of the newest entry for (x, direction) strictly below `before`."""
        i = len(self.entries) if before is None else before
        for j in range(i - 1, -1, -1):
            e = self.entries[j]
            if e.var == x and e.is_lower == is_lower:
                return j
        return None

    def decided_vars(self) -> set[Variable]:
        return {b.var for b in self.entries if b.decided}

    def assignment(self) -> dict[Variable, int]:
        """The model read off M: every variable gets its lower bound."""
        return dict(self._lo)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def __repr__(self):
        return "[" + ", ".join(("*" if b.decided else "") + str(b) for b in self.entries) + "]"


# ---------------------------------------------------------------------------
# solver states and results


@dataclass(frozen=True)
class Search:
    M: tuple
    C: tuple


@dataclass(frozen=True)
class Conflict:
    M: tuple
    C: tuple
    I: Constraint


@dataclass(frozen=True)
class Sat:
    assignment: dict = field(default_factory=dict)

    verdict = "sat"


@dataclass(frozen=True)
class Unsat:
    verdict = "unsat"


@dataclass(frozen=True)
class StepLimit:
    steps: int

    verdict = "unknown"


SolverState = Union[Search, Conflict, Sat, Unsat]


# ---------------------------------------------------------------------------
# canonical text rendering


def _sorted_terms(p: Poly, order: Optional[VariableOrder]):
    if order is not None and all(v in order for v in p.coeffs):
        return sorted(p.coeffs.items(), key=lambda t: -order.rank[t[0]])
    return sorted(p.coeffs.items(), key=lambda t: t[0].name)


def render_poly(p: Poly, order: Optional[VariableOrder] = None) -> str:
    parts: list[str] = []
    for v, c in _sorted_terms(p, order):
        mag = abs(c)
        body = v.name if mag == 1 else f"{mag}*{v.name}"
        if not parts:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    if p.const or not parts:
        if not parts:
            parts.append(str(p.const))
        else:
            parts.append(("- " if p.const < 0 else "+ ") + str(abs(p.const)))
    return " ".join(parts)


def render_constraint(c: Constraint, order: Optional[VariableOrder] = None) -> str:
    if isinstance(c, Divisibility):
        return f"{c.modulus} | {render_poly(c.poly, order)}"
    return f"{render_poly(c.poly, order)} <= 0"
