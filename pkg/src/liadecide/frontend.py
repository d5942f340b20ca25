"""Text format for problems: parsing, canonical rendering, metadata headers.

One constraint per line, '#' starts a comment:

    ineq := poly "<=" "0"
    div  := integer "|" poly
    poly := ["-"] term (("+" | "-") term)*
    term := [integer ["*"]] ident | integer

Comment lines of the form ``# key: value`` before the first constraint form
a metadata header (``name``, ``expected``, ``step_budget``, ``order``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .config import ORDER_POLICIES
from .errors import ParseError
from .model import (
    Constraint,
    Divisibility,
    Inequality,
    Poly,
    Problem,
    Variable,
    VariableOrder,
    default_order,
    guarded_variables,
    render_constraint,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<le><=)
  | (?P<op>[+\-*|])
  | (?P<bad>.)
    """,
    re.VERBOSE,
)

_META = re.compile(r"^#\s*([A-Za-z_]+)\s*:\s*(.*?)\s*$")


@dataclass
class _Tok:
    kind: str
    text: str
    col: int  # 1-based


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    out = []
    for m in _TOKEN.finditer(line):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", lineno, m.start() + 1)
        out.append(_Tok(kind, m.group(), m.start() + 1))
    return out


class _LineParser:
    def __init__(self, toks: list[_Tok], lineno: int, width: int, names: dict):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.end_col = width + 1
        self.names = names

    def peek(self, offset: int = 0) -> Optional[_Tok]:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def col(self) -> int:
        t = self.peek()
        return t.col if t else self.end_col

    def fail(self, msg: str, col: Optional[int] = None):
        raise ParseError(msg, self.lineno, col if col is not None else self.col())

    def take(self, kind: str, text: Optional[str] = None) -> _Tok:
        t = self.peek()
        if t is None or t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = "end of line" if t is None else repr(t.text)
            self.fail(f"expected {want}, found {got}")
        self.i += 1
        return t

    def var(self, name: str) -> Variable:
        v = self.names.get(name)
        if v is None:
            v = self.names[name] = Variable(name)
        return v

    def term(self, sign: int, coeffs: dict, const: list) -> None:
        t = self.peek()
        if t is None or t.kind not in ("int", "ident"):
            self.fail("expected a term")
        if t.kind == "ident":
            self.i += 1
            self._add(coeffs, self.var(t.text), sign)
            self._no_product(t)
            return
        self.i += 1
        n = int(t.text)
        nxt = self.peek()
        if nxt is not None and nxt.kind == "op" and nxt.text == "*":
            self.i += 1
            ident = self.peek()
            if ident is None or ident.kind != "ident":
                self.fail("expected a variable after '*'")
            self.i += 1
            self._add(coeffs, self.var(ident.text), sign * n)
            self._no_product(ident)
        elif nxt is not None and nxt.kind == "ident":
            self.i += 1
            self._add(coeffs, self.var(nxt.text), sign * n)
            self._no_product(nxt)
        else:
            const[0] += sign * n

    def _no_product(self, after: _Tok) -> None:
        nxt = self.peek()
        if nxt is None:
            return
        if (nxt.kind == "op" and nxt.text == "*") or nxt.kind in ("ident", "int"):
            self.fail(f"non-linear term after {after.text!r}", nxt.col)

    @staticmethod
    def _add(coeffs: dict, v: Variable, c: int) -> None:
        coeffs[v] = coeffs.get(v, 0) + c

    def poly(self) -> Poly:
        coeffs: dict = {}
        const = [0]
        sign = 1
        t = self.peek()
        if t is not None and t.kind == "op" and t.text in "+-":
            sign = -1 if t.text == "-" else 1
            self.i += 1
        self.term(sign, coeffs, const)
        while True:
            t = self.peek()
            if t is None or not (t.kind == "op" and t.text in "+-"):
                break
            self.i += 1
            self.term(-1 if t.text == "-" else 1, coeffs, const)
        return Poly(coeffs, const[0])

    def constraint(self) -> Constraint:
        is_div = any(t.kind == "op" and t.text == "|" for t in self.toks)
        if is_div:
            start = self.col()
            sign = 1
            t = self.peek()
            if t is not None and t.kind == "op" and t.text == "-":
                sign = -1
                self.i += 1
            d = sign * int(self.take("int").text)
            self.take("op", "|")
            if d == 0:
                self.fail("zero modulus", start)
            p = self.poly()
            if self.peek() is not None:
                self.fail(f"unexpected {self.peek().text!r}")
            return Divisibility(abs(d), p)
        p = self.poly()
        self.take("le")
        zero = self.take("int")
        if zero.text.lstrip("0") != "":
            self.fail("right-hand side must be 0", zero.col)
        if self.peek() is not None:
            self.fail(f"unexpected {self.peek().text!r}")
        return Inequality(p)


@dataclass
class Document:
    """A parsed file: constraints in file order plus header metadata."""

    constraints: list[Constraint]
    meta: dict = field(default_factory=dict)
    variables: dict = field(default_factory=dict)  # name -> Variable, first occurrence order
    order_line: int = 0


def parse_document(text: str) -> Document:
    names: dict[str, Variable] = {}
    constraints: list[Constraint] = []
    meta: dict[str, str] = {}
    order_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            m = _META.match(stripped)
            if m and not constraints:
                key = m.group(1).lower()
                meta[key] = m.group(2)
                if key == "order":
                    order_line = lineno
            continue
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        toks = _tokenize(body, lineno)
        constraints.append(_LineParser(toks, lineno, len(body.rstrip()), names).constraint())
    return Document(constraints, meta, names, order_line)


def _parse_order_spec(spec: str, doc: Document) -> list[Variable]:
    line = doc.order_line or 1
    names = [n.strip() for n in re.split(r"<|,", spec) if n.strip()]
    out = []
    for n in names:
        if n not in doc.variables:
            raise ParseError(f"order mentions unknown variable {n!r}", line, 1)
        if doc.variables[n] in out:
            raise ParseError(f"order lists {n!r} twice", line, 1)
        out.append(doc.variables[n])
    return out


def build_order(constraints: list[Constraint], policy: str = "declaration",
                explicit: Optional[list[Variable]] = None) -> VariableOrder:
    """Guarded variables first, then unguarded. An explicit listing fixes the
    relative order inside each class; unlisted variables follow the policy."""
    if policy not in ORDER_POLICIES:
        raise ValueError(f"unknown order policy {policy!r}")
    base = default_order(constraints, lexicographic=(policy == "lexicographic")).ascending()
    if explicit:
        listed = set(explicit)
        base = list(explicit) + [v for v in base if v not in listed]
    g = guarded_variables(constraints)
    # repair pass: a listing may interleave the classes; guarded ones go first
    return VariableOrder([v for v in base if v in g], [v for v in base if v not in g])


def problem_from_document(doc: Document, policy: str = "declaration",
                          order: Optional[str] = None) -> Problem:
    spec = order if order is not None else doc.meta.get("order")
    explicit = _parse_order_spec(spec, doc) if spec else None
    return Problem(doc.constraints, build_order(doc.constraints, policy, explicit))


def parse(text: str, policy: str = "declaration", order: Optional[str] = None) -> Problem:
    """Parse problem text into a normalized Problem with its variable order."""
    return problem_from_document(parse_document(text), policy, order)


def render(problem: Problem, meta: Optional[dict] = None) -> str:
    """Canonical text. The order is written as a header line so that
    parsing the output gives back the same problem."""
    lines = []
    for key, value in (meta or {}).items():
        if key != "order":
            lines.append(f"# {key}: {value}")
    if problem.order is not None and len(problem):
        used = problem.variables()
        lines.append("# order: " + " < ".join(v.name for v in problem.order.ascending() if v in used))
    for c in problem:
        lines.append(render_constraint(c, problem.order))
    return "\n".join(lines) + "\n"


__all__ = ["Document", "parse", "parse_document", "problem_from_document", "build_order", "render"]
