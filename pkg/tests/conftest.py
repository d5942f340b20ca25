"""Shared helpers: tiny brute-force checkers that only use Python loops,
so they can judge the package's own oracles as well as the engine."""

from __future__ import annotations

import itertools
from typing import Iterable

import pytest

from liadecide.model import Divisibility, Inequality, Poly, Variable


def holds(c, point: dict) -> bool:
    total = c.poly.const + sum(a * point[v] for v, a in c.poly.coeffs.items())
    if isinstance(c, Divisibility):
        return total % c.modulus == 0
    return total <= 0


def points(variables: Iterable[Variable], lo: int, hi: int):
    vs = sorted(set(variables), key=lambda v: v.name)
    for values in itertools.product(range(lo, hi + 1), repeat=len(vs)):
        yield dict(zip(vs, values))


def solutions(constraints, variables, lo: int, hi: int) -> set:
    vs = sorted(set(variables), key=lambda v: v.name)
    out = set()
    for pt in points(vs, lo, hi):
        if all(holds(c, pt) for c in constraints):
            out.add(tuple(pt[v] for v in vs))
    return out


def any_solution(constraints, variables, lo: int, hi: int) -> bool:
    for pt in points(variables, lo, hi):
        if all(holds(c, pt) for c in constraints):
            return True
    return False


@pytest.fixture
def xyz():
    return Variable("x"), Variable("y"), Variable("z")


def P(*terms, const: int = 0) -> Poly:
    return Poly.of(*terms, const=const)


def le(*terms, const: int = 0) -> Inequality:
    return Inequality(P(*terms, const=const))


def dv(d: int, *terms, const: int = 0) -> Divisibility:
    return Divisibility(d, P(*terms, const=const))


def box_mask(constraints, box: dict):
    """Boolean array over the box (axes in `box` key order) marking the
    points that satisfy every constraint. Plain numpy, no package code."""
    import numpy as np

    vs = list(box)
    shape = tuple(hi - lo + 1 for lo, hi in box.values())
    axes = {}
    for j, v in enumerate(vs):
        lo, hi = box[v]
        s = [1] * len(vs)
        s[j] = hi - lo + 1
        axes[v] = np.arange(lo, hi + 1, dtype=np.int64).reshape(s)
    mask = np.ones(shape, dtype=bool)
    for c in constraints:
        total = np.zeros((1,) * len(vs), dtype=np.int64) + c.poly.const
        for v, a in c.poly.coeffs.items():
            total = total + a * axes[v]
        ok = (total % c.modulus == 0) if isinstance(c, Divisibility) else (total <= 0)
        mask &= np.broadcast_to(ok, shape)
    return mask


ACCEPTANCE_LINES: list = []


@pytest.fixture
def report_line():
    def add(number: int, ok: bool, text: str) -> None:
        ACCEPTANCE_LINES.append((number, f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}"))
        print(ACCEPTANCE_LINES[-1][1])
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
