"""Curated regression instances shipped with the package.

Each entry is a `.lia` file in the `corpus` directory with a metadata header
giving its expected verdict, a step budget and, where it matters, the
variable order. Budgets are deliberately generous; exceeding one is treated
as a possible divergence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .config import SolverConfig
from .engine import solve
from .frontend import parse_document, problem_from_document
from .model import Problem, Sat, StepLimit, Unsat
from .oracle import reference_verdict

VERDICTS = ("sat", "unsat")


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    text: str
    expected: str
    step_budget: int
    required_order: Optional[str] = None

    def problem(self) -> Problem:
        return problem_from_document(parse_document(self.text), order=self.required_order)


def entry_from_text(text: str, fallback_name: str = "") -> CorpusEntry:
    doc = parse_document(text)
    meta = doc.meta
    expected = meta.get("expected", "").lower()
    if expected not in VERDICTS:
        raise ValueError(f"{fallback_name or 'entry'}: expected must be sat or unsat, got {expected!r}")
    try:
        budget = int(meta["step_budget"])
    except (KeyError, ValueError):
        raise ValueError(f"{fallback_name or 'entry'}: missing or bad step_budget") from None
    return CorpusEntry(meta.get("name", fallback_name), text, expected, budget, meta.get("order"))


def load_corpus(verify: bool = True) -> list[CorpusEntry]:
    """All shipped entries, sorted by name. With `verify`, each expected
    verdict is re-derived by the oracles and a mismatch raises."""
    folder = resources.files("liadecide") / "corpus"
    entries = []
    for item in sorted(folder.iterdir(), key=lambda f: f.name):
        if not item.name.endswith(".lia"):
            continue
        entries.append(entry_from_text(item.read_text(), item.name[:-4]))
    if verify:
        for e in entries:
            got = reference_verdict(e.problem())
            if got != e.expected:
                raise ValueError(f"corpus entry {e.name}: oracle says {got}, file says {e.expected}")
    return entries


@dataclass
class EntryResult:
    name: str
    expected: str
    verdict: str
    steps: int
    budget: int
    seconds: float

    @property
    def ok(self) -> bool:
        return self.verdict == self.expected and self.steps <= self.budget


@dataclass
class CorpusReport:
    results: list[EntryResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    @property
    def seconds(self) -> float:
        return sum(r.seconds for r in self.results)

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            mark = "ok" if r.ok else "FAIL"
            out.append(f"{mark:4} {r.name}: {r.verdict} (expected {r.expected}), "
                       f"{r.steps}/{r.budget} steps, {r.seconds * 1000:.1f} ms")
        return out


def run_corpus(entries: Optional[list[CorpusEntry]] = None, debug: bool = False) -> CorpusReport:
    """Solve every entry within its budget (the run stops one step past it)."""
    if entries is None:
        entries = load_corpus(verify=False)
    report = CorpusReport()
    for e in entries:
        problem = e.problem()
        stats: list = []
        t0 = time.perf_counter()
        result = solve(problem, SolverConfig(max_steps=e.step_budget + 1, debug=debug), stats_out=stats)
        dt = time.perf_counter() - t0
        if isinstance(result, Sat):
            verdict = "sat"
        elif isinstance(result, Unsat):
            verdict = "unsat"
        else:
            verdict = "unknown"
        steps = stats[0].steps if stats else 0
        if isinstance(result, StepLimit):
            steps = result.steps
        report.results.append(EntryResult(e.name, e.expected, verdict, steps, e.step_budget, dt))
    return report


__all__ = ["CorpusEntry", "CorpusReport", "EntryResult", "entry_from_text", "load_corpus", "run_corpus"]
