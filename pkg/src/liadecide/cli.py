"""Command line entry point.

    liadecide solve FILE... [--trace PATH] [--stats] [--max-steps N]
                            [--order declaration|lexicographic] [--oracle MODE]
                            [--debug] [--jobs N] [--no-model]
    liadecide corpus [--debug]

Exit codes: 10 sat, 20 unsat, 2 step limit, 1 error. With several files the
worst outcome wins (error, then step limit); a mix of sat and unsat gives 0.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .config import ORACLE_MODES, ORDER_POLICIES, SolverConfig
from .errors import ParseError, SolverError
from .frontend import parse
from .model import Sat, StepLimit, Unsat

EXIT_SAT = 10
EXIT_UNSAT = 20
EXIT_LIMIT = 2
EXIT_ERROR = 1
EXIT_MIXED = 0


def _trace_target(template: Optional[str], path: str, many: bool) -> Optional[str]:
    if template is None:
        return None
    if "{stem}" in template:
        return template.replace("{stem}", Path(path).stem)
    if many:
        raise ValueError("--trace needs a {stem} placeholder when several files are given")
    return template


def _oracle_check(problem, result, mode: str, out: io.StringIO) -> bool:
    """Cross-check the engine verdict; returns False on disagreement."""
    from .oracle import NoSolutionInBox, default_box, enumerate_box, qe_decide, _verdict

    verdict = _verdict(result)
    if mode == "enumerate":
        box, complete = default_box(problem)
        if not box.bounds and problem.variables():
            other = "unsat"
        else:
            res = enumerate_box(problem, box)
            other = _verdict(res)
            if isinstance(res, NoSolutionInBox) and not complete:
                other = "inconclusive"
    elif mode == "qe":
        other = _verdict(qe_decide(problem))
    else:
        from .oracle import differential
        agreement = differential(problem, SolverConfig(max_steps=10**6))
        out.write(f"oracle: engine={agreement.engine} qe={agreement.qe} enumerate={agreement.enumeration}\n")
        return agreement.agree and not agreement.notes
    out.write(f"oracle: {mode}={other}\n")
    return other not in ("sat", "unsat") or verdict not in ("sat", "unsat") or other == verdict


def solve_file(path: str, config: SolverConfig, show_stats: bool) -> tuple[int, str, str]:
    """Solve one file; returns (exit code, stdout text, stderr text)."""
    from .engine import Solver

    out, err = io.StringIO(), io.StringIO()
    try:
        text = Path(path).read_text()
        problem = parse(text, policy=config.order_policy)
    except OSError as e:
        err.write(f"{path}: {e.strerror or e}\n")
        return EXIT_ERROR, out.getvalue(), err.getvalue()
    except ParseError as e:
        err.write(f"{path}: {e}\n")
        return EXIT_ERROR, out.getvalue(), err.getvalue()

    trace_file = None
    try:
        if config.trace_path:
            trace_file = open(config.trace_path, "w")

        def sink(ev):
            trace_file.write(json.dumps(ev.record(), sort_keys=False) + "\n")

        solver = Solver(problem, max_steps=config.max_steps, debug=config.debug,
                        sink=sink if trace_file else None)
        result = solver.run()
    except SolverError as e:
        err.write(f"{path}: internal error: {e}\n")
        return EXIT_ERROR, out.getvalue(), err.getvalue()
    except OSError as e:
        err.write(f"{path}: {e}\n")
        return EXIT_ERROR, out.getvalue(), err.getvalue()
    finally:
        if trace_file is not None:
            trace_file.close()

    if isinstance(result, Sat):
        if not problem.holds(result.assignment):
            err.write(f"{path}: internal error: model does not satisfy the input\n")
            return EXIT_ERROR, out.getvalue(), err.getvalue()
        out.write("sat\n")
        if config.emit_model:
            for v in problem.order.ascending():
                if v in result.assignment:
                    out.write(f"{v.name} = {result.assignment[v]}\n")
        code = EXIT_SAT
    elif isinstance(result, Unsat):
        out.write("unsat\n")
        code = EXIT_UNSAT
    else:
        assert isinstance(result, StepLimit)
        out.write(f"unknown (step limit {result.steps})\n")
        code = EXIT_LIMIT

    if config.oracle_mode != "none":
        try:
            if not _oracle_check(problem, result, config.oracle_mode, err):
                err.write(f"{path}: oracle disagreement\n")
                code = EXIT_ERROR
        except SolverError as e:
            err.write(f"{path}: oracle gave up: {e}\n")
    if show_stats:
        err.write(json.dumps(solver.stats.as_dict()) + "\n")
    return code, out.getvalue(), err.getvalue()


def _combine(codes: list[int]) -> int:
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    if EXIT_LIMIT in codes:
        return EXIT_LIMIT
    kinds = set(codes)
    return kinds.pop() if len(kinds) == 1 else EXIT_MIXED


def _cmd_solve(args) -> int:
    many = len(args.files) > 1
    jobs = []
    for path in args.files:
        try:
            trace = _trace_target(args.trace, path, many)
        except ValueError as e:
            print(str(e), file=sys.stderr)
            return EXIT_ERROR
        cfg = SolverConfig(max_steps=args.max_steps, trace_path=trace, order_policy=args.order,
                           emit_model=not args.no_model, oracle_mode=args.oracle, debug=args.debug)
        jobs.append((path, cfg, args.stats))

    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(solve_file, *zip(*jobs)))
    else:
        results = [solve_file(*j) for j in jobs]

    # buffered per file, printed in input order
    for (path, _, _), (code, out, err) in zip(jobs, results):
        if many:
            sys.stdout.write(f"== {path}\n")
        sys.stdout.write(out)
        sys.stderr.write(err)
    sys.stdout.flush()
    return _combine([r[0] for r in results])


def _cmd_corpus(args) -> int:
    from .corpus import load_corpus, run_corpus

    try:
        entries = load_corpus(verify=not args.no_verify)
    except ValueError as e:
        print(str(e), file=sys.stderr)
        return EXIT_ERROR
    report = run_corpus(entries, debug=args.debug)
    for line in report.lines():
        print(line)
    return 0 if report.ok else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liadecide", description="Decide linear integer constraint problems.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one or more .lia files")
    s.add_argument("files", nargs="+")
    s.add_argument("--trace", metavar="PATH", help="write one JSON record per rule application")
    s.add_argument("--stats", action="store_true", help="print per-rule counters to stderr")
    s.add_argument("--max-steps", type=int, default=0, help="0 means unlimited")
    s.add_argument("--order", choices=ORDER_POLICIES, default="declaration")
    s.add_argument("--oracle", choices=ORACLE_MODES, default="none")
    s.add_argument("--debug", action="store_true", help="check state invariants after every step")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-model", action="store_true")
    s.set_defaults(func=_cmd_solve)

    c = sub.add_parser("corpus", help="run the bundled regression instances")
    c.add_argument("--debug", action="store_true")
    c.add_argument("--no-verify", action="store_true", help="skip the oracle check of expected verdicts")
    c.set_defaults(func=_cmd_corpus)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "max_steps", 0) < 0:
        ap.error("--max-steps must be >= 0")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
