"""Command line interface.

Exit status: 0 sat / equivalent, 1 unsat / inequivalent, 2 error,
3 unknown at the search bound.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from ..derivation import DerivationError, Derivation, trace
from ..equivalence import Counterexample, EquivConfig, check_equiv, ground_check_equiv
from ..solver import SolverConfig, check_sat, solve_complete
from ..terms import TermError
from .narration import parse_narration, protocol_derivation
from .serialize import (
    counterexample_to_json, derivation_from_json, dumps, loads, sat_witness, solution_set_to_json, trace_to_json,
)
from .syntax import ParseError, parse_term, parse_theory, print_term

EXIT_OK, EXIT_NO, EXIT_ERROR, EXIT_UNKNOWN = 0, 1, 2, 3


def _theory(path: str):
    return parse_theory(Path(path).read_text())[1]


def load_protocol(path: str, D) -> Derivation:
    """A narration file, or a JSON derivation document."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        doc = loads(text)
        return derivation_from_json(doc.get("derivation", doc), D)
    return protocol_derivation(parse_narration(text, D), D)


def _solver_cfg(args) -> SolverConfig:
    return SolverConfig(max_deductions=args.bound)


def _write(path: Optional[str], text: str):
    if path:
        Path(path).write_text(text)


def cmd_check_sat(args) -> int:
    D = _theory(args.theory)
    H = load_protocol(args.protocol, D)
    res = check_sat(H, _solver_cfg(args), ground=args.ground)
    if res.status == "sat":
        doc = sat_witness(H, res.witness)
        _write(args.witness, dumps(doc))
        print("sat")
        for i, name, value in doc["trace"]:
            print(f"  {name} = {value}")
        return EXIT_OK
    if res.status == "unsat":
        print("unsat")
        return EXIT_NO
    print(f"unknown: {res.note}")
    return EXIT_UNKNOWN


def cmd_check_equiv(args) -> int:
    D = _theory(args.theory)
    A, B = load_protocol(args.protA, D), load_protocol(args.protB, D)
    cfg = EquivConfig(solver=_solver_cfg(args), workers=args.workers)
    res = (ground_check_equiv if args.ground else check_equiv)(A, B, cfg)
    if isinstance(res, Counterexample):
        doc = counterexample_to_json(res, D)
        _write(args.witness, dumps(doc))
        side = "first" if res.accepts == "first" else "second"
        print("inequivalent")
        print(f"  probe: {res.probe if res.probe is not None else 'none'}")
        print(f"  accepted by the {side} derivation only")
        rej = doc["rejected"]
        if rej["kind"] == "unsat":
            print(f"  failing equation: {rej['equation'][0]} =? {rej['equation'][1]} ({rej['left']} != {rej['right']})")
        else:
            print(f"  rejected: {rej.get('message', rej['kind'])}")
        return EXIT_NO
    if res.complete:
        print("equivalent")
        return EXIT_OK
    print(f"equivalent up to bound: {res.note}")
    return EXIT_UNKNOWN


def cmd_solve(args) -> int:
    D = _theory(args.theory)
    H = load_protocol(args.protocol, D)
    sols = solve_complete(H, _solver_cfg(args))
    sys.stdout.write(dumps(solution_set_to_json(sols, D)))
    return EXIT_OK if sols.complete else EXIT_UNKNOWN


def cmd_trace(args) -> int:
    D = _theory(args.theory)
    C = load_protocol(args.derivation, D)
    tr = trace(C)
    if not tr:
        print(f"unsat: {tr}")
        return EXIT_NO
    for i, name, value in trace_to_json(tr, D):
        print(f"{name} = {value}")
    return EXIT_OK


def cmd_normalize(args) -> int:
    D = _theory(args.theory)
    print(print_term(D.normalize(parse_term(args.term, D)), D))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symequiv", description="Symbolic derivations: satisfiability and equivalence.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-sat", help="decide satisfiability of a protocol")
    s.add_argument("theory")
    s.add_argument("protocol")
    s.add_argument("--ground", action="store_true", help="require a ground honest derivation")
    s.add_argument("--bound", type=int, default=None, help="maximum attacker deductions")
    s.add_argument("--witness", help="write the witness JSON here")
    s.set_defaults(func=cmd_check_sat)

    s = sub.add_parser("check-equiv", help="decide symbolic equivalence of two protocols")
    s.add_argument("theory")
    s.add_argument("protA")
    s.add_argument("protB")
    s.add_argument("--ground", action="store_true", help="require ground honest derivations")
    s.add_argument("--bound", type=int, default=None, help="maximum attacker deductions")
    s.add_argument("--witness", help="write the counterexample JSON here")
    s.add_argument("--workers", type=int, default=0, help="check probes in this many processes")
    s.set_defaults(func=cmd_check_equiv)

    s = sub.add_parser("solve", help="print a complete set of solutions as JSON")
    s.add_argument("theory")
    s.add_argument("protocol")
    s.add_argument("--bound", type=int, default=None)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("trace", help="print the trace of a closed derivation")
    s.add_argument("theory")
    s.add_argument("derivation")
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("normalize", help="print the normal form of a term")
    s.add_argument("theory")
    s.add_argument("term")
    s.set_defaults(func=cmd_normalize)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    try:
        return args.func(args)
    except (OSError, ParseError, DerivationError, TermError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


run_cli = main
