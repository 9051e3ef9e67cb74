"""JSON documents for derivations, solutions, witnesses and counterexamples.

Documents are written with sorted keys and a fixed layout, so equal objects
give byte-identical text and ``dumps(load(dumps(x))) == dumps(x)``.
"""
from __future__ import annotations

import json
from typing import Any, Dict, List, Optional

from ..derivation import (
    RECEPTION, Connection, Deduction, Derivation, Memory, Reuse, Trace, Unsat, connect, trace,
)
from ..equivalence import Counterexample, TestProbe
from ..solver import NotClosed, Solution
from ..terms import DeductionSystem, Term
from .syntax import parse_term, print_term

SCHEMA = "symequiv/1"


def dumps(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def loads(text: str) -> Dict[str, Any]:
    return json.loads(text)


def _term(t: Term, D) -> str:
    return print_term(t, D)


# -- derivations -----------------------------------------------------------------------


def _cover(C: Derivation) -> List[List[int]]:
    """Covering pairs of the order; they regenerate the same closure."""
    order = C.order
    res = []
    for a, b in sorted(order):
        if not any((a, c) in order and (c, b) in order for c in C.kinds):
            res.append([a, b])
    return res


def derivation_to_json(C: Derivation) -> Dict[str, Any]:
    states = []
    for i in C.indices:
        k = C.kinds[i]
        if isinstance(k, Memory):
            states.append({"id": i, "kind": "memory", "term": _term(k.term, C.D)})
        elif isinstance(k, Deduction):
            states.append({"id": i, "kind": "deduction", "symbol": k.symbol, "args": list(k.args)})
        elif isinstance(k, Reuse):
            states.append({"id": i, "kind": "reuse", "source": k.source})
        else:
            states.append({"id": i, "kind": "reception"})
    return {
        "states": states,
        "order": _cover(C),
        "out": [[i, C.out[i]] for i in sorted(C.out)],
        "tests": [[a, b] for a, b in C.tests],
    }


def derivation_from_json(doc: Dict[str, Any], D: DeductionSystem) -> Derivation:
    states = []
    for s in doc["states"]:
        kind = s["kind"]
        if kind == "memory":
            k = Memory(parse_term(s["term"], D))
        elif kind == "deduction":
            k = Deduction(s["symbol"], tuple(s["args"]))
        elif kind == "reuse":
            k = Reuse(s["source"])
        elif kind == "reception":
            k = RECEPTION
        else:
            raise ValueError(f"unknown state kind {kind!r}")
        states.append((s["id"], k))
    return Derivation(states, [tuple(e) for e in doc.get("order", [])],
                      {i: m for i, m in doc.get("out", [])}, [tuple(t) for t in doc.get("tests", [])], D)


def connection_to_json(phi: Connection) -> Dict[str, Any]:
    return {"left": [list(p) for p in phi.left], "right": [list(p) for p in phi.right]}


def connection_from_json(doc: Dict[str, Any]) -> Connection:
    return Connection(tuple(tuple(p) for p in doc["left"]), tuple(tuple(p) for p in doc["right"]))


def solution_to_json(sol: Solution) -> Dict[str, Any]:
    return {"asd": derivation_to_json(sol.asd), "phi": connection_to_json(sol.phi)}


def solution_from_json(doc: Dict[str, Any], D: DeductionSystem) -> Solution:
    return Solution(derivation_from_json(doc["asd"], D), connection_from_json(doc["phi"]))


def trace_to_json(tr: Trace, D=None) -> List[list]:
    """Rows ``[state, variable, value]`` in state order."""
    return [[i, tr.names.get(i, f"x{i}"), _term(t, D)] for i, t in sorted(tr.values.items())]


def trace_from_json(rows, D: DeductionSystem) -> Trace:
    return Trace({i: parse_term(v, D) for i, _, v in rows}, {i: name for i, name, _ in rows})


# -- witnesses ---------------------------------------------------------------------------


def sat_witness(H: Derivation, sol: Solution) -> Dict[str, Any]:
    """A solution of ``H`` with the trace of the closed composition."""
    tr = trace(connect(H, sol.asd, sol.phi))
    return {"schema": SCHEMA, "verdict": "sat", "solution": solution_to_json(sol),
            "trace": trace_to_json(tr, H.D)}


def probe_to_json(p: Optional[TestProbe]):
    if p is None:
        return None
    return {"kind": p.kind, "positions": list(p.positions), "symbol": p.symbol, "text": str(p)}


def probe_from_json(doc) -> Optional[TestProbe]:
    if doc is None:
        return None
    return TestProbe(doc["kind"], tuple(doc["positions"]), doc.get("symbol"))


def _rejected_to_json(r, D) -> Dict[str, Any]:
    if isinstance(r, Unsat):
        a, b = r.test
        return {"kind": "unsat", "equation": [f"x{a}", f"x{b}"], "left": _term(r.left, D), "right": _term(r.right, D)}
    if r is NotClosed:
        return {"kind": "not-closed"}
    if isinstance(r, Trace):
        return {"kind": "accepted", "trace": trace_to_json(r, D)}
    return {"kind": "connection", "message": str(r)}


def _rejected_from_json(doc, D):
    kind = doc["kind"]
    if kind == "unsat":
        a, b = (int(x[1:]) for x in doc["equation"])
        return Unsat((a, b), parse_term(doc["left"], D), parse_term(doc["right"], D))
    if kind == "not-closed":
        return NotClosed
    if kind == "accepted":
        return trace_from_json(doc["trace"], D)
    return doc["message"]


def counterexample_to_json(cex: Counterexample, D=None) -> Dict[str, Any]:
    return {
        "schema": SCHEMA,
        "verdict": "inequivalent",
        "accepts": cex.accepts,
        "probe_index": cex.index,
        "probe": probe_to_json(cex.probe),
        "solution": solution_to_json(cex.solution),
        "accepted_trace": trace_to_json(cex.accepted, D),
        "rejected": _rejected_to_json(cex.rejected, D),
    }


def counterexample_from_json(doc: Dict[str, Any], D: DeductionSystem) -> Counterexample:
    return Counterexample(probe_from_json(doc["probe"]), solution_from_json(doc["solution"], D), doc["accepts"],
                          trace_from_json(doc["accepted_trace"], D), _rejected_from_json(doc["rejected"], D),
                          doc["probe_index"])


def solution_set_to_json(sols, D=None) -> Dict[str, Any]:
    return {"schema": SCHEMA, "complete": sols.complete, "note": sols.note,
            "solutions": [solution_to_json(s) for s in sols]}
