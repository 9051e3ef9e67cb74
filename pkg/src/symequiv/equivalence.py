"""Symbolic equivalence of honest derivations.

Inclusion of one honest derivation in another is checked probe by probe: the
honest derivation is connected to a small testing derivation (one equality,
or one public deduction compared with a target), a complete set of solutions
is computed for the composition, and each minimal solution is replayed on the
other side.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple, Union

from .derivation import (
    RECEPTION, Connection, Deduction, Derivation, DerivationError, Trace, Unsat, check, connect,
    connect_indexed, make_well_formed, trace,
)
from .solver import NotClosed, Solution, SolverConfig, is_ground_hsd, solve_complete

__all__ = [
    "OPEN", "TestProbe", "Counterexample", "Included", "Equivalent", "EquivConfig",
    "make_well_formed", "enumerate_probes", "attach_probe", "check_inclusion", "check_equiv",
    "ground_check_equiv", "replay",
]

OPEN = None     # probe position fed by the attacker instead of an honest output


@dataclass(frozen=True)
class TestProbe:
    """A testing derivation: ``kind`` is ``"eq"`` or ``"ded"``.

    ``positions`` index the visible outputs (``OPEN`` lets the attacker
    supply the value).  Equality probes have two positions; deduction probes
    have one per argument of ``symbol`` followed by the target.
    """

    kind: str
    positions: Tuple[Optional[int], ...]
    symbol: Optional[str] = None

    def __str__(self):
        p = ["?" if x is OPEN else f"o{x}" for x in self.positions]
        if self.kind == "eq":
            return f"{p[0]} = {p[1]}"
        return f"{self.symbol}({', '.join(p[:-1])}) = {p[-1]}"

    def derivation(self, D, base: int = 0) -> Derivation:
        """Receptions ``base, base+1, ...`` then, for a deduction probe, the deduction."""
        recv = [base + n for n in range(len(self.positions))]
        states = [(r, RECEPTION) for r in recv]
        if self.kind == "eq":
            return Derivation(states, (), {}, [(recv[0], recv[1])], D)
        x0 = base + len(recv)
        states.append((x0, Deduction(self.symbol, tuple(recv[:-1]))))
        return Derivation(states, [(r, x0) for r in recv[:-1]], {}, [(x0, recv[-1])], D)


@dataclass
class Counterexample:
    """A minimal solution accepted on one side and rejected on the other."""

    probe: Optional[TestProbe]
    solution: Solution
    accepts: str                     # "first" or "second"
    accepted: Trace
    rejected: object                 # Unsat, NotClosed, or a DerivationError message
    index: int = 0                   # position of the probe in the stream, 0 = no probe

    @property
    def verdict(self) -> str:
        return "counterexample"


@dataclass
class Included:
    complete: bool = True
    note: str = ""

    @property
    def verdict(self) -> str:
        return "included" if self.complete else "unknown"


@dataclass
class Equivalent:
    complete: bool = True
    note: str = ""

    @property
    def verdict(self) -> str:
        return "equivalent" if self.complete else "unknown"

    def __str__(self):
        return "equivalent" if self.complete else f"equivalent up to bound ({self.note})"


@dataclass
class EquivConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    include_open: bool = True
    workers: int = 0


# -- probes ----------------------------------------------------------------------


def enumerate_probes(Ch: Derivation, include_open: bool = False) -> Iterator[TestProbe]:
    """Equality probes over ordered pairs, then deduction probes per public symbol."""
    m = len(Ch.visible_outputs)
    if m == 0:
        return
    pos: List[Optional[int]] = list(range(m))
    for i, j in itertools.combinations(pos, 2):
        yield TestProbe("eq", (i, j))
    if include_open:
        pos = pos + [OPEN]
    for sym in Ch.D.public:
        for args in itertools.product(pos, repeat=sym.arity):
            for t in pos:
                p = args + (t,)
                # a probe fed only by the attacker tests nothing about the honest side
                if all(x is OPEN for x in p):
                    continue
                yield TestProbe("ded", p, sym.name)


def attach_probe(Ch: Derivation, probe: TestProbe, base: int):
    """Connect ``probe`` (numbered from ``base``) to the visible outputs of ``Ch``."""
    vis = Ch.visible_outputs
    Ct = probe.derivation(Ch.D, base)
    right = {base + n: vis[x] for n, x in enumerate(probe.positions) if x is not OPEN}
    # probing must not use up what the attacker sees
    out = dict(Ch.out)
    for o in right.values():
        out[o] = out.get(o, 0) + 1
    return connect_indexed(Ch.replace(out=out), Ct, Connection.of(right=right), offset=0).derivation


def _interface(Ch: Derivation, Ch2: Derivation):
    if len(Ch.inputs) != len(Ch2.inputs) or len(Ch.visible_outputs) != len(Ch2.visible_outputs):
        raise DerivationError("interface-mismatch",
                              f"interfaces differ: {len(Ch.inputs)}/{len(Ch.visible_outputs)} inputs/outputs "
                              f"vs {len(Ch2.inputs)}/{len(Ch2.visible_outputs)}")
    ins = dict(zip(sorted(Ch.inputs), sorted(Ch2.inputs)))
    outs = dict(zip(Ch.visible_outputs, Ch2.visible_outputs))
    return ins, outs


def _translate(sol: Solution, ins, outs) -> Connection:
    return Connection.of({ins.get(i, i): s for i, s in sol.phi.left},
                         {r: outs.get(o, o) for r, o in sol.phi.right})


def _replay_side(H: Derivation, sol: Solution, phi: Connection):
    try:
        C = connect(H, sol.asd, phi)
    except DerivationError as e:
        return f"connection fails: {e}"
    if not C.closed:
        return NotClosed
    return trace(C)


def _base(Ch: Derivation, Ch2: Derivation) -> int:
    return max(list(Ch.kinds) + list(Ch2.kinds), default=-1) + 1


def _check_one(args) -> Tuple[int, Optional[Counterexample], bool, str]:
    Ch, Ch2, probe, index, cfg, accepts = args
    ins, outs = _interface(Ch, Ch2)
    base = _base(Ch, Ch2)
    if probe is None:
        H, H2 = Ch, Ch2
    else:
        try:
            H = attach_probe(Ch, probe, base)
        except DerivationError:
            return index, None, True, ""
        H2 = attach_probe(Ch2, probe, base)
    sols = solve_complete(H, cfg)
    for sol in sols:
        first = _replay_side(H, sol, sol.phi)
        if not isinstance(first, Trace):
            raise DerivationError("solver-internal", f"solution rejected by its own derivation: {first}")
        second = _replay_side(H2, sol, _translate(sol, ins, outs))
        if not isinstance(second, Trace):
            return index, Counterexample(probe, sol, accepts, first, second, index), sols.complete, sols.note
    return index, None, sols.complete, sols.note


# -- inclusion and equivalence -------------------------------------------------------


def check_inclusion(Ch: Derivation, Ch2: Derivation, cfg: Optional[EquivConfig] = None,
                    _accepts: str = "first") -> Union[Included, Counterexample]:
    """Every minimal solution of ``Ch`` composed with a probe also solves ``Ch2``."""
    cfg = cfg or EquivConfig()
    check(Ch, "hsd")
    check(Ch2, "hsd")
    _interface(Ch, Ch2)
    jobs = [(Ch, Ch2, None, 0, cfg.solver, _accepts)]
    jobs += [(Ch, Ch2, p, n + 1, cfg.solver, _accepts)
             for n, p in enumerate(enumerate_probes(Ch, cfg.include_open))]
    complete, notes = True, []
    if cfg.workers and cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_check_one, jobs, chunksize=8))
    else:
        results = []
        for job in jobs:
            results.append(_check_one(job))
            if results[-1][1] is not None:
                break
    # the lowest probe index wins whatever the completion order
    for _, cex, ok, note in sorted(results, key=lambda r: r[0]):
        if cex is not None:
            return cex
        if not ok:
            complete = False
            if note and note not in notes:
                notes.append(note)
    return Included(complete, "; ".join(notes))


def check_equiv(Ch: Derivation, Ch2: Derivation, cfg: Optional[EquivConfig] = None) -> Union[Equivalent, Counterexample]:
    fwd = check_inclusion(Ch, Ch2, cfg, "first")
    if isinstance(fwd, Counterexample):
        return fwd
    bwd = check_inclusion(Ch2, Ch, cfg, "second")
    if isinstance(bwd, Counterexample):
        return bwd
    notes = [n for n in (fwd.note, bwd.note) if n]
    return Equivalent(fwd.complete and bwd.complete, "; ".join(dict.fromkeys(notes)))


def ground_check_equiv(Ch: Derivation, Ch2: Derivation, cfg: Optional[EquivConfig] = None) -> Union[Equivalent, Counterexample]:
    """Equivalence of ground honest derivations."""
    for C in (Ch, Ch2):
        if not is_ground_hsd(C):
            raise DerivationError("not-ground", "ground equivalence needs ground honest derivations")
    return check_equiv(Ch, Ch2, cfg)


def replay(cex: Counterexample, Ch: Derivation, Ch2: Derivation):
    """Replay a counterexample: ``(result on the accepting side, result on the other)``."""
    if cex.accepts == "second":
        Ch, Ch2 = Ch2, Ch
    ins, outs = _interface(Ch, Ch2)
    base = _base(Ch, Ch2)
    H, H2 = (Ch, Ch2) if cex.probe is None else (attach_probe(Ch, cex.probe, base), attach_probe(Ch2, cex.probe, base))
    sol = cex.solution
    return _replay_side(H, sol, sol.phi), _replay_side(H2, sol, _translate(sol, ins, outs))
