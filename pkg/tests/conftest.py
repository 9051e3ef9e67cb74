import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from symequiv import load_dy, nonce
from symequiv.derivation import (
    RECEPTION, Connection, Deduction, Derivation, Memory, asd, chain, connect, connect_indexed,
)
from symequiv.frontend.syntax import parse_term
from oracles import DY_CORE

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def D():
    return load_dy()


@pytest.fixture(scope="session")
def Dcore(D):
    return D.restricted(DY_CORE)


@pytest.fixture(scope="session")
def p(D):
    return lambda s: parse_term(s, D)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


class Running:
    """The two-role running example with its attacker knowledge and attack."""

    def __init__(self, D):
        p = lambda s: parse_term(s, D)
        self.D = D
        # role B: knowledge 0..4, receives 5, answers with 8
        self.Ch = Derivation(
            [(0, Memory(p("A"))), (1, Memory(p("B"))), (2, Memory(p("pk(A)"))), (3, Memory(p("pk(B)"))),
             (4, Memory(p("sk(B)"))), (5, RECEPTION), (6, Deduction("pdec", (5, 4))), (7, Deduction("f", (6,))),
             (8, Deduction("penc", (7, 2)))],
            chain(list(range(9))), {**{i: 1 for i in range(9)}, 8: 2}, (), D)
        self.CK = Derivation([(i, Memory(p(t))) for i, t in enumerate(["A", "B", "pk(A)", "pk(B)"])],
                             chain([0, 1, 2, 3]), {i: 1 for i in range(4)}, (), D)
        self.Cp = asd([(100, RECEPTION), (101, RECEPTION), (102, RECEPTION), (103, RECEPTION),
                       (104, Memory(nonce("n"))), (105, Deduction("penc", (104, 103))),
                       (106, Deduction("f", (104,))), (107, Deduction("penc", (106, 102))), (108, RECEPTION)],
                      tests=[(108, 107)], D=D, out={**{i: 1 for i in range(100, 109)}, 105: 2})
        cc = connect_indexed(self.Ch, self.CK, Connection())
        self.H = cc.derivation
        r = cc.right_index
        self.phi = Connection.of(left={5: 105}, right={100: r[0], 101: r[1], 102: r[2], 103: r[3], 108: 8})
        self.closed = connect(self.H, self.Cp, self.phi)
        visible_K = Derivation(self.CK.states, self.CK.order, {i: 2 for i in range(4)}, (), D)
        self.H2 = connect(self.Ch, visible_K)
        # B also checks that the cipher it received is the one it can rebuild
        self.Ch_check = Derivation(list(self.Ch.states) + [(9, Deduction("penc", (6, 3)))], chain(list(range(10))),
                                   {**{i: 1 for i in range(10)}, 8: 2}, [(5, 9)], D)
        self.H3 = connect(self.Ch_check, visible_K)


@pytest.fixture(scope="session")
def running(D):
    return Running(D)


# every solution the solver returns anywhere in the suite is checked against membership
import symequiv.equivalence as _equivalence
import symequiv.solver as _solver
from report import AUDIT, RESULTS

_solve_complete = _solver.solve_complete


def _audited(Ch, cfg=None):
    sols = _solve_complete(Ch, cfg)
    t0 = time.perf_counter()
    for s in sols:
        AUDIT["checked"] += 1
        if _solver.membership(Ch, s.asd, s.phi) is not True:
            AUDIT["failed"].append((Ch, s))
    AUDIT["seconds"] += time.perf_counter() - t0
    return sols


_solver.solve_complete = _audited
_equivalence.solve_complete = _audited


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance")
        for _, _, line in sorted(RESULTS):
            terminalreporter.write_line(line)
    terminalreporter.write_line(f"solver audit: {AUDIT['checked']} solutions checked, "
                                f"{len(AUDIT['failed'])} rejected by membership, {AUDIT['seconds']:.1f}s")


@pytest.fixture(autouse=True)
def _soundness_audit():
    before = len(AUDIT["failed"])
    yield
    assert len(AUDIT["failed"]) == before, f"solver returned a non-solution: {AUDIT['failed'][before:]}"
