import random

import pytest

from symequiv import nonce
from symequiv.derivation import (
    RECEPTION, Connection, Deduction, Derivation, DerivationError, Memory, Reception, asd, asd_leq, chain, connect,
    connect_indexed, decompose, open_on, trace,
)
from symequiv.solver import (
    NotClosed, SolverConfig, check_sat, is_ground_hsd, membership, solution_leq, solution_trace, solve_complete,
)
from symequiv.terms import App, Const, Var, nonces_of
from symequiv.unification import unify_syntactic

from oracles import random_hsd


def secret_hsd(D, p):
    """The attacker must send ``s``, which only travels encrypted."""
    return Derivation([(0, Memory(p("senc(s, k)"))), (1, RECEPTION), (2, Memory(p("s")))],
                      chain([0, 1, 2]), {0: 2, 1: 1, 2: 1}, [(1, 2)], D)


class TestMembership:
    def test_running_example(self, running):
        assert membership(running.H, running.Cp, running.phi) is True

    def test_missing_f(self, running):
        bad = running.Cp.replace(states=[(i, Deduction("penc", (104, 102)) if i == 107 else k)
                                         for i, k in running.Cp.states])
        assert membership(running.H, bad, running.phi) is False

    def test_unconnected_input(self, running):
        phi = Connection.of(right=dict(running.phi.right))
        assert membership(running.H, running.Cp, phi) is NotClosed


class TestSolve:
    def test_running_example_covered(self, running):
        sols = solve_complete(running.H3)
        target = decompose(running.Cp).deductions
        assert sols.complete
        assert any(asd_leq(s.asd, target, 2) for s in sols)

    def test_underivable_secret(self, D, p):
        sols = solve_complete(secret_hsd(D, p))
        assert sols.complete and len(sols) == 0

    def test_free_input(self, D, p):
        H = Derivation([(0, Memory(p("a"))), (1, RECEPTION)], chain([0, 1]), {0: 2, 1: 1}, (), D)
        sols = solve_complete(H)
        assert len(sols) == 1
        (sol,) = sols
        assert sol.asd.counts() == (0, 1)
        assert [k.term.nonce for k in sol.asd.kinds.values()] == [True]

    def test_bound_exhaustion_is_reported(self, running):
        sols = solve_complete(running.H3, SolverConfig(max_deductions=0))
        assert not sols.complete and sols.note

    def test_bad_config(self):
        with pytest.raises(ValueError):
            SolverConfig(max_deductions=-1)
        with pytest.raises(ValueError):
            SolverConfig(narrowing_depth=0)

    def test_deterministic(self, running):
        a = [(s.asd, s.phi) for s in solve_complete(running.H3)]
        b = [(s.asd, s.phi) for s in solve_complete(running.H3)]
        assert a == b


class TestCheckSat:
    def test_running_example(self, running, p):
        res = check_sat(running.H3)
        assert res
        tr = solution_trace(running.H3, res.witness)
        ns = {n for t in tr.values.values() for n in nonces_of(t)}
        assert len(ns) == 1
        n = ns.pop()
        assert tr[6] is n and tr[7] is App("f", [n]) and tr[8] is p(f"penc(f({n}), pk(A))")

    def test_unsat(self, D, p):
        assert check_sat(secret_hsd(D, p)).status == "unsat"

    def test_no_reception(self, D, p):
        H = Derivation([(0, Memory(p("fst(pair(a, b))"))), (1, Memory(p("a")))], chain([0, 1]), {0: 2}, [(0, 1)], D)
        res = check_sat(H)
        assert res and res.witness.asd.counts() == (0, 0)

    def test_ground_mode(self, running, D, p):
        H = secret_hsd(D, p)
        assert is_ground_hsd(H)
        assert check_sat(H, ground=True).status == "unsat"
        assert not is_ground_hsd(running.H3)
        with pytest.raises(DerivationError):
            check_sat(running.H3, ground=True)

    def test_refuses_attacker_nonces(self, D):
        H = Derivation([(0, Memory(nonce("n")))], (), {0: 2}, (), D)
        with pytest.raises(DerivationError):
            check_sat(H)


# -- properties over random honest derivations ----------------------------------------


@pytest.fixture(scope="module")
def corpus(Dcore):
    rng = random.Random(17)
    out = []
    for _ in range(40):
        H = random_hsd(Dcore, rng)
        out.append((H, solve_complete(H)))
    return out


def test_returned_derivations_are_stutter_free(corpus):
    for H, sols in corpus:
        for s in sols:
            assert s.asd.tests == ()
            # each state computes a new value
            cc = connect_indexed(H, s.asd, s.phi)
            tr = trace(cc.derivation)
            vals = [tr[cc.right_index[i]] for i, k in s.asd.kinds.items() if isinstance(k, Deduction)]
            assert len(vals) == len(set(vals))


def test_minimal(corpus):
    for H, sols in corpus:
        for a in sols:
            for b in sols:
                if a is not b:
                    assert not solution_leq(a, b)


def test_syntactically_satisfiable_with_any_inputs(corpus):
    rng = random.Random(4)
    pool = [Const("a"), Const("b"), App("pair", [Const("a"), Const("k")]), App("fst", [Const("b")])]
    for H, sols in corpus:
        for s in sols:
            var = {i: Var(f"s{i}") for i in s.asd.kinds}
            eqs = []
            for i, k in s.asd.kinds.items():
                if isinstance(k, Deduction):
                    eqs.append((var[i], App(k.symbol, [var[a] for a in k.args])))
                elif isinstance(k, Reception):
                    eqs.append((var[i], rng.choice(pool)))
                elif isinstance(k, Memory):
                    eqs.append((var[i], k.term))
                else:
                    eqs.append((var[i], var[s.asd.origin(i)]))
            assert unify_syntactic(eqs) is not None


def test_replacement_stability(running, Dcore):
    """Feeding a built term to every opened nonce keeps a solution a solution."""
    rng = random.Random(23)
    hsds = [running.H3] + [random_hsd(Dcore, rng, max_states=5, check=0.3) for _ in range(30)]
    checked = 0
    for H in hsds:
        sols = solve_complete(H)
        for s in sols:
            ns = [k.term for k in s.asd.kinds.values() if isinstance(k, Memory)]
            if not ns:
                continue
            O = open_on(s.asd, ns)
            opened = [i for i in O.inputs if i not in dict(s.phi.right)]
            top = max(O.kinds) + 10
            # one built term per opened nonce, since they may be used at different times
            ctx = asd([(top, Memory(nonce("fresh")))] +
                      [(top + 1 + n, Deduction("pair", (top, top))) for n in range(len(opened))], D=Dcore)
            cc = connect_indexed(ctx, O, Connection.of(right={i: top + 1 + n for n, i in enumerate(opened)}))
            ri = cc.right_index
            phi = Connection.of({i: ri[a] for i, a in s.phi.left}, {ri[r]: o for r, o in s.phi.right})
            assert membership(H, cc.derivation, phi) is True
            checked += 1
    assert checked >= 10


def test_extensions_of_solutions_are_solutions(corpus):
    for H, sols in corpus:
        for s in sols:
            if not s.asd.kinds:
                continue
            last = s.asd.linear()[-1]
            top = max(s.asd.kinds) + 1
            more = s.asd.replace(states=list(s.asd.states) + [(top, Deduction("pair", (last, last)))],
                                 order=set(s.asd.order) | {(last, top)}, out={**s.asd.out, top: 1})
            assert membership(H, more, s.phi) is True
