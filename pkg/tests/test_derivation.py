import random

import pytest

from symequiv import nonce
from symequiv.derivation import (
    RECEPTION, Connection, Deduction, Derivation, DerivationError, Memory, Reception, Reuse, Trace, Unsat, asd,
    asd_leq, canonicalize_nonces, chain, check, connect, connect_indexed, decompose, is_asd, make_well_formed,
    nonce_equivalent, open_on, remove_unused_reuse, rename_nonces, trace, validate,
)
from symequiv.frontend.narration import compile_narration, parse_narration
from symequiv.solver import membership, solve_complete, solve_raw
from symequiv.terms import Const, nonces_of

from oracles import random_deduction_asd, random_hsd

ROLES = """
fresh Na
A -> B : penc(Na, pk(B))
B -> A : penc(f(Na), pk(A))
where
  A knows A, B, pk(A), pk(B), sk(A)
  B knows A, B, pk(A), pk(B), sk(B)
"""


def kinds_of(C, cls):
    return {i for i, k in C.kinds.items() if isinstance(k, cls)}


class TestValidate:
    def test_role_b(self, D):
        B = compile_narration(parse_narration(ROLES, D), D)["B"]
        assert validate(B, "hsd") == []
        assert kinds_of(B, Deduction) == {7, 8, 9}
        assert kinds_of(B, Memory) == {1, 2, 3, 4, 5}
        assert kinds_of(B, Reception) == {6}

    def test_forward_reference(self, D):
        C = Derivation([(0, Deduction("fst", (1,))), (1, Memory(Const("a")))], chain([0, 1]), {}, (), D)
        assert [d.code for d in validate(C)] == ["order-cycle"]

    def test_two_kinds(self, D):
        C = Derivation([(0, Memory(Const("a"))), (0, RECEPTION)], (), {}, (), D)
        assert [d.code for d in validate(C)] == ["multiple-kinds"]

    def test_private_symbol(self, D):
        C = Derivation([(0, Memory(Const("a"))), (1, Deduction("inv", (0,)))], (), {}, (), D)
        assert [d.code for d in validate(C)] == ["not-public"]

    def test_asd_refinements(self, D):
        C = Derivation([(0, Memory(Const("a"))), (1, RECEPTION)], (), {}, (), D)
        codes = {d.code for d in validate(C, "asd")}
        assert codes == {"asd-not-total", "asd-output-missing", "asd-knowledge"}

    def test_hsd_refuses_nonces(self, D):
        C = Derivation([(0, Memory(nonce("n")))], (), {0: 1}, (), D)
        assert [d.code for d in validate(C, "hsd")] == ["hsd-nonce"]
        with pytest.raises(DerivationError):
            check(C, "hsd")


class TestConnect:
    def test_running_example_is_closed(self, running):
        T = running.closed
        assert T.closed and validate(T) == []
        # the honest chain and the attacker chain survive, glued at the exchanged messages
        assert T.before(0, 8) and T.before(104, 107)
        assert 5 not in T.kinds and 108 not in T.kinds
        assert T.before(105, 6) and T.before(107, 8)

    def test_empty_connection_is_disjoint_union(self, running):
        U = connect(running.Ch, running.CK)
        assert len(U.kinds) == len(running.Ch.kinds) + len(running.CK.kinds)
        assert sorted(U.inputs) == sorted(running.Ch.inputs)

    def test_non_monotone(self, D, p):
        H = Derivation([(0, Memory(p("a"))), (1, Memory(p("b")))], chain([0, 1]), {0: 2, 1: 2}, (), D)
        A = asd([(10, RECEPTION), (11, RECEPTION)], D=D)
        with pytest.raises(DerivationError, match="reverses"):
            connect(H, A, Connection.of(right={10: 1, 11: 0}))
        assert connect(H, A, Connection.of(right={10: 0, 11: 1})).closed

    def test_output_used_up(self, D, p):
        H = Derivation([(0, Memory(p("a")))], (), {0: 1}, (), D)
        A = asd([(10, RECEPTION), (11, RECEPTION)], D=D)
        with pytest.raises(DerivationError):
            connect(H, A, Connection.of(right={10: 0, 11: 0}))

    def test_associative(self, running):
        left = connect(running.H, running.Cp, running.phi)
        # the attacker first meets the knowledge, then the role
        ck = connect_indexed(running.CK, running.Cp, Connection.of(right={100: 0, 101: 1, 102: 2, 103: 3}))
        r = ck.right_index
        right = connect(running.Ch, ck.derivation, Connection.of(left={5: r[105]}, right={r[108]: 8}))
        assert left.closed and right.closed
        assert sorted(map(str, trace(left).values.values())) == sorted(map(str, trace(right).values.values()))
        assert left.counts() == right.counts()


class TestTrace:
    def test_running_example(self, running, p):
        tr = trace(running.closed)
        n = nonce("n")
        assert (tr[6], tr[7], tr[8]) == (n, p("f(~n)"), p("penc(f(~n), pk(A))"))
        assert tr[107] is tr[8]

    def test_memory_only(self, D, p):
        terms = [p("a"), p("fst(pair(a, b))"), p("senc(k, b)")]
        C = Derivation([(i, Memory(t)) for i, t in enumerate(terms)], (), {}, (), D)
        assert [trace(C)[i] for i in range(3)] == [D.normalize(t) for t in terms]

    def test_failing_test(self, D, p):
        C = Derivation([(0, Memory(p("a"))), (1, Memory(p("b")))], (), {}, [(0, 1)], D)
        res = trace(C)
        assert isinstance(res, Unsat) and res.test == (0, 1)

    def test_open_derivation_refused(self, running):
        with pytest.raises(DerivationError):
            trace(running.Ch)

    def test_unused_reuse_is_harmless(self, running):
        T = running.closed
        extra = T.replace(states=list(T.states) + [(200, Reuse(6))], order=set(T.order) | {(6, 200)})
        assert remove_unused_reuse(extra) == T
        assert trace(extra).values[6] is trace(T).values[6]


class TestOpen:
    def test_open_nonce(self, running):
        n = nonce("n")
        O = open_on(running.Cp, [n])
        assert isinstance(O.kinds[104], Reception) and 104 in O.inputs
        assert is_asd(O)
        assert all(not (isinstance(k, Memory) and nonces_of(k.term)) for k in O.kinds.values())

    def test_open_nothing(self, running):
        assert open_on(running.Cp, []) is running.Cp

    def test_nonce_inside_knowledge(self, D):
        n = nonce("n")
        C = asd([(0, Memory(n)), (1, Memory(nonce("m")))], D=D)
        assert open_on(C, [n]).inputs == [0]
        with pytest.raises(DerivationError):
            open_on(C, [Const("n")])


class TestNonces:
    def test_first_occurrence_order(self, D):
        C = asd([(0, Memory(nonce("k"))), (1, Memory(nonce("a")))], D=D)
        K = canonicalize_nonces(C).knowledge
        assert K == [nonce("n1"), nonce("n2")]

    def test_idempotent(self, running):
        once = canonicalize_nonces(running.Cp)
        assert canonicalize_nonces(once) == once

    def test_permuted_copies(self, D):
        rng = random.Random(11)
        for _ in range(50):
            C = random_deduction_asd(D, rng, n=7)
            ns = sorted({t for t in C.knowledge}, key=str)
            perm = dict(zip(ns, rng.sample([nonce(f"q{i}") for i in range(10)], len(ns))))
            assert canonicalize_nonces(rename_nonces(C, perm)) == canonicalize_nonces(C)
            assert nonce_equivalent(C, rename_nonces(C, perm))


class TestOrdering:
    def test_extra_nonce(self, running):
        C = decompose(running.Cp).deductions
        bigger = C.replace(states=list(C.states) + [(150, Memory(nonce("spare")))],
                           order=set(C.order) | {(107, 150)}, out={**C.out, 150: 1})
        assert asd_leq(C, bigger)

    def test_appended_context(self, running, D):
        C = decompose(running.Cp).deductions
        more = C.replace(states=list(C.states) + [(150, Deduction("pair", (105, 107)))],
                         order=set(C.order) | {(107, 150)}, out={**C.out, 150: 1})
        assert asd_leq(C, more)
        assert not asd_leq(more, C)

    def test_solution_below_padded_attack(self, running):
        w = solve_complete(running.H3)[0].asd
        C = decompose(running.Cp).deductions
        padded = C.replace(states=list(C.states) + [(150, Deduction("f", (107,)))],
                           order=set(C.order) | {(107, 150)}, out={**C.out, 150: 1})
        # the context adds f, penc and the padding: three deductions
        assert asd_leq(w, padded, 3)
        assert not asd_leq(w, padded, 2)

    def test_strict_pairs_shrink(self, Dcore):
        rng = random.Random(3)
        for _ in range(15):
            raw = solve_raw(random_hsd(Dcore, rng)).solutions
            for s1 in raw[:8]:
                for s2 in raw[:8]:
                    if s1 is s2 or not asd_leq(s1.asd, s2.asd) or asd_leq(s2.asd, s1.asd):
                        continue
                    (d1, n1), (d2, n2) = s1.asd.counts(), s2.asd.counts()
                    assert (d1 < d2 and n1 <= n2) or n1 < n2 or nonce_equivalent(s1.asd, s2.asd)


class TestDecompose:
    def test_running_attack(self, running):
        dec = decompose(running.Cp)
        assert kinds_of(dec.deductions, Deduction) == {105, 106, 107}
        assert dec.deductions.knowledge == [nonce("n")]
        assert dec.deductions.tests == ()
        assert len(dec.testing.tests) == 1 and dec.testing.knowledge == []

    def test_test_free(self, D):
        C = asd([(0, RECEPTION), (1, Deduction("fst", (0,)))], D=D)
        assert decompose(C).testing.tests == ()

    def test_deduction_free_relays(self, D):
        C = asd([(0, RECEPTION), (1, RECEPTION)], tests=[(0, 1)], D=D)
        dec = decompose(C)
        assert kinds_of(dec.deductions, Deduction) == set()
        assert dec.deductions.inputs == [0, 1]

    def test_round_trip_membership(self, running):
        # the attack, and a variant that forgets to apply f before answering
        bad = running.Cp.replace(states=[(i, Deduction("penc", (104, 102)) if i == 107 else k)
                                         for i, k in running.Cp.states])
        verdicts = []
        for CI in (running.Cp, bad):
            dec = decompose(CI)
            glued = connect(dec.deductions, dec.testing, dec.psi)
            verdicts.append(membership(running.H, CI, running.phi))
            assert membership(running.H, glued, running.phi) == verdicts[-1]
        assert verdicts == [True, False]

    def test_migrates_repeated_deduction(self, running):
        Cp = running.Cp.replace(states=list(running.Cp.states) + [(109, Deduction("f", (104,)))],
                                order=set(running.Cp.order) | {(108, 109)}, out={**running.Cp.out, 109: 1})
        cc = connect_indexed(running.H, Cp, running.phi)
        tr = trace(cc.derivation)
        values = {i: tr[j] for i, j in cc.right_index.items()}
        wf = make_well_formed(Cp, values)
        assert (106, 109) in wf.tests
        dec = decompose(wf, values)
        assert 109 not in dec.deductions.kinds
