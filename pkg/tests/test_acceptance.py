"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import random
import subprocess
import sys

from symequiv.derivation import (
    Deduction, Derivation, Memory, Reception, Trace, asd_leq, canonicalize_nonces, connect, decompose, trace,
)
from symequiv.equivalence import Counterexample, Equivalent, check_equiv, ground_check_equiv, replay
from symequiv.frontend.cli import load_protocol
from symequiv.solver import check_sat, membership, solve_complete
from symequiv.terms import App, Const, Var, constants, nonce, replace_const
from symequiv.unification import satisfies, unify_syntactic

from oracles import (
    brute_force_runs, frame_hsd, random_closed, random_deduction_asd, random_frame_pair, random_ground, random_hsd,
    random_linear, random_replacement_case, statically_equivalent, uncovered,
)
from report import AUDIT, Clock, record

SEED = 2026


def test_running_example_reproduction(running, p):
    clock = Clock()
    Cp = canonicalize_nonces(running.Cp)
    ok = membership(running.H, Cp, running.phi) is True
    tr = trace(connect(running.H, Cp, running.phi))
    n = nonce("n1")
    got = (tr[6], tr[7], tr[8])
    want = (n, p("f(~n1)"), p("penc(f(~n1), pk(A))"))
    dt = clock()
    passed = ok and got == want and dt < 1.0
    record(1, passed, f"membership={ok}, x6..x8 = {', '.join(map(str, got))}, {dt:.2f}s")
    assert passed


def test_automatic_attack_discovery(running):
    clock = Clock()
    res = check_sat(running.H3)
    dt = clock()
    target = decompose(running.Cp).deductions
    leq = res.status == "sat" and asd_leq(res.witness.asd, target, 2)
    passed = leq and dt < 5.0
    record(2, passed, f"{res.status}, witness <= C' with budget 2: {leq}, {dt:.2f}s")
    assert passed


def test_solver_soundness(running, Dcore):
    # a corpus run here; every other solver call in the suite is audited by conftest too
    clock = Clock()
    before = AUDIT["checked"]
    rng = random.Random(SEED)
    corpus = [running.H, running.H2, running.H3] + [random_hsd(Dcore, rng) for _ in range(60)]
    bad = 0
    for Ch in corpus:
        for s in solve_complete(Ch):
            bad += membership(Ch, s.asd, s.phi) is not True
    dt = clock()
    n = AUDIT["checked"] - before
    passed = bad == 0 and not AUDIT["failed"] and dt < 60
    record(3, passed, f"{n} solutions from {len(corpus)} honest derivations, {bad} rejected, {dt:.1f}s")
    assert passed


def test_solver_completeness(Dcore):
    clock = Clock()
    rng = random.Random(SEED)
    misses = []
    for n in range(200):
        Ch = random_hsd(Dcore, rng)
        sols = solve_complete(Ch)
        runs = brute_force_runs(Ch)
        miss = uncovered(Ch, sols.solutions, runs=runs)
        if miss:
            misses.append((n, Ch, miss[0]))
    # unconstrained inputs, at a smaller size since nothing prunes the runs
    free = random.Random(SEED + 1)
    for n in range(10):
        Ch = random_hsd(Dcore, free, max_states=4, check=0.0)
        sols = solve_complete(Ch)
        runs = brute_force_runs(Ch, max_ded=2)
        miss = uncovered(Ch, sols.solutions, max_ded=2, runs=runs)
        if miss:
            misses.append(("free", n, Ch, miss[0]))
    dt = clock()
    passed = not misses and dt < 120
    record(4, passed, f"210 random honest derivations, {len(misses)} misses, {dt:.1f}s")
    assert passed, misses[:3]


def test_trace_determinism(D):
    clock = Clock()
    rng = random.Random(SEED)
    diff = 0
    for _ in range(50):
        C = random_closed(D, rng)
        ref = trace(C)
        assert ref, ref
        for _ in range(5):
            tr = trace(C, random_linear(C, rng))
            diff += not tr or tr.values != ref.values
    dt = clock()
    passed = diff == 0 and dt < 10
    record(5, passed, f"50 derivations x 5 linear extensions, {diff} differences, {dt:.2f}s")
    assert passed


def test_replacement_lemma(D):
    clock = Clock()
    rng = random.Random(SEED)
    c = Const("z")
    bad = used = 0
    while used < 100:
        S, sigma, t = random_replacement_case(rng, c)
        assert not any(c in constants(u) | constants(v) for u, v in S)
        if not satisfies(sigma, S, D):
            continue
        used += 1
        moved = {v: replace_const(u, c, t) for v, u in sigma.items()}
        bad += not satisfies(moved, S, D)
    dt = clock()
    passed = bad == 0 and dt < 10
    record(6, passed, f"{used} cases, {bad} failures, {dt:.2f}s")
    assert passed


def _system(C: Derivation, inputs):
    """Equations of ``C`` with its inputs bound to ground values."""
    x = {i: Var(f"s{i}") for i in C.kinds}
    S = []
    for i in C.linear():
        k = C.kinds[i]
        if isinstance(k, Memory):
            S.append((x[i], k.term))
        elif isinstance(k, Deduction):
            S.append((x[i], App(k.symbol, [x[a] for a in k.args])))
        elif isinstance(k, Reception):
            S.append((x[i], inputs[i]))
    return S


def test_stutter_free_proposition(D):
    clock = Clock()
    rng = random.Random(SEED)
    bad = 0
    for _ in range(100):
        C = random_deduction_asd(D, rng)
        inputs = {i: random_ground(D, rng, 3) for i in C.inputs}
        S = _system(C, inputs)
        sigma = unify_syntactic(S)
        bad += sigma is None
    dt = clock()
    passed = bad == 0 and dt < 10
    record(7, passed, f"100 deduction-only attacker derivations, {bad} unsatisfiable, {dt:.2f}s")
    assert passed


def test_equivalence_positive_and_negative(D, fixtures_dir):
    clock = Clock()
    f = lambda name: load_protocol(str(fixtures_dir / name), D)
    pos = check_equiv(f("secretA.prot"), f("secretB.prot"))
    A, B = f("leakA.prot"), f("leakB.prot")
    neg = check_equiv(A, B)
    ok_pos = isinstance(pos, Equivalent) and pos.complete
    ok_neg = isinstance(neg, Counterexample)
    shape = verdicts = False
    if ok_neg:
        deductions = 0 if neg.probe is None or neg.probe.kind == "eq" else 1
        shape = deductions <= 1
        a, b = replay(neg, A, B)
        verdicts = isinstance(a, Trace) and not isinstance(b, Trace)
    dt = clock()
    passed = ok_pos and ok_neg and shape and verdicts and dt < 15
    record(8, passed, f"hidden pair {pos}, published pair probe {getattr(neg, 'probe', None)}, "
                      f"opposite replay {verdicts}, {dt:.1f}s")
    assert passed


def test_ground_equivalence_vs_oracle(Dcore):
    clock = Clock()
    rng = random.Random(SEED)
    disagree = []
    for n in range(100):
        f1, f2 = random_frame_pair(rng)
        oracle = statically_equivalent(Dcore, f1, f2)
        A, B = frame_hsd(Dcore, f1), frame_hsd(Dcore, f2)
        res = ground_check_equiv(A, B)
        ours = isinstance(res, Equivalent)
        if ours != oracle:
            # a counterexample that replays is a distinguishing test beyond the oracle's size bound
            replays = not ours and [isinstance(r, Trace) for r in replay(res, A, B)] == [True, False]
            disagree.append((n, [str(t) for t in f1], [str(t) for t in f2], oracle, str(getattr(res, "probe", "")),
                             replays))
    dt = clock()
    passed = not disagree and dt < 60
    witnessed = sum(d[-1] for d in disagree)
    record(9, passed, f"100 frame pairs, {len(disagree)} disagreements ({witnessed} with a replayed witness), "
                      f"{dt:.1f}s")
    assert passed, disagree


def _cli(*args, cwd):
    r = subprocess.run([sys.executable, "-m", "symequiv", *args], capture_output=True, cwd=cwd)
    return r.returncode, r.stdout


def test_cli_determinism(fixtures_dir, tmp_path):
    thy = str(fixtures_dir / "dy.thy")
    fx = lambda n: str(fixtures_dir / n)
    runs = [
        ("check-sat", thy, fx("example.prot"), "--witness", "{w}"),
        ("check-equiv", thy, fx("leakA.prot"), fx("leakB.prot"), "--witness", "{w}"),
        ("check-equiv", thy, fx("leakA.prot"), fx("leakB.prot"), "--workers", "3", "--witness", "{w}"),
        ("check-equiv", thy, fx("secretA.prot"), fx("secretB.prot"), "--workers", "3"),
        ("solve", thy, fx("example.prot")),
    ]
    same = True
    outputs = []
    for k, cmd in enumerate(runs):
        seen = []
        for rep in range(3):
            w = tmp_path / f"w{k}_{rep}.json"
            code, out = _cli(*[a.format(w=w) for a in cmd], cwd=tmp_path)
            seen.append((code, out, w.read_bytes() if w.exists() else b""))
        same &= all(s == seen[0] for s in seen)
        outputs.append(seen[0])
    # the parallel probe check must match the sequential one
    same &= outputs[1] == outputs[2]
    record(10, same, f"{len(runs)} commands x 3 runs byte-identical: {same}")
    assert same
