"""Satisfiability and complete sets of solutions for honest derivations.

The procedure is a lazy-intruder constraint solver.  For every order in which
the attacker may feed the honest inputs, each input value becomes a
constraint "deducible at level j" where level j sees the visible outputs that
do not depend on inputs fed at position j or later.  Constraints are solved
by unification with known terms, composition with a public symbol, or
analysis of a known term with a destructor rule.  When only variables remain,
each is filled with a distinct fresh nonce and the recipes are replayed into a
stutter-free attacker derivation.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .derivation import (
    RECEPTION, Connection, Deduction, Derivation, DerivationError, Memory, Reception, Reuse,
    canonical_nonce_map, check, connect, find_embedding, rename_nonces, renumber, trace,
)
from .terms import (
    App, Const, DeductionSystem, Term, TermError, Var, apply_subst, compose, rename_apart,
    variables,
)
from .unification import NarrowingLimit, e_unify, unify_syntactic


@dataclass
class SolverConfig:
    max_deductions: Optional[int] = None
    narrowing_depth: int = 12
    max_connections: int = 5000
    seed: int = 0
    leq_budget: int = 3

    def __post_init__(self):
        if self.max_deductions is not None and self.max_deductions < 0:
            raise ValueError("max_deductions must be non-negative")
        if self.narrowing_depth <= 0 or self.max_connections <= 0:
            raise ValueError("solver bounds must be positive")


@dataclass(frozen=True)
class Solution:
    """An attacker derivation and its connection to the honest derivation.

    ``phi.left`` maps honest inputs to attacker states, ``phi.right`` maps
    attacker receptions to honest outputs.
    """

    asd: Derivation
    phi: Connection

    def key(self):
        return (self.asd.counts(), self.asd.key(), self.phi)


@dataclass
class SolutionSet:
    solutions: List[Solution] = field(default_factory=list)
    complete: bool = True
    note: str = ""

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)

    def __bool__(self):
        return bool(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


class _NotClosed:
    def __bool__(self):
        return False

    def __repr__(self):
        return "NotClosed"


NotClosed = _NotClosed()


def membership(Ch: Derivation, CI: Derivation, phi: Connection):
    """True iff ``Ch o_phi CI`` is closed and satisfiable; ``NotClosed`` if inputs remain."""
    C = connect(Ch, CI, phi)
    if not C.closed:
        return NotClosed
    return bool(trace(C))


def solution_trace(Ch: Derivation, sol: Solution):
    return trace(connect(Ch, sol.asd, sol.phi))


# -- ordering on solutions -------------------------------------------------------


def solution_leq(s1: Solution, s2: Solution, budget: int = 3) -> bool:
    """``s1 <= s2`` with both attached to the same honest derivation."""
    r2: Dict[int, List[int]] = {}
    for r, o in s2.phi.right:
        r2.setdefault(o, []).append(r)
    inputs = {r: r2.get(o, []) for r, o in s1.phi.right}
    left2 = s2.phi.left_map
    sends = []
    for i, s in s1.phi.left:
        if i not in left2:
            return False
        sends.append((s, left2[i]))
    return find_embedding(s1.asd, s2.asd, budget, inputs=inputs, sends=sends) is not None


def canonical_solution(sol: Solution) -> Solution:
    """Renumber consecutively from 0 and rename nonces to ~n1, ~n2, ..."""
    asd, m = renumber(rename_nonces(sol.asd, canonical_nonce_map(sol.asd)))
    phi = Connection.of({i: m[s] for i, s in sol.phi.left}, {m[r]: o for r, o in sol.phi.right})
    return Solution(asd, phi)


def minimize(sols: Sequence[Solution], budget: int = 3) -> List[Solution]:
    ordered = sorted(sols, key=_sort_key)
    kept: List[Solution] = []
    for s in ordered:
        if any(solution_leq(k, s, budget) for k in kept):
            continue
        kept.append(s)
    return kept


def _sort_key(sol: Solution):
    d, n = sol.asd.counts()
    return (d, n, repr(sol.asd), sol.phi.left, sol.phi.right)


# -- honest side -------------------------------------------------------------------


def _symbolic_values(Ch: Derivation, D: DeductionSystem) -> Dict[int, Term]:
    vals: Dict[int, Term] = {}
    for i in Ch.linear():
        k = Ch.kinds[i]
        if isinstance(k, Memory):
            vals[i] = D.normalize(k.term)
        elif isinstance(k, Reception):
            vals[i] = Var(f"_x{i}")
        elif isinstance(k, Deduction):
            vals[i] = D.simplify(App(k.symbol, [vals[a] for a in k.args]))
        else:
            vals[i] = vals[k.source]
    return vals


def _subst_vals(vals, sigma, D):
    return {i: D.simplify(apply_subst(sigma, t)) for i, t in vals.items()}


def _variants(Ch: Derivation, vals: Dict[int, Term], sigma, D: DeductionSystem):
    """Branch on whether each open destructor application reduces or stays stuck."""
    ded = [i for i in Ch.linear() if isinstance(Ch.kinds[i], Deduction)]
    out = []

    def go(n, sigma):
        if n == len(ded):
            out.append(sigma)
            return
        t = D.simplify(apply_subst(sigma, vals[ded[n]]))
        if t.ground or not t.is_app:
            go(n + 1, sigma)
            return
        for rule in D.rewrite.rules_for(t.fn):
            ren = rename_apart([rule.lhs], "_w")
            theta = unify_syntactic([(t, apply_subst(ren, rule.lhs))])
            if theta is not None:
                go(n + 1, compose(sigma, theta))
        go(n + 1, sigma)

    go(0, sigma)
    # restrict to honest variables
    keep = {v for t in vals.values() for v in variables(t)}
    seen, res = set(), []
    for s in out:
        s = {x: u for x, u in s.items() if x in keep}
        key = tuple(sorted((x.name, str(u)) for x, u in s.items()))
        if key not in seen:
            seen.add(key)
            res.append(s)
    return res


def input_orders(Ch: Derivation, cap: int) -> Tuple[List[Tuple[int, ...]], bool]:
    """Linear extensions of the honest inputs, lexicographic; flag is False at the cap."""
    ins = Ch.inputs
    res: List[Tuple[int, ...]] = []

    def go(prefix, rest):
        if len(res) >= cap:
            return
        if not rest:
            res.append(tuple(prefix))
            return
        for i in rest:
            if any(Ch.before(j, i) for j in rest if j != i):
                continue
            go(prefix + [i], [j for j in rest if j != i])

    go([], sorted(ins))
    exhausted = len(res) >= cap and _count_extensions(Ch, ins, cap + 1) > cap
    return res, not exhausted


def _count_extensions(Ch, ins, limit):
    n = 0
    for p in itertools.permutations(sorted(ins)):
        if all(not Ch.before(p[b], p[a]) for a in range(len(p)) for b in range(a + 1, len(p))):
            n += 1
            if n >= limit:
                break
    return n


# -- constraint search ---------------------------------------------------------------


@dataclass
class _Know:
    term: Term
    level: int
    recipe: tuple           # ("o", output) or ("d", symbol, refs)


@dataclass
class _State:
    sigma: Dict[Var, Term]
    cons: List[Tuple[Term, int, int]]        # (term, level, constraint id)
    know: List[_Know]
    recipes: Dict[int, tuple]                # cid -> ("k", idx) | ("f", symbol, cids)
    marks: Dict[tuple, int]                  # analysis mark -> level
    steps: int
    next_cid: int
    last_an: Optional[tuple] = None          # mark of a directly preceding binding-free analysis

    def copy(self) -> "_State":
        return _State(dict(self.sigma), list(self.cons), [_Know(k.term, k.level, k.recipe) for k in self.know],
                      dict(self.recipes), dict(self.marks), self.steps, self.next_cid, None)


class _Search:
    def __init__(self, D: DeductionSystem, max_steps: int):
        self.D = D
        self.max_steps = max_steps
        self.exhausted = False
        self.rules = [(n, r) for n, r in enumerate(D.rewrite.rules) if D.is_public(r.lhs.fn)]

    def _apply(self, st: _State, theta) -> Optional[_State]:
        if not theta:
            return st
        D = self.D
        st.sigma = compose(st.sigma, theta)
        st.cons = [(D.simplify(apply_subst(theta, t)), l, c) for t, l, c in st.cons]
        for k in st.know:
            k.term = D.simplify(apply_subst(theta, k.term))
        return st

    def run(self, st: _State) -> Iterator[_State]:
        pending = [(l, n) for n, (t, l, c) in enumerate(st.cons) if not t.is_var]
        if not pending:
            yield st
            return
        _, n = min(pending)
        t, L, cid = st.cons[n]
        # unify with a known term
        for idx, k in enumerate(st.know):
            if k.level > L or k.term.is_var:
                continue
            theta = unify_syntactic([(t, k.term)])
            if theta is None:
                continue
            nst = st.copy()
            del nst.cons[n]
            nst.recipes[cid] = ("k", idx)
            yield from self.run(self._apply(nst, theta))
        # recomputing a value already known would not be well-formed
        if not variables(t) and any(k.term is t and k.level <= L for k in st.know):
            return
        if st.steps >= self.max_steps:
            self.exhausted = True
            return
        # compose
        if t.is_app and self.D.is_public(t.fn):
            nst = st.copy()
            del nst.cons[n]
            kids = []
            for a in t.args:
                nst.cons.append((a, L, nst.next_cid))
                kids.append(nst.next_cid)
                nst.next_cid += 1
            nst.recipes[cid] = ("f", t.fn, tuple(kids))
            nst.steps += 1
            yield from self.run(nst)
        # analyse a known term
        for idx, k in enumerate(st.know):
            if k.level > L or not k.term.is_app:
                continue
            for rn, rule in self.rules:
                for q, p in enumerate(rule.lhs.args):
                    if not p.is_app or p.fn != k.term.fn:
                        continue
                    mark = (idx, rn, q)
                    if st.marks.get(mark, L + 1) <= L:
                        continue
                    ren = rename_apart([rule.lhs], "_a")
                    lhs, rhs = apply_subst(ren, rule.lhs), apply_subst(ren, rule.rhs)
                    theta = unify_syntactic([(k.term, lhs.args[q])])
                    if theta is None:
                        continue
                    nst = st.copy()
                    nst.marks[mark] = L
                    refs = []
                    for j, pj in enumerate(lhs.args):
                        if j == q:
                            refs.append(("k", idx))
                        else:
                            nst.cons.append((self.D.simplify(apply_subst(theta, pj)), L, nst.next_cid))
                            refs.append(("c", nst.next_cid))
                            nst.next_cid += 1
                    result = self.D.simplify(apply_subst(theta, rhs))
                    glob = {x: u for x, u in theta.items() if not x.name.startswith("_a")}
                    if not glob and any(e.term is result and e.level <= L for e in st.know):
                        continue
                    # binding-free analyses commute: take them in mark order
                    if not glob and st.last_an is not None and mark <= st.last_an:
                        continue
                    if not glob:
                        nst.last_an = mark
                    nst.know.append(_Know(result, L, ("d", rule.lhs.fn, tuple(refs))))
                    nst.steps += 1
                    yield from self.run(self._apply(nst, theta))


# -- replay into an attacker derivation --------------------------------------------------


class _Builder:
    def __init__(self, D: DeductionSystem):
        self.D = D
        self.states: List[Tuple[int, object]] = []
        self.by_value: Dict[Term, int] = {}
        self.left: Dict[int, int] = {}
        self.right: Dict[int, int] = {}
        self.sent: set = set()
        self.last_send = -1

    def new(self, kind) -> int:
        i = len(self.states)
        self.states.append((i, kind))
        return i

    def receive(self, o: int, value: Term):
        if value in self.by_value:
            return
        r = self.new(RECEPTION)
        self.right[r] = o
        self.by_value[value] = r

    def build(self, node, value_of) -> int:
        v = value_of(node)
        hit = self.by_value.get(v)
        if hit is not None:
            return hit
        if node[0] == "n":
            i = self.new(Memory(node[1]))
        elif node[0] == "o":
            raise DerivationError("solver-internal", f"output {node[1]} used before reception")
        else:
            args = tuple(self.build(a, value_of) for a in node[2])
            hit = self.by_value.get(v)
            if hit is not None:
                return hit
            i = self.new(Deduction(node[1], args))
        self.by_value[v] = i
        return i

    def send(self, inp: int, s: int):
        if s in self.sent or s < self.last_send:
            s = self.new(Reuse(s))
        self.sent.add(s)
        self.last_send = s
        self.left[inp] = s

    def finish(self) -> Tuple[Derivation, Connection]:
        kinds = dict(self.states)
        used = set(self.sent)
        changed = True
        live = set(used)
        while changed:
            changed = False
            for i in list(live):
                k = kinds[i]
                refs = k.args if isinstance(k, Deduction) else (k.source,) if isinstance(k, Reuse) else ()
                for a in refs:
                    if a not in live:
                        live.add(a)
                        changed = True
        keep = [i for i, _ in self.states if i in live]
        m = {i: n for n, i in enumerate(keep)}

        def ren(k):
            if isinstance(k, Deduction):
                return Deduction(k.symbol, tuple(m[a] for a in k.args))
            if isinstance(k, Reuse):
                return Reuse(m[k.source])
            return k

        states = [(m[i], ren(kinds[i])) for i in keep]
        idx = list(range(len(keep)))
        asd = Derivation(states, list(zip(idx, idx[1:])), {i: 1 for i in idx}, (), self.D)
        phi = Connection.of({i: m[s] for i, s in self.left.items()},
                            {m[r]: o for r, o in self.right.items() if r in m})
        return asd, phi


class _Cyclic(Exception):
    pass


def _resolve(st: _State, fill: Dict[Var, Term]):
    """Ground recipe trees: ("o", output) | ("n", nonce) | ("f", symbol, children)."""
    cons_term = {c: t for t, _, c in st.cons}
    memo: Dict[tuple, tuple] = {}
    active: set = set()

    def enter(key):
        # a constraint solved by a term derived from itself
        if key in active:
            raise _Cyclic()
        active.add(key)

    def ref(r):
        if r[0] == "k":
            return know(r[1])
        return cid(r[1])

    def know(idx):
        key = ("k", idx)
        if key not in memo:
            enter(key)
            rec = st.know[idx].recipe
            memo[key] = ("o", rec[1]) if rec[0] == "o" else ("f", rec[1], tuple(ref(a) for a in rec[2]))
            active.discard(key)
        return memo[key]

    def cid(c):
        key = ("c", c)
        if key not in memo:
            enter(key)
            r = st.recipes.get(c)
            if r is None:
                t = cons_term[c]
                memo[key] = ("n", fill[t])
            elif r[0] == "k":
                memo[key] = know(r[1])
            else:
                memo[key] = ("f", r[1], tuple(cid(a) for a in r[2]))
            active.discard(key)
        return memo[key]

    return cid


def _outputs_in(node, acc):
    if node[0] == "o":
        acc.add(node[1])
    elif node[0] == "f":
        for a in node[2]:
            _outputs_in(a, acc)
    return acc


# -- top level ------------------------------------------------------------------------


def default_bound(Ch: Derivation) -> int:
    return len(Ch.visible_outputs) + len(Ch.inputs) + 4


def _hsd_check(Ch: Derivation):
    if Ch.D is None:
        raise DerivationError("no-theory", "derivation carries no deduction system")
    check(Ch, "hsd")


def solve_raw(Ch: Derivation, cfg: Optional[SolverConfig] = None) -> SolutionSet:
    """All solutions found by the search, before minimization."""
    cfg = cfg or SolverConfig()
    _hsd_check(Ch)
    D = Ch.D
    bound = cfg.max_deductions if cfg.max_deductions is not None else default_bound(Ch)
    vals0 = _symbolic_values(Ch, D)
    tests = [(vals0[a], vals0[b]) for a, b in Ch.tests]
    complete = True
    try:
        sigmas = e_unify(tests, D, cfg.narrowing_depth) if tests else [{}]
    except NarrowingLimit:
        return SolutionSet([], False, "narrowing depth cap reached")
    orders, ok = input_orders(Ch, cfg.max_connections)
    complete &= ok
    visible = Ch.visible_outputs
    found: Dict[tuple, Solution] = {}
    seen: set = set()
    for sigma0 in sigmas:
        for sigma in _variants(Ch, vals0, sigma0, D):
            vals = _subst_vals(vals0, sigma, D)
            for order in orders:
                pos = {i: n for n, i in enumerate(order)}
                avail = {}
                for o in visible:
                    deps = [pos[i] for i in order if i == o or Ch.before(i, o)]
                    avail[o] = 1 + max(deps) if deps else 0
                st = _State({}, [], [], {}, {}, 0, 0)
                for o in visible:
                    if avail[o] <= len(order) - 1 or not order:
                        st.know.append(_Know(vals[o], avail[o], ("o", o)))
                for n, i in enumerate(order):
                    st.cons.append((vals[i], n, n))
                st.next_cid = len(order)
                search = _Search(D, bound)
                for leaf in search.run(st):
                    sol = _replay(Ch, D, vals, order, avail, leaf, seen)
                    if sol is not None:
                        found.setdefault(sol.key(), sol)
                complete &= not search.exhausted
    return SolutionSet(list(found.values()), complete, "" if complete else f"deduction bound {bound} reached")


def _replay(Ch, D, vals, order, avail, st: _State, seen: Optional[set] = None) -> Optional[Solution]:
    free = set()
    for t, _, _ in st.cons:
        free |= variables(t)
    for k in st.know:
        free |= variables(k.term)
    for i in order:
        free |= variables(apply_subst(st.sigma, vals[i]))
    fill = {x: Const(f"s{n}", nonce=True) for n, x in enumerate(sorted(free, key=lambda v: v.name))}
    full = compose(st.sigma, fill)
    ground = {}
    for o, t in vals.items():
        try:
            ground[o] = D.normalize(apply_subst(full, t))
        except TermError:
            return None
    cid = _resolve(st, fill)
    try:
        roots = [cid(n) for n in range(len(order))]
    except _Cyclic:
        return None
    memo: Dict[tuple, Term] = {}

    def value_of(node):
        v = memo.get(node)
        if v is None:
            if node[0] == "o":
                v = ground[node[1]]
            elif node[0] == "n":
                v = node[1]
            else:
                v = D.normalize(App(node[1], [value_of(a) for a in node[2]]))
            memo[node] = v
        return v

    needed = set()
    for r in roots:
        _outputs_in(r, needed)
    if seen is not None:
        # many leaves replay to the same recipes
        key = (order, tuple(roots), tuple(sorted((o, ground[o]) for o in needed)),
               tuple(ground[i] for i in order))
        if key in seen:
            return None
        seen.add(key)
    b = _Builder(D)
    lin = Ch.linear()
    for level, inp in enumerate(order):
        for o in lin:
            if o in needed and avail[o] == level:
                b.receive(o, ground[o])
        s = b.build(roots[level], value_of)
        b.send(inp, s)
    if not order:
        return Solution(Derivation([], (), {}, (), D), Connection())
    asd, phi = b.finish()
    try:
        if not membership(Ch, asd, phi):
            return None
    except DerivationError:
        return None
    return canonical_solution(Solution(asd, phi))


def solve_complete(Ch: Derivation, cfg: Optional[SolverConfig] = None) -> SolutionSet:
    """A finite complete set of stutter-free solutions, minimized and sorted."""
    cfg = cfg or SolverConfig()
    raw = solve_raw(Ch, cfg)
    return SolutionSet(minimize(raw.solutions, cfg.leq_budget), raw.complete, raw.note)


@dataclass
class SatResult:
    status: str                    # "sat", "unsat" or "unknown"
    witness: Optional[Solution] = None
    note: str = ""

    def __bool__(self):
        return self.status == "sat"


def is_ground_hsd(Ch: Derivation) -> bool:
    """Every unifier of the honest system fixes all inputs to ground terms."""
    D = Ch.D
    vals = _symbolic_values(Ch, D)
    tests = [(vals[a], vals[b]) for a, b in Ch.tests]
    try:
        sigmas = e_unify(tests, D) if tests else [{}]
    except NarrowingLimit:
        return False
    if len(sigmas) != 1:
        return False
    return all(apply_subst(sigmas[0], vals[i]).ground for i in Ch.inputs)


def check_sat(Ch: Derivation, cfg: Optional[SolverConfig] = None, ground: bool = False) -> SatResult:
    cfg = cfg or SolverConfig()
    _hsd_check(Ch)
    if ground and not is_ground_hsd(Ch):
        raise DerivationError("not-ground", "ground mode requires a ground honest derivation")
    sols = solve_complete(Ch, cfg)
    if sols:
        return SatResult("sat", sols[0])
    if not sols.complete:
        return SatResult("unknown", None, sols.note)
    return SatResult("unsat")
