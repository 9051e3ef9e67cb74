"""Symbolic derivations: honest and attacker agents as sequences of states.

A derivation is indexed by integers with an explicit strict partial order.
Each state is a memory state (a ground knowledge term), a deduction (a public
symbol applied to earlier states), a re-use of an earlier state, or a
reception.  Variables are implicit: state ``i`` carries ``x_i`` and a re-use
carries the variable of the state it re-uses, so test equations are pairs of
indices.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import count
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .terms import (
    App, Const, DeductionSystem, Term, TermError, nonces_of, rename_consts, subterms,
)


class DerivationError(ValueError):
    def __init__(self, code: str, msg: str):
        self.code = code
        super().__init__(f"[{code}] {msg}")


@dataclass(frozen=True)
class Memory:
    term: Term


@dataclass(frozen=True)
class Deduction:
    symbol: str
    args: Tuple[int, ...]


@dataclass(frozen=True)
class Reuse:
    source: int


@dataclass(frozen=True)
class Reception:
    pass


RECEPTION = Reception()
Kind = Union[Memory, Deduction, Reuse, Reception]


def _closure(nodes: Iterable[int], edges: Iterable[Tuple[int, int]]) -> FrozenSet[Tuple[int, int]]:
    succ: Dict[int, set] = {n: set() for n in nodes}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
        succ.setdefault(b, set())
    out = set()
    for n in succ:
        seen = set()
        stack = list(succ[n])
        while stack:
            m = stack.pop()
            if m in seen:
                continue
            seen.add(m)
            stack.extend(succ[m])
        out.update((n, m) for m in seen)
    return frozenset(out)


def _refs(kind: Kind) -> Tuple[int, ...]:
    if isinstance(kind, Deduction):
        return kind.args
    if isinstance(kind, Reuse):
        return (kind.source,)
    return ()


def _rename_kind(kind: Kind, f) -> Kind:
    if isinstance(kind, Deduction):
        return Deduction(kind.symbol, tuple(f(a) for a in kind.args))
    if isinstance(kind, Reuse):
        return Reuse(f(kind.source))
    return kind


class Derivation:
    """An immutable symbolic derivation ``(V, S, K, In, Out)`` over ``(Ind, <)``.

    ``order`` may be given as any generating set of pairs ``(a, b)`` meaning
    ``a < b``; edges implied by deduction arguments and re-use sources are
    added automatically.
    """

    __slots__ = ("states", "kinds", "order", "out", "tests", "D", "_lin")

    def __init__(self, states: Sequence[Tuple[int, Kind]], order: Iterable[Tuple[int, int]] = (),
                 out: Union[Mapping[int, int], Iterable[int]] = (), tests: Iterable[Tuple[int, int]] = (),
                 D: Optional[DeductionSystem] = None):
        self.states = tuple(states)
        self.kinds: Dict[int, Kind] = {}
        for i, k in self.states:
            self.kinds.setdefault(i, k)
        edges = set(order)
        for i, k in self.kinds.items():
            for a in _refs(k):
                edges.add((a, i))
        self.order = _closure(self.kinds, edges)
        if isinstance(out, Mapping):
            self.out = Counter({i: m for i, m in out.items() if m > 0})
        else:
            self.out = Counter(out)
        self.tests = tuple(tests)
        self.D = D
        self._lin = None

    # -- views ---------------------------------------------------------------

    @property
    def indices(self) -> List[int]:
        return sorted(self.kinds)

    @property
    def inputs(self) -> List[int]:
        return [i for i in self.indices if isinstance(self.kinds[i], Reception)]

    @property
    def knowledge(self) -> List[Term]:
        seen, out = set(), []
        for i in self.linear():
            k = self.kinds[i]
            if isinstance(k, Memory) and k.term not in seen:
                seen.add(k.term)
                out.append(k.term)
        return out

    def kind(self, i: int) -> Kind:
        return self.kinds[i]

    def before(self, a: int, b: int) -> bool:
        return (a, b) in self.order

    def origin(self, i: int) -> int:
        seen = set()
        while isinstance(self.kinds.get(i), Reuse):
            if i in seen:
                raise DerivationError("reuse-cycle", f"re-use cycle at {i}")
            seen.add(i)
            i = self.kinds[i].source
        return i

    def var(self, i: int) -> str:
        return f"x{self.origin(i)}"

    @property
    def closed(self) -> bool:
        return not self.inputs

    @property
    def visible_outputs(self) -> List[int]:
        return [i for i in self.linear() if self.out.get(i, 0) >= 2 and i in self.kinds]

    def linear(self, key=None) -> List[int]:
        """Smallest-first topological order (deterministic linear extension)."""
        if key is None and self._lin is not None:
            return list(self._lin)
        import heapq
        preds = {i: 0 for i in self.kinds}
        succ: Dict[int, List[int]] = {i: [] for i in self.kinds}
        for a, b in self.order:
            if a in preds and b in preds:
                preds[b] += 1
                succ[a].append(b)
        kf = key or (lambda i: i)
        heap = [(kf(i), i) for i, n in preds.items() if n == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            _, i = heapq.heappop(heap)
            out.append(i)
            for j in succ[i]:
                preds[j] -= 1
                if preds[j] == 0:
                    heapq.heappush(heap, (kf(j), j))
        if len(out) != len(preds):
            raise DerivationError("order-cycle", "the state order is cyclic")
        if key is None:
            self._lin = tuple(out)
        return out

    def equations(self) -> List[Tuple[str, str]]:
        """The unification system in printable form."""
        eqs = []
        for i in self.linear():
            k = self.kinds[i]
            if isinstance(k, Memory):
                eqs.append((self.var(i), str(k.term)))
            elif isinstance(k, Deduction):
                eqs.append((self.var(i), f"{k.symbol}({','.join(self.var(a) for a in k.args)})"))
        for a, b in self.tests:
            eqs.append((self.var(a), self.var(b)))
        return eqs

    def replace(self, **kw) -> "Derivation":
        args = dict(states=self.states, order=self.order, out=self.out, tests=self.tests, D=self.D)
        args.update(kw)
        return Derivation(**args)

    def counts(self) -> Tuple[int, int]:
        """(number of deduction states, number of states)."""
        return (sum(isinstance(k, Deduction) for k in self.kinds.values()), len(self.kinds))

    def __repr__(self):
        parts = []
        for i in self.linear():
            k = self.kinds[i]
            if isinstance(k, Memory):
                s = f"{i}:mem {k.term}"
            elif isinstance(k, Deduction):
                s = f"{i}:{k.symbol}({','.join(map(str, k.args))})"
            elif isinstance(k, Reuse):
                s = f"{i}:reuse {k.source}"
            else:
                s = f"{i}:in"
            if self.out.get(i):
                s += "!" * self.out[i]
            parts.append(s)
        tests = " ".join(f"{a}={b}" for a, b in self.tests)
        return f"<Derivation {' '.join(parts)}{' | ' + tests if tests else ''}>"

    def __eq__(self, other):
        return isinstance(other, Derivation) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def key(self):
        return (tuple(sorted(self.kinds.items(), key=lambda kv: kv[0])),
                tuple(sorted(self.order)), tuple(sorted(self.out.items())),
                tuple(sorted(tuple(sorted(t)) for t in self.tests)))


# -- validation -----------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    code: str
    index: Optional[int]
    message: str

    def __str__(self):
        return f"[{self.code}] {self.message}"


def validate(C: Derivation, role: Optional[str] = None) -> List[Diagnostic]:
    """All violated invariants of ``C``; ``role`` is None, ``"hsd"`` or ``"asd"``."""
    out: List[Diagnostic] = []
    seen: Dict[int, Kind] = {}
    for i, k in C.states:
        if i in seen and seen[i] != k:
            out.append(Diagnostic("multiple-kinds", i, f"state {i} declared with more than one kind"))
        seen.setdefault(i, k)
    if any((i, i) in C.order for i in C.kinds):
        out.append(Diagnostic("order-cycle", None, "the state order is cyclic"))
        return out
    D = C.D
    for i, k in C.kinds.items():
        for a in _refs(k):
            if a not in C.kinds:
                out.append(Diagnostic("unknown-index", i, f"state {i} refers to unknown state {a}"))
        if isinstance(k, Deduction):
            if D is not None:
                sym = D.symbols.get(k.symbol)
                if sym is None or not sym.public:
                    out.append(Diagnostic("not-public", i, f"state {i} applies non-public {k.symbol}"))
                elif sym.arity != len(k.args):
                    out.append(Diagnostic("arity", i, f"state {i}: {k.symbol} expects {sym.arity} arguments"))
        elif isinstance(k, Memory):
            if not k.term.ground:
                out.append(Diagnostic("memory-not-ground", i, f"memory state {i} holds open term {k.term}"))
        elif isinstance(k, Reuse):
            try:
                C.origin(i)
            except DerivationError:
                out.append(Diagnostic("reuse-cycle", i, f"re-use cycle at {i}"))
    for i in C.out:
        if i not in C.kinds:
            out.append(Diagnostic("out-unknown-index", i, f"output {i} is not a state"))
    for a, b in C.tests:
        if a not in C.kinds or b not in C.kinds:
            out.append(Diagnostic("test-unknown-index", None, f"test {a}={b} names unknown states"))
    for a, b in C.order:
        if a not in C.kinds or b not in C.kinds:
            out.append(Diagnostic("order-unknown-index", None, f"order edge {a}<{b} names unknown states"))
    if role == "hsd":
        for i, k in C.kinds.items():
            if isinstance(k, Memory) and nonces_of(k.term):
                out.append(Diagnostic("hsd-nonce", i, f"honest state {i} holds attacker nonce in {k.term}"))
    elif role == "asd":
        idx = C.indices
        for x in range(len(idx)):
            for y in range(x + 1, len(idx)):
                a, b = idx[x], idx[y]
                if not (C.before(a, b) or C.before(b, a)):
                    out.append(Diagnostic("asd-not-total", a, f"states {a} and {b} are unordered"))
                    break
            else:
                continue
            break
        for i in idx:
            if C.out.get(i, 0) < 1:
                out.append(Diagnostic("asd-output-missing", i, f"state {i} is not an output"))
        for i, k in C.kinds.items():
            if isinstance(k, Memory) and not (k.term.is_const and k.term.nonce):
                out.append(Diagnostic("asd-knowledge", i, f"attacker knowledge {k.term} is not a nonce"))
    return out


def check(C: Derivation, role: Optional[str] = None) -> Derivation:
    diags = validate(C, role)
    if diags:
        raise DerivationError(diags[0].code, diags[0].message)
    return C


def is_asd(C: Derivation) -> bool:
    return not validate(C, "asd")


def is_hsd(C: Derivation) -> bool:
    return not validate(C, "hsd")


# -- traces -------------------------------------------------------------------------


@dataclass
class Trace:
    values: Dict[int, Term]
    names: Dict[int, str] = field(default_factory=dict)

    def __getitem__(self, i):
        return self.values[i]

    def table(self) -> List[Tuple[str, str]]:
        return [(self.names.get(i, f"x{i}"), str(t)) for i, t in sorted(self.values.items())]


@dataclass
class Unsat:
    test: Tuple[int, int]
    left: Term
    right: Term

    def __bool__(self):
        return False

    def __str__(self):
        a, b = self.test
        return f"x{a} =? x{b} fails: {self.left} != {self.right}"


def evaluate(C: Derivation, linear: Optional[Sequence[int]] = None) -> Dict[int, Term]:
    """Ground normal value of every state of a closed derivation."""
    if not C.closed:
        raise DerivationError("not-closed", "trace requires a closed derivation")
    D = C.D
    vals: Dict[int, Term] = {}
    for i in (linear if linear is not None else C.linear()):
        k = C.kinds[i]
        if isinstance(k, Memory):
            vals[i] = D.normalize(k.term)
        elif isinstance(k, Deduction):
            vals[i] = D.normalize(App(k.symbol, [vals[a] for a in k.args]))
        elif isinstance(k, Reuse):
            vals[i] = vals[k.source]
    return vals


def trace(C: Derivation, linear: Optional[Sequence[int]] = None) -> Union[Trace, Unsat]:
    vals = evaluate(C, linear)
    for a, b in C.tests:
        if vals[a] is not vals[b]:
            return Unsat((a, b), vals[a], vals[b])
    return Trace(vals, {i: C.var(i) for i in vals})


# -- connection -------------------------------------------------------------------


@dataclass(frozen=True)
class Connection:
    """``left``: inputs of the first derivation to outputs of the second;
    ``right``: inputs of the second to outputs of the first."""

    left: Tuple[Tuple[int, int], ...] = ()
    right: Tuple[Tuple[int, int], ...] = ()

    @staticmethod
    def of(left: Optional[Mapping[int, int]] = None, right: Optional[Mapping[int, int]] = None) -> "Connection":
        return Connection(tuple(sorted((left or {}).items())), tuple(sorted((right or {}).items())))

    @property
    def left_map(self) -> Dict[int, int]:
        return dict(self.left)

    @property
    def right_map(self) -> Dict[int, int]:
        return dict(self.right)

    def swap(self) -> "Connection":
        return Connection(self.right, self.left)


@dataclass
class Connected:
    derivation: Derivation
    left_index: Dict[int, int]
    right_index: Dict[int, int]


def _check_monotone(C_in: Derivation, C_out: Derivation, phi: Mapping[int, int], side: str):
    dom = sorted(phi)
    for x in dom:
        for y in dom:
            if C_in.before(x, y) and C_out.before(phi[y], phi[x]):
                raise DerivationError("not-monotone", f"connection reverses {x}<{y} ({side})")


def connect_indexed(C1: Derivation, C2: Derivation, phi: Connection, offset: Optional[int] = None) -> Connected:
    """Connect two derivations; indices of ``C1`` are kept, those of ``C2`` shifted."""
    l, r = phi.left_map, phi.right_map
    for i, o in l.items():
        if not isinstance(C1.kinds.get(i), Reception):
            raise DerivationError("not-an-input", f"{i} is not an input of the first derivation")
        if o not in C2.kinds or C2.out.get(o, 0) < 1:
            raise DerivationError("not-an-output", f"{o} is not an output of the second derivation")
    for i, o in r.items():
        if not isinstance(C2.kinds.get(i), Reception):
            raise DerivationError("not-an-input", f"{i} is not an input of the second derivation")
        if o not in C1.kinds or C1.out.get(o, 0) < 1:
            raise DerivationError("not-an-output", f"{o} is not an output of the first derivation")
    used1, used2 = Counter(r.values()), Counter(l.values())
    for o, n in used1.items():
        if n > C1.out[o]:
            raise DerivationError("output-exhausted", f"output {o} connected {n} times")
    for o, n in used2.items():
        if n > C2.out[o]:
            raise DerivationError("output-exhausted", f"output {o} connected {n} times")
    _check_monotone(C1, C2, l, "first")
    _check_monotone(C2, C1, r, "second")

    if offset is None:
        top = max(C1.kinds, default=-1)
        offset = 0 if all(i > top for i in C2.kinds) else top + 1 - min(C2.kinds, default=0)
    m2 = {i: i + offset for i in C2.kinds}
    # representative of every index in the merged numbering
    rep: Dict[int, int] = {}
    for i, o in l.items():
        rep[i] = m2[o]
    for i, o in r.items():
        rep[m2[i]] = o

    def resolve(x: int) -> int:
        seen = set()
        while x in rep:
            if x in seen:
                raise DerivationError("connection-cycle", "inputs connected to each other in a cycle")
            seen.add(x)
            x = rep[x]
        return x

    removed = set(l) | {m2[i] for i in r}
    states: List[Tuple[int, Kind]] = []
    for i, k in C1.states:
        if i not in removed:
            states.append((i, _rename_kind(k, resolve)))
    for i, k in C2.states:
        j = m2[i]
        if j not in removed:
            states.append((j, _rename_kind(k, lambda a: resolve(m2[a]))))
    edges = {(resolve(a), resolve(b)) for a, b in C1.order}
    edges |= {(resolve(m2[a]), resolve(m2[b])) for a, b in C2.order}
    # states identified through a chain of connections collapse their edge
    edges = {(a, b) for a, b in edges if a != b}
    out: Counter = Counter()
    for i, m in C1.out.items():
        out[resolve(i)] += m - used1.get(i, 0)
    for i, m in C2.out.items():
        out[resolve(m2[i])] += m - used2.get(i, 0)
    tests = [(resolve(a), resolve(b)) for a, b in C1.tests]
    tests += [(resolve(m2[a]), resolve(m2[b])) for a, b in C2.tests]
    res = Derivation(states, edges, {i: m for i, m in out.items() if m > 0}, tests, C1.D or C2.D)
    if any((i, i) in res.order for i in res.kinds):
        raise DerivationError("order-cycle", "connection makes the order cyclic")
    return Connected(res, {i: resolve(i) for i in C1.kinds}, {i: resolve(m2[i]) for i in C2.kinds})


def connect(C1: Derivation, C2: Derivation, phi: Connection = Connection()) -> Derivation:
    return connect_indexed(C1, C2, phi).derivation


# -- opening, nonce renaming, canonical forms ---------------------------------------


def open_on(C: Derivation, Cs: Iterable[Const]) -> Derivation:
    Cs = list(Cs)
    if not Cs:
        return C
    K = C.knowledge
    for c in Cs:
        if not (c.is_const and c.nonce) or c not in K:
            raise DerivationError("open-precondition", f"{c} is not a nonce of the knowledge")
    rest = [t for t in K if t not in Cs]
    sub = set()
    for t in rest:
        sub |= subterms(t)
    for c in Cs:
        if c in sub:
            raise DerivationError("open-precondition", f"{c} occurs inside other knowledge")
    first: Dict[Const, int] = {}
    for i in C.linear():
        k = C.kinds[i]
        if isinstance(k, Memory) and k.term in Cs and k.term not in first:
            first[k.term] = i
    states = []
    for i, k in C.states:
        if isinstance(k, Memory) and k.term in first:
            k = RECEPTION if first[k.term] == i else Reuse(first[k.term])
        states.append((i, k))
    return C.replace(states=states)


def canonical_nonce_map(C: Derivation, prefix: str = "n") -> Dict[Const, Const]:
    mapping: Dict[Const, Const] = {}
    for i in C.linear():
        k = C.kinds[i]
        if isinstance(k, Memory):
            for u in _preorder(k.term):
                if u.is_const and u.nonce and u not in mapping:
                    mapping[u] = Const(f"{prefix}{len(mapping) + 1}", nonce=True)
    return mapping


def _preorder(t: Term):
    yield t
    if t.is_app:
        for a in t.args:
            yield from _preorder(a)


def rename_nonces(C: Derivation, mapping: Mapping[Const, Term]) -> Derivation:
    states = [(i, Memory(rename_consts(k.term, mapping)) if isinstance(k, Memory) else k)
              for i, k in C.states]
    return C.replace(states=states)


def canonicalize_nonces(C: Derivation) -> Derivation:
    return rename_nonces(C, canonical_nonce_map(C))


def renumber(C: Derivation, start: int = 0) -> Tuple[Derivation, Dict[int, int]]:
    """Renumber states consecutively along the canonical linear extension."""
    m = {i: start + n for n, i in enumerate(C.linear())}
    states = [(m[i], _rename_kind(k, m.__getitem__)) for i, k in C.states]
    states.sort(key=lambda s: s[0])
    order = {(m[a], m[b]) for a, b in C.order}
    out = {m[i]: n for i, n in C.out.items()}
    tests = sorted(tuple(sorted((m[a], m[b]))) for a, b in C.tests)
    return Derivation(states, order, out, tests, C.D), m


def nonce_equivalent(C1: Derivation, C2: Derivation) -> bool:
    return renumber(canonicalize_nonces(C1))[0] == renumber(canonicalize_nonces(C2))[0]


def chain(n_states: Sequence[int]) -> List[Tuple[int, int]]:
    return list(zip(n_states, n_states[1:]))


def asd(states: Sequence[Tuple[int, Kind]], tests=(), D=None, out=None) -> Derivation:
    """An attacker derivation totally ordered by the given state sequence."""
    idx = [i for i, _ in states]
    return Derivation(states, chain(idx), out if out is not None else {i: 1 for i in idx}, tests, D)


# -- ordering on attacker derivations ----------------------------------------------


def find_embedding(A1: Derivation, A2: Derivation, budget: int = 3,
                   inputs: Optional[Mapping[int, Sequence[int]]] = None,
                   sends: Sequence[Tuple[int, int]] = (), extra: int = 0) -> Optional[Dict[int, int]]:
    """Search for a witness of ``A1 <= A2``.

    Every non-reuse state of ``A1`` is mapped to a state of ``A2``: deductions
    to deductions of the same symbol over the mapped arguments, nonces either
    to nonces (an injective renaming) or, when opened, to any state produced by
    the context.  Receptions map to states listed in ``inputs`` when given
    (solution level), otherwise anywhere.  The unmatched deductions of ``A2``
    form the context and must number at most ``budget``.  With ``extra`` > 0,
    up to that many deductions of ``A1`` may map to new deductions appended
    to ``A2`` (the comparison against ``A2`` extended by a context).
    """
    core1 = [i for i in A1.linear() if not isinstance(A1.kinds[i], Reuse)]
    core2 = [i for i in A2.linear() if not isinstance(A2.kinds[i], Reuse)]
    o1, o2 = A1.origin, A2.origin
    ded2: Dict[Tuple[str, Tuple[int, ...]], List[int]] = {}
    for j in core2:
        k = A2.kinds[j]
        if isinstance(k, Deduction):
            ded2.setdefault((k.symbol, tuple(o2(a) for a in k.args)), []).append(j)
    mem2 = [j for j in core2 if isinstance(A2.kinds[j], Memory)]
    tests2 = {frozenset((o2(a), o2(b))) for a, b in A2.tests if o2(a) != o2(b)}
    n_ded2 = sum(isinstance(A2.kinds[j], Deduction) for j in core2)
    sends = [(o1(a), o2(b)) for a, b in sends]

    h: Dict[int, int] = {}
    strict: set = set()      # images that must stay injective
    rho: Dict[Const, Const] = {}
    virtual = [0]

    def finish() -> bool:
        for a, b in sends:
            if h.get(a) != b:
                return False
        mapped = {frozenset((h[o1(a)], h[o1(b)])) for a, b in A1.tests if o1(a) != o1(b)}
        if {m for m in mapped if len(m) == 2} != tests2:
            return False
        used = sum(isinstance(A2.kinds.get(j) if not isinstance(j, tuple) else None, Deduction)
                   for j in strict)
        return n_ded2 - used <= budget

    def go(n: int) -> bool:
        if n == len(core1):
            return finish()
        i = core1[n]
        k = A1.kinds[i]
        if isinstance(k, Deduction):
            key = (k.symbol, tuple(h[o1(a)] for a in k.args))
            cands = ded2.get(key, [])
            options = [(j, True) for j in cands if j not in strict]
            if not cands and virtual[0] < extra and ("v",) + key not in strict:
                options.append((("v",) + key, True))
        elif isinstance(k, Memory):
            t = k.term
            options = []
            for j in mem2:
                u = A2.kinds[j].term
                if j in strict:
                    continue
                if t.is_const and t.nonce:
                    if u.is_const and u.nonce and rho.get(t, u) is u and (t in rho or u not in rho.values()):
                        options.append((j, True))
                elif u is t:
                    options.append((j, True))
            if t.is_const and t.nonce:
                options += [(j, False) for j in core2 if not isinstance(A2.kinds[j], Memory) or j in strict]
                options += [(j, False) for j in mem2 if j not in strict and not any(o[0] == j for o in options)]
        else:
            allowed = core2 if inputs is None else [o2(j) for j in inputs.get(i, ())]
            options = [(j, inputs is not None) for j in allowed if not (inputs is not None and j in strict)]
        for j, injective in options:
            h[i] = j
            is_virtual = isinstance(j, tuple)
            virtual[0] += is_virtual
            added_rho = None
            if injective:
                strict.add(j)
                if isinstance(k, Memory) and k.term.is_const and k.term.nonce and k.term not in rho:
                    rho[k.term] = A2.kinds[j].term
                    added_rho = k.term
            if go(n + 1):
                return True
            virtual[0] -= is_virtual
            del h[i]
            if injective:
                strict.discard(j)
            if added_rho is not None:
                del rho[added_rho]
        return False

    return dict(h) if go(0) else None


def asd_leq(C1: Derivation, C2: Derivation, budget: int = 3) -> bool:
    """``C1 <= C2`` up to a context with at most ``budget`` deductions.

    False also covers "unknown within budget".
    """
    return find_embedding(C1, C2, budget) is not None


# -- well-formedness and decomposition ----------------------------------------------


def make_well_formed(CI: Derivation, values: Mapping[int, Term]) -> Derivation:
    """Add the equality tests and argument redirections that make ``CI`` well-formed.

    ``values`` is the trace of ``CI`` in its connection with an honest derivation.
    """
    lin = CI.linear()
    for i in lin:
        if i not in values:
            raise DerivationError("trace-mismatch", f"no trace value for state {i}")
    first: Dict[int, int] = {}
    tests = set(tuple(sorted(t)) for t in CI.tests)
    for pos, j in enumerate(lin):
        if isinstance(CI.kinds[j], Reuse):
            continue
        for i in lin[:pos]:
            if isinstance(CI.kinds[i], Deduction) and values[i] is values[j]:
                if CI.origin(i) != CI.origin(j):
                    tests.add(tuple(sorted((i, j))))
                    first.setdefault(j, i)
                break
    states = []
    for i, k in CI.states:
        if isinstance(k, Deduction):
            k = Deduction(k.symbol, tuple(first.get(a, a) for a in k.args))
        states.append((i, k))
    return CI.replace(states=states, tests=sorted(tests))


@dataclass
class Decomposition:
    deductions: Derivation
    testing: Derivation
    psi: Connection


def decompose(CI: Derivation, values: Optional[Mapping[int, Term]] = None) -> Decomposition:
    """Split ``CI`` into a deduction-only part and a testing part.

    With ``values`` (its trace), deductions repeating an earlier deduced value
    and used only by tests migrate to the testing part.
    """
    lin = CI.linear()
    used = {a for k in CI.kinds.values() for a in _refs(k)}
    migrate = []
    if values is not None:
        for pos, j in enumerate(lin):
            k = CI.kinds[j]
            if isinstance(k, Deduction) and j not in used and CI.out.get(j, 0) <= 1:
                if any(isinstance(CI.kinds[i], Deduction) and values[i] is values[j] for i in lin[:pos]):
                    migrate.append(j)
    keep = [i for i in lin if i not in migrate]
    d_states = [(i, CI.kinds[i]) for i in keep]
    d_out = {i: CI.out.get(i, 0) + 1 for i in keep}
    Cd = Derivation(d_states, [(a, b) for a, b in CI.order if a in keep and b in keep], d_out, (), CI.D)
    base = max(CI.kinds, default=-1) + 1
    tmap = {i: base + n for n, i in enumerate(lin)}
    t_states = []
    for i in lin:
        if i in migrate:
            k = CI.kinds[i]
            t_states.append((tmap[i], Deduction(k.symbol, tuple(tmap[a] for a in k.args))))
        else:
            t_states.append((tmap[i], RECEPTION))
    Ct = Derivation(t_states, chain([tmap[i] for i in lin]), {tmap[i]: 1 for i in lin},
                    [(tmap[a], tmap[b]) for a, b in CI.tests], CI.D)
    psi = Connection.of(right={tmap[i]: i for i in keep})
    return Decomposition(Cd, Ct, psi)


def remove_unused_reuse(C: Derivation, keep: Iterable[int] = ()) -> Derivation:
    """Drop re-use states that no equation, deduction or ``keep`` refers to."""
    keep = set(keep)
    used = {a for k in C.kinds.values() for a in _refs(k) if not isinstance(k, Reuse)}
    used |= {x for t in C.tests for x in t}
    drop = {i for i, k in C.kinds.items() if isinstance(k, Reuse) and i not in used and i not in keep}
    if not drop:
        return C
    return Derivation([(i, k) for i, k in C.states if i not in drop],
                      [(a, b) for a, b in C.order if a not in drop and b not in drop],
                      {i: m for i, m in C.out.items() if i not in drop}, C.tests, C.D)
