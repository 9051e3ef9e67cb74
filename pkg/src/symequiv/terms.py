"""First-order terms, substitutions, the path ordering and normalization.

Terms are hash-consed: two structurally equal terms are the same object, so
``is``/``==`` comparisons are O(1) and subterm sets stay DAG-sized.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple


class TermError(ValueError):
    """Raised for malformed terms, bad positions and refused operations."""


class Term:
    __slots__ = ("_hash", "size", "ground", "_str", "__weakref__")

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return self._str

    def __str__(self):
        return self._str

    @property
    def is_var(self) -> bool:
        return False

    @property
    def is_const(self) -> bool:
        return False

    @property
    def is_app(self) -> bool:
        return False


_table: Dict[tuple, Term] = {}


class Var(Term):
    __slots__ = ("name",)

    def __new__(cls, name: str):
        key = ("v", name)
        t = _table.get(key)
        if t is None:
            t = object.__new__(cls)
            t.name = name
            t.size = 1
            t.ground = False
            t._str = "?" + name
            t._hash = hash(key)
            _table[key] = t
        return t

    @property
    def is_var(self):
        return True

    def __reduce__(self):
        return (Var, (self.name,))


class Const(Term):
    """A free constant.  ``nonce`` marks membership in the attacker's fresh space."""

    __slots__ = ("name", "nonce")

    def __new__(cls, name: str, nonce: bool = False):
        key = ("c", name, nonce)
        t = _table.get(key)
        if t is None:
            t = object.__new__(cls)
            t.name = name
            t.nonce = nonce
            t.size = 1
            t.ground = True
            t._str = ("~" + name) if nonce else name
            t._hash = hash(key)
            _table[key] = t
        return t

    @property
    def is_const(self):
        return True

    def __reduce__(self):
        return (Const, (self.name, self.nonce))


class App(Term):
    __slots__ = ("fn", "args")

    def __new__(cls, fn: str, args: Sequence[Term] = ()):
        args = tuple(args)
        key = ("a", fn, args)
        t = _table.get(key)
        if t is None:
            t = object.__new__(cls)
            t.fn = fn
            t.args = args
            t.size = 1 + sum(a.size for a in args)
            t.ground = all(a.ground for a in args)
            t._str = fn + "(" + ",".join(a._str for a in args) + ")" if args else fn + "()"
            t._hash = hash(key)
            _table[key] = t
        return t

    @property
    def is_app(self):
        return True

    def __reduce__(self):
        return (App, (self.fn, self.args))


def nonce(name: str) -> Const:
    return Const(name, nonce=True)


# -- structure ---------------------------------------------------------------

Position = Tuple[int, ...]
Substitution = Dict[Var, Term]


def subterms(t: Term) -> set:
    out = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if u in out:
            continue
        out.add(u)
        if u.is_app:
            stack.extend(u.args)
    return out


def iter_subterms(t: Term) -> Iterator[Term]:
    """Pre-order traversal, duplicates included."""
    yield t
    if t.is_app:
        for a in t.args:
            yield from iter_subterms(a)


def variables(t: Term) -> set:
    if t.ground:
        return set()
    return {u for u in subterms(t) if u.is_var}


def constants(t: Term) -> set:
    return {u for u in subterms(t) if u.is_const}


def nonces_of(t: Term) -> set:
    return {u for u in subterms(t) if u.is_const and u.nonce}


def positions(t: Term) -> List[Position]:
    out: List[Position] = [()]
    if t.is_app:
        for i, a in enumerate(t.args, start=1):
            out.extend((i,) + p for p in positions(a))
    return out


def subterm_at(t: Term, p: Position) -> Term:
    for i in p:
        if not t.is_app or not 1 <= i <= len(t.args):
            raise TermError(f"invalid position {p}")
        t = t.args[i - 1]
    return t


def replace_at(t: Term, p: Position, s: Term) -> Term:
    if not p:
        return s
    if not t.is_app or not 1 <= p[0] <= len(t.args):
        raise TermError(f"invalid position {p}")
    i = p[0] - 1
    args = list(t.args)
    args[i] = replace_at(args[i], p[1:], s)
    return App(t.fn, args)


def apply_subst(sigma: Mapping[Var, Term], t: Term) -> Term:
    if not sigma or t.ground:
        return t
    if t.is_var:
        return sigma.get(t, t)
    return App(t.fn, [apply_subst(sigma, a) for a in t.args])


def replace_const(t: Term, c: Const, s: Term) -> Term:
    """Replace every occurrence of the free constant ``c`` in ``t`` by ``s``."""
    if t is c:
        return s
    if t.is_app:
        return App(t.fn, [replace_const(a, c, s) for a in t.args])
    return t


def rename_consts(t: Term, mapping: Mapping[Const, Term]) -> Term:
    if t.is_const:
        return mapping.get(t, t)
    if t.is_app:
        return App(t.fn, [rename_consts(a, mapping) for a in t.args])
    return t


def compose(sigma: Mapping[Var, Term], tau: Mapping[Var, Term]) -> Substitution:
    """The substitution ``x -> (x sigma) tau``."""
    out = {x: apply_subst(tau, t) for x, t in sigma.items()}
    for x, t in tau.items():
        if x not in out:
            out[x] = t
    return {x: t for x, t in out.items() if t is not x}


def match(pattern: Term, t: Term, sigma: Optional[Substitution] = None) -> Optional[Substitution]:
    """Syntactic matching: ``pattern sigma == t`` or None."""
    sigma = dict(sigma) if sigma else {}
    stack = [(pattern, t)]
    while stack:
        p, u = stack.pop()
        if p.is_var:
            bound = sigma.get(p)
            if bound is None:
                sigma[p] = u
            elif bound is not u:
                return None
        elif p.is_const:
            if p is not u:
                return None
        else:
            if not u.is_app or u.fn != p.fn or len(u.args) != len(p.args):
                return None
            stack.extend(zip(p.args, u.args))
    return sigma


_fresh = itertools.count()


def fresh_var(prefix: str = "_v") -> Var:
    return Var(f"{prefix}{next(_fresh)}")


def rename_apart(terms: Iterable[Term], prefix: str = "_r") -> Substitution:
    vs = set()
    for t in terms:
        vs |= variables(t)
    return {v: fresh_var(prefix) for v in sorted(vs, key=lambda v: v.name)}


def term_sort_key(t: Term):
    return (t.size, t._str)


# -- signatures and rewriting ---------------------------------------------------


@dataclass(frozen=True)
class Symbol:
    name: str
    arity: int
    public: bool = True


@dataclass(frozen=True)
class Rule:
    lhs: Term
    rhs: Term

    def __str__(self):
        return f"{self.lhs} -> {self.rhs}"


class RewriteSystem:
    """A convergent rewrite system together with the precedence of its ordering.

    ``precedence`` lists function symbols from least to greatest.  Free
    constants sit below every function symbol, ``cmin`` below everything.
    """

    def __init__(self, rules: Sequence[Rule], precedence: Sequence[str] = (),
                 cmin: str = "cmin", max_steps: int = 10_000):
        self.rules = tuple(rules)
        self.precedence = tuple(precedence)
        self.cmin = Const(cmin)
        self.max_steps = max_steps
        self._rank = {f: i for i, f in enumerate(self.precedence)}
        self._by_head: Dict[str, List[Rule]] = {}
        for r in self.rules:
            if not r.lhs.is_app:
                raise TermError(f"rule left-hand side must be an application: {r}")
            if not variables(r.rhs) <= variables(r.lhs):
                raise TermError(f"rule introduces variables on the right: {r}")
            self._by_head.setdefault(r.lhs.fn, []).append(r)
        self._nf: Dict[Term, Term] = {}

    def rules_for(self, fn: str) -> List[Rule]:
        return self._by_head.get(fn, [])

    @property
    def defined_symbols(self) -> set:
        return set(self._by_head)

    # ordering

    def _prec(self, f: str, arity: int):
        r = self._rank.get(f)
        if r is not None:
            return (1, r, "")
        return (0, arity, f)

    def _const_key(self, c: Const):
        if c is self.cmin:
            return (0, 0, "")
        return (1, int(c.nonce), c.name)

    def greater(self, s: Term, t: Term) -> bool:
        if s is t:
            return False
        if s.is_var or t.is_var:
            # only the subterm case is decidable for open terms
            return s.is_app and t in subterms(s)
        if s.is_const:
            return t.is_const and self._const_key(s) > self._const_key(t)
        for a in s.args:
            if a is t or self.greater(a, t):
                return True
        if t.is_const:
            return True
        pf, pg = self._prec(s.fn, len(s.args)), self._prec(t.fn, len(t.args))
        if pf > pg:
            return all(self.greater(s, b) for b in t.args)
        if pf == pg:
            for a, b in zip(s.args, t.args):
                if a is not b:
                    if not self.greater(a, b):
                        return False
                    break
            else:
                if len(s.args) <= len(t.args):
                    return False
            return all(self.greater(s, b) for b in t.args)
        return False

    # normalization

    def _rewrite(self, t: Term, budget: List[int], memo: Optional[Dict[Term, Term]]) -> Term:
        if memo is not None:
            hit = memo.get(t)
            if hit is not None:
                return hit
        if not t.is_app:
            return t
        u = App(t.fn, [self._rewrite(a, budget, memo) for a in t.args]) if t.args else t
        for rule in self._by_head.get(u.fn, ()):
            sigma = match(rule.lhs, u)
            if sigma is not None:
                budget[0] -= 1
                if budget[0] < 0:
                    raise TermError("rewrite step cap exceeded; rule set may not terminate")
                res = self._rewrite(apply_subst(sigma, rule.rhs), budget, memo)
                break
        else:
            res = u
        if memo is not None:
            memo[t] = res
        return res

    def normalize(self, t: Term) -> Term:
        if not t.ground:
            raise TermError(f"cannot normalize non-ground term {t}")
        hit = self._nf.get(t)
        if hit is None:
            hit = self._rewrite(t, [self.max_steps], self._nf)
        return hit

    def simplify(self, t: Term) -> Term:
        """Rewrite an open term wherever a rule matches syntactically.

        Sound modulo the theory but not a normal form for every instance.
        """
        if t.ground:
            return self.normalize(t)
        return self._rewrite(t, [self.max_steps], None)


def lpo_greater(R: RewriteSystem, s: Term, t: Term) -> bool:
    if not (s.ground and t.ground):
        raise TermError("lpo_greater expects ground terms")
    return R.greater(s, t)


def normalize(R: RewriteSystem, t: Term) -> Term:
    return R.normalize(t)


@dataclass
class DeductionSystem:
    """Equational theory (as rewrite rules), signature and public symbols."""

    symbols: Dict[str, Symbol]
    rewrite: RewriteSystem
    sugar: Dict[str, Tuple[Tuple[Var, ...], Term]] = field(default_factory=dict)

    @property
    def public(self) -> List[Symbol]:
        return [s for s in self.symbols.values() if s.public]

    def is_public(self, fn: str) -> bool:
        s = self.symbols.get(fn)
        return s is not None and s.public

    def arity(self, fn: str) -> int:
        return self.symbols[fn].arity

    def normalize(self, t: Term) -> Term:
        return self.rewrite.normalize(t)

    def simplify(self, t: Term) -> Term:
        return self.rewrite.simplify(t)

    @property
    def cmin(self) -> Const:
        return self.rewrite.cmin

    def check(self, t: Term) -> None:
        """Raise unless every application respects its symbol's arity."""
        for u in iter_subterms(t):
            if u.is_app:
                s = self.symbols.get(u.fn)
                if s is None:
                    raise TermError(f"undeclared symbol {u.fn}")
                if s.arity != len(u.args):
                    raise TermError(f"{u.fn} expects {s.arity} arguments, got {len(u.args)}")

    def restricted(self, names: Iterable[str]) -> "DeductionSystem":
        """The sub-system over ``names``; rules mentioning other symbols are dropped."""
        keep = set(names)
        rules = [r for r in self.rewrite.rules
                 if {u.fn for u in iter_subterms(r.lhs) if u.is_app} <= keep]
        rs = RewriteSystem(rules, [f for f in self.rewrite.precedence if f in keep],
                           self.rewrite.cmin.name, self.rewrite.max_steps)
        return DeductionSystem({n: s for n, s in self.symbols.items() if n in keep}, rs,
                               {n: d for n, d in self.sugar.items()
                                if {u.fn for u in iter_subterms(d[1]) if u.is_app} <= keep})
