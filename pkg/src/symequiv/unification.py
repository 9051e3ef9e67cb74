"""Syntactic and equational unification over a convergent theory.

Equational unification is basic narrowing: rule left-hand sides are unified
with non-variable positions of the equation skeletons, and syntactic
unification closes each branch.  For subterm-convergent rules every narrowing
step shrinks the skeleton, so the search is finite.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from .terms import (
    App, Const, DeductionSystem, Substitution, Term, TermError, Var, apply_subst, compose,
    iter_subterms, match, positions, rename_apart, replace_at, subterm_at, variables,
)


class NarrowingLimit(RuntimeError):
    """The narrowing search exceeded its depth cap."""


@dataclass(frozen=True)
class Equation:
    left: Term
    right: Term

    def __str__(self):
        return f"{self.left} =? {self.right}"


UnificationSystem = List[Equation]


def _pairs(S) -> List[Tuple[Term, Term]]:
    return [(e.left, e.right) if isinstance(e, Equation) else tuple(e) for e in S]


def unify_syntactic(S) -> Optional[Substitution]:
    """Most general syntactic unifier of ``S`` (idempotent), or None."""
    sigma: Substitution = {}
    todo = list(_pairs(S))
    while todo:
        s, t = todo.pop()
        s, t = apply_subst(sigma, s), apply_subst(sigma, t)
        if s is t:
            continue
        if t.is_var and not s.is_var:
            s, t = t, s
        if s.is_var:
            if not t.ground and s in variables(t):
                return None
            sigma = compose(sigma, {s: t})
        elif s.is_app and t.is_app and s.fn == t.fn and len(s.args) == len(t.args):
            todo.extend(zip(s.args, t.args))
        else:
            return None
    return sigma


def _vars_of(S) -> set:
    vs = set()
    for l, r in _pairs(S):
        vs |= variables(l) | variables(r)
    return vs


def _restrict(sigma: Substitution, vs) -> Substitution:
    return {x: t for x, t in sigma.items() if x in vs}


def _instance_of(general: Substitution, special: Substitution, vs, D: DeductionSystem) -> bool:
    """``special`` is an E-instance of ``general`` on ``vs``.

    Variables of ``special`` are frozen into fresh constants, then the images
    of ``general`` are E-unified with them.
    """
    theta: Substitution = {}
    for x in sorted(vs, key=lambda v: v.name):
        theta = match(D.simplify(apply_subst(general, x)), D.simplify(apply_subst(special, x)), theta)
        if theta is None:
            break
    else:
        return True
    free = set()
    for x in vs:
        free |= variables(apply_subst(special, x))
    freeze = {v: Const(f"_sk_{v.name}") for v in free}
    eqs = [(apply_subst(general, x), D.normalize(apply_subst(freeze, apply_subst(special, x))))
           for x in sorted(vs, key=lambda v: v.name)]
    try:
        return bool(_narrow(eqs, D, 12, first=True))
    except NarrowingLimit:
        return False


def minimize_unifiers(sols: Sequence[Substitution], vs, D: DeductionSystem) -> List[Substitution]:
    kept: List[Substitution] = []
    for s in sols:
        if any(_instance_of(k, s, vs, D) for k in kept):
            continue
        kept = [k for k in kept if not _instance_of(s, k, vs, D)]
        kept.append(s)
    return kept


def _canon_key(sigma: Substitution):
    return tuple(sorted((x.name, str(t)) for x, t in sigma.items()))


def e_unify(S, D: DeductionSystem, depth_cap: int = 12) -> List[Substitution]:
    """A finite complete set of E-unifiers of ``S``, most general first."""
    return minimize_unifiers(_narrow(S, D, depth_cap), _vars_of(_pairs(S)), D)


def _narrow(S, D: DeductionSystem, depth_cap: int, first: bool = False) -> List[Substitution]:
    pairs = _pairs(S)
    vs = _vars_of(pairs)
    rules = D.rewrite
    start = tuple(pairs)
    queue = deque([(start, {}, 0)])
    seen = set()
    found: List[Substitution] = []
    found_keys = set()
    while queue:
        skel, sigma, depth = queue.popleft()
        inst = [(apply_subst(sigma, l), apply_subst(sigma, r)) for l, r in skel]
        key = (tuple((str(l), str(r)) for l, r in inst))
        if key in seen:
            continue
        seen.add(key)
        mgu = unify_syntactic(inst)
        if mgu is not None:
            sol = _restrict(compose(sigma, mgu), vs)
            k = _canon_key(sol)
            if k not in found_keys:
                found_keys.add(k)
                found.append(sol)
                if first:
                    return found
        for ei, (l, r) in enumerate(skel):
            for side, term in ((0, l), (1, r)):
                for p in positions(term):
                    u = subterm_at(term, p)
                    if not u.is_app:
                        continue
                    cands = rules.rules_for(u.fn)
                    if not cands:
                        continue
                    if depth >= depth_cap:
                        raise NarrowingLimit(f"narrowing depth cap {depth_cap} exceeded")
                    ui = apply_subst(sigma, u)
                    for rule in cands:
                        ren = rename_apart([rule.lhs], "_n")
                        lhs, rhs = apply_subst(ren, rule.lhs), apply_subst(ren, rule.rhs)
                        theta = unify_syntactic([(ui, lhs)])
                        if theta is None:
                            continue
                        new_term = replace_at(term, p, rhs)
                        new_pair = (new_term, r) if side == 0 else (l, new_term)
                        new_skel = skel[:ei] + (new_pair,) + skel[ei + 1:]
                        queue.append((new_skel, compose(sigma, theta), depth + 1))
    return found


def satisfies(sigma: Substitution, S, D: DeductionSystem) -> bool:
    for l, r in _pairs(S):
        a, b = apply_subst(sigma, l), apply_subst(sigma, r)
        if not (a.ground and b.ground):
            raise TermError("substitution does not ground the system")
        if D.normalize(a) is not D.normalize(b):
            return False
    return True


def is_more_general(sigma: Substitution, tau: Substitution, D: DeductionSystem) -> bool:
    """Decide ``sigma <=_i tau``: some theta makes ``sigma theta`` E-equal to ``tau``."""
    vs = set(sigma) | set(tau)
    eqs = []
    for x in sorted(vs, key=lambda v: v.name):
        target = apply_subst(tau, x)
        if not target.ground:
            raise TermError("is_more_general expects a ground tau")
        eqs.append((apply_subst(sigma, x), D.normalize(target)))
    return bool(_narrow(eqs, D, 12, first=True))
