"""Alice-and-Bob narrations compiled to honest derivations.

A narration file::

    fresh Na
    A -> B : penc(Na, pk(B))
    B -> A : penc(f(Na), pk(A))
    where
      A knows A, B, pk(B), pk(A), sk(A)
      B knows A, B, pk(A), pk(B), sk(B)
      A checks f(Na)
    publish A, B, pk(A), pk(B)
    analyse B

Each role becomes a totally ordered honest derivation numbered from 1:
knowledge in memory states, then for every message line a reception
followed by the deductions that take it apart, or the deductions that build
it.  ``X checks t`` rebuilds ``t`` from other values and compares it with the
copy of ``t`` that came in a message; the comparison is placed after the
role's replies to that message.  ``publish`` lists the attacker's initial
knowledge and ``analyse`` picks the roles put in parallel with it.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..derivation import RECEPTION, Deduction, Derivation, DerivationError, Memory, chain, check
from ..terms import Const, DeductionSystem, Term, apply_subst, match, rename_apart, subterms
from .syntax import ParseError, TermParser, _strip_comment, print_term

_MSG = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*->\s*([A-Za-z_][A-Za-z0-9_]*)\s*:(.*)$")
_ROLE_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s+(knows|checks)\s+(.*)$")


@dataclass
class Message:
    sender: str
    receiver: str
    term: Term
    text: str = ""


@dataclass
class NarrationSpec:
    fresh: List[str] = field(default_factory=list)
    messages: List[Message] = field(default_factory=list)
    knows: Dict[str, List[Term]] = field(default_factory=dict)
    checks: Dict[str, List[Term]] = field(default_factory=dict)
    publish: List[Term] = field(default_factory=list)
    analyse: List[str] = field(default_factory=list)

    @property
    def roles(self) -> List[str]:
        seen: List[str] = []
        for m in self.messages:
            for r in (m.sender, m.receiver):
                if r not in seen:
                    seen.append(r)
        return seen


def _split_terms(text: str, D, line: int, col0: int) -> List[Term]:
    out, depth, start = [], 0, 0
    for i, ch in enumerate(text + ","):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            piece = text[start:i]
            if not piece.strip():
                raise ParseError("empty item in list", line, col0 + start + 1)
            out.append(TermParser(piece, D, line, col0 + start).parse())
            start = i + 1
    return out


def parse_narration(text: str, D: DeductionSystem) -> NarrationSpec:
    spec = NarrationSpec()
    in_where = False
    for n, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        head = line.split(None, 1)[0]
        rest = line.split(None, 1)[1] if len(line.split(None, 1)) > 1 else ""
        col = line.index(rest) if rest else len(line)
        if head == "where" and not rest:
            in_where = True
        elif head == "fresh":
            for t in _split_terms(rest, D, n, col):
                if not t.is_const or t.nonce:
                    raise ParseError("fresh values are plain constants", n, col + 1)
                spec.fresh.append(t.name)
        elif head == "publish":
            spec.publish.extend(_split_terms(rest, D, n, col))
        elif head in ("analyse", "analyze"):
            spec.analyse.extend(r.strip() for r in rest.split(",") if r.strip())
        elif _MSG.match(line) and not in_where:
            m = _MSG.match(line)
            body = m.group(3)
            t = TermParser(body, D, n, m.start(3)).parse()
            spec.messages.append(Message(m.group(1), m.group(2), t, body.strip()))
        elif _ROLE_LINE.match(line) and in_where:
            m = _ROLE_LINE.match(line)
            role, verb = m.group(1), m.group(2)
            terms = _split_terms(m.group(3), D, n, m.start(3))
            (spec.knows if verb == "knows" else spec.checks).setdefault(role, []).extend(terms)
        else:
            raise ParseError(f"cannot read {line.strip()!r}", n, 1)
    if not spec.messages:
        raise ParseError("narration has no message lines")
    for r in spec.roles:
        if r not in spec.knows:
            raise ParseError(f"role {r} has no knows line")
    for r in spec.analyse:
        if r not in spec.roles:
            raise ParseError(f"cannot analyse unknown role {r}")
    return spec


def print_narration(spec: NarrationSpec, D: Optional[DeductionSystem] = None) -> str:
    p = lambda ts: ", ".join(print_term(t, D) for t in ts)
    lines = []
    if spec.fresh:
        lines.append("fresh " + ", ".join(spec.fresh))
    for m in spec.messages:
        lines.append(f"{m.sender} -> {m.receiver} : {print_term(m.term, D)}")
    lines.append("where")
    for r, ts in spec.knows.items():
        lines.append(f"  {r} knows {p(ts)}")
    for r, ts in spec.checks.items():
        lines.append(f"  {r} checks {p(ts)}")
    if spec.publish:
        lines.append("publish " + p(spec.publish))
    if spec.analyse:
        lines.append("analyse " + ", ".join(spec.analyse))
    return "\n".join(lines) + "\n"


# -- compilation ------------------------------------------------------------------------


class _Role:
    def __init__(self, name: str, D: DeductionSystem, start: int):
        self.name, self.D = name, D
        self.states: List[Tuple[int, object]] = []
        self.out: Dict[int, int] = {}
        self.tests: List[Tuple[int, int]] = []
        self.known: Dict[Term, int] = {}
        self.received: Dict[Term, int] = {}
        self.next = start
        self.pending: List[Term] = []

    def new(self, kind, value: Optional[Term] = None) -> int:
        i = self.next
        self.next += 1
        self.states.append((i, kind))
        self.out[i] = 1
        if value is not None:
            self.known.setdefault(value, i)
        return i

    def build(self, t: Term, avoid: Optional[int] = None) -> Optional[int]:
        i = self.known.get(t)
        if i is not None and i != avoid:
            return i
        if t.is_app and self.D.is_public(t.fn):
            args = []
            for a in t.args:
                j = self.build(a)
                if j is None:
                    return None
                args.append(j)
            j = self.new(Deduction(t.fn, tuple(args)))
            self.known.setdefault(t, j)
            return j
        return None

    def _analyse_once(self) -> bool:
        D = self.D
        for t, i in list(self.known.items()):
            for rule in D.rewrite.rules:
                if not D.is_public(rule.lhs.fn):
                    continue
                ren = rename_apart([rule.lhs], "_n")
                lhs, rhs = apply_subst(ren, rule.lhs), apply_subst(ren, rule.rhs)
                for q, pat in enumerate(lhs.args):
                    if not pat.is_app:
                        continue
                    sigma = match(pat, t)
                    if sigma is None:
                        continue
                    others = [apply_subst(sigma, p) for j, p in enumerate(lhs.args) if j != q]
                    if any(not o.ground for o in others):
                        continue
                    result = D.normalize(apply_subst(sigma, rhs))
                    if result in self.known:
                        continue
                    mark = self.next
                    refs = []
                    ok = True
                    for j, p in enumerate(lhs.args):
                        if j == q:
                            refs.append(i)
                        else:
                            r = self.build(apply_subst(sigma, p))
                            if r is None:
                                ok = False
                                break
                            refs.append(r)
                    if not ok:
                        # drop half-built key material
                        self._truncate(mark)
                        continue
                    k = self.new(Deduction(lhs.fn, tuple(refs)))
                    self.known[result] = k
                    self.received.setdefault(result, k)
                    return True
        return False

    def _truncate(self, mark: int):
        drop = {i for i, _ in self.states if i >= mark}
        self.states = [s for s in self.states if s[0] < mark]
        self.known = {t: i for t, i in self.known.items() if i not in drop}
        for i in drop:
            self.out.pop(i, None)
        self.next = mark

    def receive(self, t: Term):
        r = self.new(RECEPTION)
        self.known.setdefault(t, r)
        self.received.setdefault(t, r)
        while self._analyse_once():
            pass

    def send(self, t: Term, line: int):
        i = self.build(t)
        if i is None:
            raise DerivationError("cannot-construct", f"role {self.name} cannot build message {line}: {t}")
        self.out[i] = self.out.get(i, 1) + 1

    def flush_checks(self):
        keep = []
        for t in self.pending:
            r = self.received.get(t)
            if r is None:
                keep.append(t)
                continue
            j = self.build(t, avoid=r)
            if j is None or j == r:
                raise DerivationError("cannot-check", f"role {self.name} cannot rebuild {t} to check it")
            self.tests.append((r, j))
        self.pending = keep

    def derivation(self) -> Derivation:
        idx = [i for i, _ in self.states]
        return Derivation(self.states, chain(idx), self.out, self.tests, self.D)


def compile_narration(spec: NarrationSpec, D: DeductionSystem, start: int = 1) -> Dict[str, Derivation]:
    """One honest derivation per role, each numbered from ``start``."""
    first_sender: Dict[str, str] = {}
    for m in spec.messages:
        names = {u.name for u in subterms(m.term) if u.is_const}
        for f in spec.fresh:
            if f in names:
                first_sender.setdefault(f, m.sender)
    roles: Dict[str, Derivation] = {}
    for name in spec.roles:
        r = _Role(name, D, start)
        for t in spec.knows.get(name, []):
            r.new(Memory(t), D.normalize(t))
        for f in spec.fresh:
            if first_sender.get(f) == name:
                r.new(Memory(Const(f)), Const(f))
        r.pending = list(spec.checks.get(name, []))
        for n, m in enumerate(spec.messages, 1):
            if m.receiver == name and m.sender != name:
                r.flush_checks()
                r.receive(D.normalize(m.term))
            if m.sender == name:
                r.send(D.normalize(m.term), n)
        r.flush_checks()
        if r.pending:
            raise DerivationError("cannot-check", f"role {name} never receives {r.pending[0]}")
        roles[name] = check(r.derivation(), "hsd")
    return roles


def knowledge_derivation(spec: NarrationSpec, D: DeductionSystem, start: int = 0) -> Derivation:
    """Attacker initial knowledge as visible memory states."""
    idx = list(range(start, start + len(spec.publish)))
    return Derivation([(i, Memory(D.normalize(t))) for i, t in zip(idx, spec.publish)], chain(idx),
                      {i: 2 for i in idx}, (), D)


def protocol_derivation(spec: NarrationSpec, D: DeductionSystem) -> Derivation:
    """The analysed roles (all roles by default) in parallel with the published knowledge."""
    roles = spec.analyse or spec.roles
    compiled = compile_narration(spec, D)
    states, order, out, tests = [], [], {}, []
    offset = 0
    for name in roles:
        C = compiled[name]
        shift = offset - min(C.kinds) if offset else 0
        for i, k in C.states:
            states.append((i + shift, _shift(k, shift)))
        order += [(a + shift, b + shift) for a, b in chain(C.linear())]
        out.update({i + shift: m for i, m in C.out.items()})
        tests += [(a + shift, b + shift) for a, b in C.tests]
        offset = max(i for i, _ in states) + 1
    K = knowledge_derivation(spec, D, offset)
    states += K.states
    order += list(chain(K.linear()))
    out.update(K.out)
    return check(Derivation(states, order, out, tests, D), "hsd")


def _shift(k, s: int):
    if isinstance(k, Deduction):
        return Deduction(k.symbol, tuple(a + s for a in k.args))
    return k
