"""Concrete syntax for terms and theory files.

Terms: ``f(t1,...,tn)``, bare identifiers are free constants (or declared
zero-ary symbols), ``?x`` is a variable and ``~n`` a nonce.

Theory files are line oriented::

    symbol pair/2
    symbol inv/1 private
    precedence pair < fst < snd      # least to greatest
    cmin c0
    rule fst(pair(?x, ?y)) -> ?x
    sugar sk(?a) = inv(pk(?a))
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..terms import (
    App, Const, DeductionSystem, RewriteSystem, Rule, Symbol, Term, TermError, Var,
    apply_subst, match, variables,
)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        where = f"line {line}, col {col}: " if line else ""
        super().__init__(where + msg)


_TOKEN = re.compile(r"\s*(?:(?P<id>[A-Za-z_][A-Za-z0-9_']*)|(?P<var>\?[A-Za-z_][A-Za-z0-9_']*)"
                    r"|(?P<nonce>~[A-Za-z0-9_']+)|(?P<ref>@[A-Za-z0-9_]+)|(?P<p>[(),]))")


class TermParser:
    def __init__(self, text: str, D: Optional[DeductionSystem] = None, line: int = 0,
                 col0: int = 0, refs: Optional[Dict[str, Term]] = None):
        self.text, self.D, self.line, self.col0 = text, D, line, col0
        self.refs = refs
        self.pos = 0

    def error(self, msg):
        raise ParseError(msg, self.line, self.col0 + self.pos + 1)

    def _peek(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m or m.end() == m.start():
            return None, None, self.pos
        kind = m.lastgroup
        return kind, m.group(kind), m.end()

    def _next(self):
        kind, val, end = self._peek()
        if kind is None:
            self.pos = len(self.text) - len(self.text[self.pos:].lstrip())
            self.error("unexpected input" if self.pos < len(self.text) else "unexpected end of term")
        self.pos = end
        return kind, val

    def parse(self) -> Term:
        t = self.term()
        if self.text[self.pos:].strip():
            self.pos += len(self.text[self.pos:]) - len(self.text[self.pos:].lstrip())
            self.error("trailing input")
        return t

    def term(self) -> Term:
        kind, val = self._next()
        if kind == "var":
            return Var(val[1:])
        if kind == "nonce":
            return Const(val[1:], nonce=True)
        if kind == "ref":
            if self.refs is None or val[1:] not in self.refs:
                self.error(f"unknown reference {val}")
            return self.refs[val[1:]]
        if kind != "id":
            self.error(f"unexpected {val!r}")
        k2, v2, end = self._peek()
        if k2 == "p" and v2 == "(":
            self.pos = end
            args = []
            k3, v3, end3 = self._peek()
            if not (k3 == "p" and v3 == ")"):
                while True:
                    args.append(self.term())
                    k4, v4 = self._next()
                    if v4 == ")":
                        break
                    if v4 != ",":
                        self.error("expected ',' or ')'")
            else:
                self.pos = end3
            return self._app(val, args)
        if self.D is not None and val in self.D.symbols and self.D.symbols[val].arity == 0:
            return App(val, ())
        return Const(val)

    def _app(self, fn: str, args: List[Term]) -> Term:
        D = self.D
        if D is not None:
            if fn in D.sugar:
                params, body = D.sugar[fn]
                if len(params) != len(args):
                    self.error(f"{fn} expects {len(params)} arguments")
                return apply_subst(dict(zip(params, args)), body)
            sym = D.symbols.get(fn)
            if sym is None:
                self.error(f"undeclared symbol {fn}")
            if sym.arity != len(args):
                self.error(f"{fn} expects {sym.arity} arguments, got {len(args)}")
        return App(fn, args)


def parse_term(text: str, D: Optional[DeductionSystem] = None, refs=None) -> Term:
    return TermParser(text, D, refs=refs).parse()


def print_term(t: Term, D: Optional[DeductionSystem] = None) -> str:
    if t.is_var:
        return "?" + t.name
    if t.is_const:
        return str(t)
    if not t.args:
        return t.fn if D is not None else t.fn + "()"
    return t.fn + "(" + ", ".join(print_term(a, D) for a in t.args) + ")"


@dataclass
class TheorySpec:
    symbols: List[Symbol] = field(default_factory=list)
    rules: List[Rule] = field(default_factory=list)
    precedence: List[str] = field(default_factory=list)
    cmin: Optional[str] = None
    sugar: Dict[str, Tuple[Tuple[Var, ...], Term]] = field(default_factory=dict)


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].rstrip()


def _sample_ground(D: DeductionSystem, rng: random.Random, depth: int) -> Term:
    consts = [Const("a"), Const("b"), D.cmin]
    if depth <= 0 or rng.random() < 0.3:
        return rng.choice(consts)
    sym = rng.choice(sorted(D.symbols.values(), key=lambda s: s.name))
    return App(sym.name, [_sample_ground(D, rng, depth - 1) for _ in range(sym.arity)])


def check_orientation(D: DeductionSystem, samples: int = 50, seed: int = 0) -> None:
    """Check ``l sigma > r sigma`` on sampled ground instances of every rule."""
    rng = random.Random(seed)
    for rule in D.rewrite.rules:
        vs = sorted(variables(rule.lhs), key=lambda v: v.name)
        for _ in range(samples):
            sigma = {v: _sample_ground(D, rng, 2) for v in vs}
            l, r = apply_subst(sigma, rule.lhs), apply_subst(sigma, rule.rhs)
            if not D.rewrite.greater(l, r):
                raise TermError(f"rule {rule} is not oriented on instance {l} -> {r}")


def parse_theory(text: str) -> Tuple[TheorySpec, DeductionSystem]:
    spec = TheorySpec()
    seen = {}
    pending = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        head, _, rest = line.strip().partition(" ")
        rest = rest.strip()
        col = indent + len(head) + 2
        if head == "symbol":
            m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_']*)\s*/\s*(\d+)(\s+(public|private))?", rest)
            if not m:
                raise ParseError("expected 'symbol name/arity [public|private]'", lineno, col)
            name = m.group(1)
            if name in seen:
                raise ParseError(f"duplicate symbol declaration {name}", lineno, col)
            sym = Symbol(name, int(m.group(2)), m.group(4) != "private")
            seen[name] = sym
            spec.symbols.append(sym)
        elif head == "precedence":
            names = [n.strip() for n in rest.split("<")]
            if not all(names):
                raise ParseError("malformed precedence", lineno, col)
            spec.precedence.extend(names)
        elif head == "cmin":
            if spec.cmin is not None:
                raise ParseError("cmin declared twice", lineno, col)
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_']*", rest):
                raise ParseError("expected a constant name", lineno, col)
            spec.cmin = rest
        elif head in ("rule", "sugar"):
            sep = "->" if head == "rule" else "="
            if sep not in rest:
                raise ParseError(f"expected '{sep}'", lineno, col)
            pending.append((head, lineno, col, rest, sep))
        else:
            raise ParseError(f"unknown directive {head!r}", lineno, indent + 1)
    for name in spec.precedence:
        if name not in seen:
            raise ParseError(f"precedence mentions undeclared symbol {name}")
    if spec.cmin is None:
        spec.cmin = "cmin"
    rs = RewriteSystem([], spec.precedence, spec.cmin)
    D = DeductionSystem(dict(seen), rs, {})
    rules = []
    for head, lineno, col, rest, sep in pending:
        left, right = rest.split(sep, 1)
        lt = TermParser(left, None if head == "sugar" else D, lineno, col - 1).parse()
        rt = TermParser(right, D, lineno, col + len(left) + len(sep) - 1).parse()
        if head == "sugar":
            if not lt.is_app or not all(a.is_var for a in lt.args):
                raise ParseError("sugar head must be f(?x, ...)", lineno, col)
            if lt.fn in seen:
                raise ParseError(f"sugar name {lt.fn} clashes with a symbol", lineno, col)
            D.sugar[lt.fn] = (tuple(lt.args), rt)
            spec.sugar[lt.fn] = (tuple(lt.args), rt)
            continue
        if not variables(rt) <= variables(lt):
            raise ParseError(f"rule right-hand side has fresh variables: {rest}", lineno, col)
        if not lt.is_app:
            raise ParseError("rule left-hand side must be an application", lineno, col)
        rules.append(Rule(lt, rt))
    spec.rules = rules
    D = DeductionSystem(dict(seen), RewriteSystem(rules, spec.precedence, spec.cmin), D.sugar)
    check_orientation(D)
    return spec, D


def print_theory(spec: TheorySpec) -> str:
    lines = []
    for s in spec.symbols:
        lines.append(f"symbol {s.name}/{s.arity}" + ("" if s.public else " private"))
    if spec.precedence:
        lines.append("precedence " + " < ".join(spec.precedence))
    lines.append(f"cmin {spec.cmin}")
    for name, (params, body) in spec.sugar.items():
        lines.append(f"sugar {name}({', '.join(print_term(p) for p in params)}) = {print_term(body, True)}")
    for r in spec.rules:
        lines.append(f"rule {print_term(r.lhs, True)} -> {print_term(r.rhs, True)}")
    return "\n".join(lines) + "\n"
