"""Multi-sorted terms: syntax, sort checking, symbol maps and composite generation.

Concrete syntax::

    discount(mul(x0:money, x1:count), x2:rate)   function application
    compose(parent, parent)                      relational composition
    parent                                       a binary relation symbol

Variables are written ``x<i>:<sort>``; a term's arity is the number of
distinct variable indices, which must be ``0..k-1``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from .errors import CoverageError, SchemaError, TypeMismatchError, ValidationError

BOOL = "bool"


@dataclass(frozen=True)
class Var:
    index: int
    sort: str

    def __str__(self):
        return f"x{self.index}:{self.sort}"


@dataclass(frozen=True)
class App:
    symbol: str
    args: tuple["Term", ...]

    def __str__(self):
        return f"{self.symbol}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Rel:
    """A binary relation symbol used as a term of arity 2."""

    symbol: str

    def __str__(self):
        return self.symbol


@dataclass(frozen=True)
class RelCompose:
    """(x, z) holds iff some y has left(x, y) and right(y, z)."""

    left: "RelTerm"
    right: "RelTerm"

    def __str__(self):
        return f"compose({self.left}, {self.right})"


RelTerm = Union[Rel, RelCompose]
Term = Union[Var, App, Rel, RelCompose]


@dataclass(frozen=True)
class PrimitiveDecl:
    inputs: tuple[str, ...]
    output: str
    kind: str  # function | predicate
    impl: str
    param_arity: int = 0

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.kind not in ("function", "predicate"):
            raise ValidationError(f"primitive kind must be function or predicate, got {self.kind!r}")
        if self.kind == "predicate" and self.output != BOOL:
            raise ValidationError("predicates have output sort 'bool'")


@dataclass(frozen=True)
class Signature:
    sorts: frozenset[str]
    primitives: tuple[tuple[str, PrimitiveDecl], ...]

    @classmethod
    def build(cls, sorts: Iterable[str], primitives: Mapping[str, PrimitiveDecl]) -> "Signature":
        sig = cls(frozenset(sorts) | {BOOL}, tuple(sorted(primitives.items())))
        for name, decl in sig.primitives:
            for s in decl.inputs + (decl.output,):
                if s not in sig.sorts:
                    raise ValidationError(f"primitive {name!r} references undeclared sort {s!r}")
        return sig

    def decl(self, symbol: str) -> PrimitiveDecl:
        for name, d in self.primitives:
            if name == symbol:
                return d
        raise ValidationError(f"unknown symbol {symbol!r}")

    @property
    def symbols(self) -> list[str]:
        return [n for n, _ in self.primitives]

    @property
    def max_arity(self) -> int:
        return max((len(d.inputs) for _, d in self.primitives), default=1)


# --- parsing --------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(x\d+:[A-Za-z_][\w-]*)|([A-Za-z_][\w-]*)|(\()|(\))|(,))")


def parse_term(text: str) -> Term:
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise SchemaError(f"unexpected character {text[pos]!r} in term", 1, pos + 1, None)
        tokens.append((m.lastindex, m.group(m.lastindex), m.start(m.lastindex)))
        pos = m.end()
    i = 0

    def expect(kind):
        nonlocal i
        if i >= len(tokens) or tokens[i][0] != kind:
            col = tokens[i][2] + 1 if i < len(tokens) else len(text) + 1
            raise SchemaError(f"malformed term {text!r}", 1, col, None)
        i += 1
        return tokens[i - 1][1]

    def term():
        nonlocal i
        if i >= len(tokens):
            raise SchemaError(f"truncated term {text!r}", 1, len(text) + 1, None)
        kind, val, _ = tokens[i]
        if kind == 1:
            i += 1
            idx, sort = val[1:].split(":", 1)
            return Var(int(idx), sort)
        name = expect(2)
        if i < len(tokens) and tokens[i][0] == 3:
            i += 1
            args = [term()]
            while i < len(tokens) and tokens[i][0] == 5:
                i += 1
                args.append(term())
            expect(4)
            if name == "compose":
                if len(args) != 2 or not all(isinstance(a, (Rel, RelCompose)) for a in args):
                    raise SchemaError("compose takes two relational terms", 1, 1, None)
                return RelCompose(args[0], args[1])
            return App(name, tuple(args))
        return Rel(name)

    out = term()
    if i != len(tokens):
        raise SchemaError(f"trailing input in term {text!r}", 1, tokens[i][2] + 1, None)
    return out


# --- structure --------------------------------------------------------------


def depth(t: Term) -> int:
    if isinstance(t, Var):
        return 0
    if isinstance(t, Rel):
        return 1
    if isinstance(t, RelCompose):
        return 1 + max(depth(t.left), depth(t.right))
    return 1 + max(depth(a) for a in t.args)


def symbols(t: Term) -> set[str]:
    if isinstance(t, Var):
        return set()
    if isinstance(t, Rel):
        return {t.symbol}
    if isinstance(t, RelCompose):
        return symbols(t.left) | symbols(t.right)
    out = {t.symbol}
    for a in t.args:
        out |= symbols(a)
    return out


def variables(t: Term) -> dict[int, str]:
    out: dict[int, str] = {}

    def walk(u):
        if isinstance(u, Var):
            if out.setdefault(u.index, u.sort) != u.sort:
                raise TypeMismatchError(f"variable x{u.index} used at sorts {out[u.index]!r} and {u.sort!r}")
        elif isinstance(u, App):
            for a in u.args:
                walk(a)

    walk(t)
    return out


def _rel_sorts(t: RelTerm, sig: Signature) -> tuple[str, str]:
    if isinstance(t, Rel):
        d = sig.decl(t.symbol)
        if d.kind != "predicate" or len(d.inputs) != 2:
            raise TypeMismatchError(f"{t.symbol!r} is not a binary relation")
        return d.inputs
    a, b = _rel_sorts(t.left, sig)
    c, e = _rel_sorts(t.right, sig)
    if b != c:
        raise TypeMismatchError(f"cannot compose through sorts {b!r} and {c!r}")
    return a, e


def sort_of(t: Term, sig: Signature) -> tuple[tuple[str, ...], str]:
    """(input sorts by variable index, output sort); raises on ill-sorted wiring."""
    if isinstance(t, (Rel, RelCompose)):
        return _rel_sorts(t, sig), BOOL

    def out_sort(u):
        if isinstance(u, Var):
            if u.sort not in sig.sorts:
                raise TypeMismatchError(f"unknown sort {u.sort!r}")
            return u.sort
        if isinstance(u, (Rel, RelCompose)):
            raise TypeMismatchError("relational terms cannot be arguments")
        d = sig.decl(u.symbol)
        if len(u.args) != len(d.inputs):
            raise TypeMismatchError(f"{u.symbol} takes {len(d.inputs)} argument(s), got {len(u.args)}")
        for a, s in zip(u.args, d.inputs):
            got = out_sort(a)
            if got != s:
                raise TypeMismatchError(f"{u.symbol} expects {s!r}, got {got!r}")
        return d.output

    out = out_sort(t)
    vs = variables(t)
    if sorted(vs) != list(range(len(vs))):
        raise TypeMismatchError("variable indices must be 0..k-1")
    return tuple(vs[i] for i in range(len(vs))), out


def arity(t: Term, sig: Signature) -> int:
    return len(sort_of(t, sig)[0])


def map_term(F: Mapping[str, str], t: Term, sort_map: Mapping[str, str] | None = None) -> Term:
    """Replace every symbol by its image under F; the tree shape is kept."""
    sort_map = sort_map or {}
    if isinstance(t, Var):
        return Var(t.index, sort_map.get(t.sort, t.sort))
    if isinstance(t, Rel):
        if t.symbol not in F:
            raise CoverageError(f"symbol {t.symbol!r} is not covered by the correspondence")
        return Rel(F[t.symbol])
    if isinstance(t, RelCompose):
        return RelCompose(map_term(F, t.left, sort_map), map_term(F, t.right, sort_map))
    if t.symbol not in F:
        raise CoverageError(f"symbol {t.symbol!r} is not covered by the correspondence")
    return App(F[t.symbol], tuple(map_term(F, a, sort_map) for a in t.args))


def substitute(t: Term, repl: Mapping[int, Term]) -> Term:
    """Plug terms into variable slots (no renumbering)."""
    if isinstance(t, Var):
        return repl.get(t.index, t)
    if isinstance(t, App):
        return App(t.symbol, tuple(substitute(a, repl) for a in t.args))
    return t


def renumber(t: Term) -> Term:
    """Number variables 0..k-1 in left-to-right order of first occurrence."""
    mapping: dict[int, int] = {}

    def walk(u):
        if isinstance(u, Var):
            mapping.setdefault(u.index, len(mapping))
            return Var(mapping[u.index], u.sort)
        if isinstance(u, App):
            return App(u.symbol, tuple(walk(a) for a in u.args))
        return u

    return walk(t)


# --- composite generation ----------------------------------------------------


@dataclass(frozen=True)
class CompositeSet:
    terms: tuple[Term, ...]
    truncated: bool


def _fresh(t: Term, start: int) -> tuple[Term, int]:
    """Shift variables to fresh indices starting at ``start``."""
    vs = sorted(variables(t))
    remap = {v: Var(start + i, variables(t)[v]) for i, v in enumerate(vs)}
    return substitute(t, remap), start + len(vs)


def generate_composites(sig: Signature, generators: Iterable[Term], max_depth: int, cap: int) -> CompositeSet:
    """All sort-correct trees of generators nested at most ``max_depth`` levels.

    Every generator acts as an operator whose variable slots are filled by a
    fresh variable or another generated tree of the slot's sort. Relational
    generators are combined by relational composition instead. Output is
    ordered by term depth, then by canonical string, and cut at ``cap``.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    gens = list(dict.fromkeys(generators))
    rel = [g for g in gens if isinstance(g, (Rel, RelCompose))]
    fun = [g for g in gens if not isinstance(g, (Rel, RelCompose))]
    signatures = {g: sort_of(g, sig) for g in gens}
    limit = 20 * cap + 1000  # stop on intermediate blow-up; the result is then flagged
    blown = False

    # pool[sort]: (template, nesting level) with level 0 for a bare variable
    pool: dict[str, list[tuple[Term, int]]] = {s: [(Var(0, s), 0)] for s in sig.sorts}
    rel_pool: list[tuple[Term, int]] = [(g, 1) for g in rel]
    for lvl in range(1, max_depth + 1):
        new: list[tuple[str, Term]] = []
        for g in fun:
            ins, out = signatures[g]
            combos: list[tuple[list[Term], int]] = [([], 0)]
            for s in ins:
                combos = [(c + [t], max(m, l)) for c, m in combos for t, l in pool.get(s, []) if l < lvl]
                if len(combos) > limit:
                    combos, blown = combos[:limit], True
            for combo, top in combos:
                if top != lvl - 1:
                    continue
                pos, repl = 0, {}
                for slot, child in enumerate(combo):
                    repl[slot], pos = _fresh(child, pos)
                new.append((out, substitute(g, repl)))
        for out, t in new:
            pool.setdefault(out, []).append((t, lvl))
        if lvl >= 2:
            prev = [(t, l) for t, l in rel_pool]
            for a, la in prev:
                for b, lb in prev:
                    if max(la, lb) != lvl - 1:
                        continue
                    c = RelCompose(a, b)
                    try:
                        _rel_sorts(c, sig)
                    except TypeMismatchError:
                        continue
                    rel_pool.append((c, lvl))
            if len(rel_pool) > limit:
                rel_pool, blown = rel_pool[:limit], True

    found: dict[str, Term] = {}
    for entries in pool.values():
        for t, l in entries:
            if l >= 1:
                t = renumber(t)
                found.setdefault(str(t), t)
    for t, _ in rel_pool:
        found.setdefault(str(t), t)
    ordered = sorted(found.values(), key=lambda t: (depth(t), str(t)))
    return CompositeSet(tuple(ordered[:cap]), blown or len(ordered) > cap)
