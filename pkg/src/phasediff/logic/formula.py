"""Temporal-logic formulas over phase propositions: AST, parser, printer.

Grammar (whitespace-separated tokens)::

    formula := 'True' | 'False' | atom
             | '!' formula | 'X' formula | 'F' formula
             | '(' formula ')'
             | '(' formula ('|' | '&' | 'W' | 'S') formula ')'

Atoms are ``P1`` .. ``PC`` (1-based phase numbers) or names from a phase
table.  Parsing hash-conses: structurally equal subformulas become the same
node object, so a formula is a DAG rather than a tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

LEAF_OPS = ("const", "atom")
UNARY_OPS = {"!": "not", "X": "next", "F": "eventually"}
BINARY_OPS = {"|": "or", "&": "and", "W": "wuntil", "S": "since"}
_SYMBOL = {v: k for k, v in {**UNARY_OPS, **BINARY_OPS}.items()}


@dataclass(frozen=True)
class Node:
    op: str
    children: tuple = ()
    arg: object = None

    def __repr__(self):
        if self.op == "const":
            return f"Const({self.arg})"
        if self.op == "atom":
            return f"Atom({self.arg})"
        return f"{self.op.capitalize()}({', '.join(map(repr, self.children))})"


class ParseError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Formula:
    root: Node
    text: str = field(default="", compare=False)

    @property
    def nodes(self):
        """Unique nodes in children-first order."""
        out, seen = [], set()

        def visit(n):
            if id(n) in seen:
                return
            seen.add(id(n))
            for c in n.children:
                visit(c)
            out.append(n)

        visit(self.root)
        return out

    @property
    def atoms(self):
        return sorted({n.arg for n in self.nodes if n.op == "atom"})

    def depth(self):
        def d(n):
            return 1 + max((d(c) for c in n.children), default=0)

        return d(self.root)

    def __str__(self):
        return format_formula(self)


class Interner:
    """Hash-consing table: one node object per distinct subformula."""

    def __init__(self):
        self._table = {}

    def make(self, op, children=(), arg=None):
        node = Node(op, tuple(children), arg)
        return self._table.setdefault(node, node)


_TOKEN = re.compile(r"\s*(?:(?P<sym>[()!|&])|(?P<word>[^\W\d]\w*)|(?P<bad>\S))")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # only trailing whitespace remains
            break
        offset = len(text[: m.start(m.lastgroup)].encode("utf-8"))
        if m.lastgroup == "bad":
            raise ParseError(f"unexpected character {m.group('bad')!r}", offset)
        tokens.append((m.group(m.lastgroup), offset))
        pos = m.end()
    tokens.append(("", len(text.encode("utf-8"))))
    return tokens


def _resolve_atom(word, offset, phases, num_classes):
    if phases is not None:
        if word in phases:
            return phases.index(word)
    m = re.fullmatch(r"P([0-9]+)", word)
    if m:
        k = int(m.group(1))
        limit = num_classes if num_classes is not None else (len(phases) if phases is not None else None)
        if k < 1 or (limit is not None and k > limit):
            raise ParseError(f"atom {word} outside P1..P{limit}", offset)
        return k - 1
    raise ParseError(f"unknown atom {word!r}", offset)


def parse_formula(text, phases=None, num_classes=None, interner=None):
    """Parse ``text`` into a hash-consed :class:`Formula`.

    ``phases`` is an optional sequence of phase names; atom ``name`` then
    resolves to its position.  ``num_classes`` bounds ``Pk`` atoms.
    """
    phases = list(phases) if phases is not None else None
    tokens = _tokenize(text)
    intern = interner or Interner()
    pos = 0

    def peek():
        return tokens[pos]

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def parse():
        tok, off = take()
        if tok == "":
            raise ParseError("unexpected end of formula", off)
        if tok in ("True", "False"):
            return intern.make("const", (), tok == "True")
        if tok in UNARY_OPS:
            return intern.make(UNARY_OPS[tok], (parse(),))
        if tok == "(":
            left = parse()
            nxt, noff = take()
            if nxt == ")":
                return left
            if nxt not in BINARY_OPS:
                raise ParseError(f"expected binary operator or ')', got {nxt!r}" if nxt else "unbalanced parenthesis", noff)
            right = parse()
            close, coff = take()
            if close != ")":
                raise ParseError("unbalanced parenthesis" if close == "" else f"expected ')', got {close!r}", coff)
            return intern.make(BINARY_OPS[nxt], (left, right))
        if tok in (")", "|", "&", "W", "S"):
            raise ParseError(f"unexpected {tok!r}", off)
        return intern.make("atom", (), _resolve_atom(tok, off, phases, num_classes))

    root = parse()
    tok, off = peek()
    if tok != "":
        raise ParseError(f"trailing token {tok!r}", off)
    return Formula(root, text)


def format_formula(f, phases=None):
    """Render in the parser's grammar; ``parse_formula(format_formula(f))`` == f."""
    root = f.root if isinstance(f, Formula) else f

    def fmt(n):
        if n.op == "const":
            return "True" if n.arg else "False"
        if n.op == "atom":
            return phases[n.arg] if phases is not None else f"P{n.arg + 1}"
        sym = _SYMBOL[n.op]
        if len(n.children) == 1:
            inner = fmt(n.children[0])
            return f"!{inner}" if sym == "!" else f"{sym} {inner}"
        a, b = n.children
        return f"({fmt(a)} {sym} {fmt(b)})"

    return fmt(root)
