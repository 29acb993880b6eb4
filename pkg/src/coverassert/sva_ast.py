"""Tokenizer and recursive-descent parser for a concurrent SVA subset.

Supported: ``assert property (...)`` with optional label, ``@(posedge clk)``
clocking, ``disable iff (...)``, ``|->``/``|=>``, ``##N`` and ``##[m:n]``
delays, ``[*n]``/``[*m:n]`` repetition, boolean/bitwise/comparison
operators, bit and part selects, a handful of system functions and
hierarchical names (``a.b.c`` is one signal).

Spans are byte offsets into the UTF-8 encoding of the source.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .errors import ArgumentError, LexError, SvaSyntaxError


class NodeKind(enum.IntEnum):
    # codes are part of the structural-vector format; never renumber
    ASSERTION = 1
    PROPERTY = 2
    CLOCKING_EVENT = 3
    IMPLICATION = 4
    DELAY = 5
    REPETITION = 6
    BOOLEAN_OP = 7
    COMPARISON = 8
    UNARY_OP = 9
    SIGNAL_REF = 10
    INDEX_SELECT = 11
    RANGE_SELECT = 12
    LITERAL = 13
    SYSTEM_FUNC = 14
    SEQUENCE = 15


LEAF_KINDS = frozenset({NodeKind.SIGNAL_REF, NodeKind.LITERAL})

KEYWORDS = frozenset({"assert", "property", "posedge", "negedge", "edge", "disable", "iff"})

SYSTEM_FUNCS = frozenset({
    "$past", "$rose", "$fell", "$stable", "$changed",
    "$onehot", "$onehot0", "$isunknown", "$countones",
})

OPERATORS = (
    "|->", "|=>", "===", "!==", "##", "&&", "||", "==", "!=", "<=", ">=",
    "<", ">", "!", "~", "&", "|", "^", "*", "+", "-", "/", "%", "=",
)
PUNCTUATION = "()[]{}:;,@."


@dataclass(frozen=True)
class SvaToken:
    kind: str  # identifier | number | operator | keyword | punctuation
    lexeme: str
    span: tuple[int, int]


_IDENT = rb"[A-Za-z_][A-Za-z0-9_$]*(?:\.[A-Za-z_][A-Za-z0-9_$]*)*"
_BASED = rb"'[sS]?[bBoOdDhH][0-9a-fA-FxXzZ?_]+"
_TOKEN_RE = re.compile(
    rb"(?P<ws>\s+)"
    rb"|(?P<lcomment>//[^\n]*)"
    rb"|(?P<bcomment>/\*.*?\*/)"
    rb"|(?P<number>\d[\d_]*" + _BASED + rb"|" + _BASED + rb"|'[01xXzZ]|\d[\d_]*)"
    rb"|(?P<sysid>\$[A-Za-z_][A-Za-z0-9_$]*)"
    rb"|(?P<dollar>\$)"
    rb"|(?P<ident>" + _IDENT + rb")"
    rb"|(?P<op>" + rb"|".join(re.escape(o.encode()) for o in OPERATORS) + rb")"
    rb"|(?P<punct>[" + re.escape(PUNCTUATION.encode()) + rb"])",
    re.DOTALL,
)


def tokenize(source: str | bytes) -> list[SvaToken]:
    """Split *source* into tokens, skipping whitespace and comments.

    Raises LexError carrying the byte offset of the first illegal character
    (an unterminated block comment counts as illegal at its ``/*``).
    """
    data = source.encode("utf-8") if isinstance(source, str) else bytes(source)
    tokens: list[SvaToken] = []
    pos = 0
    while pos < len(data):
        m = _TOKEN_RE.match(data, pos)
        if m is None:
            raise LexError(f"illegal character {data[pos:pos + 1]!r}", pos)
        kind = m.lastgroup
        text = m.group().decode("utf-8")
        span = (m.start(), m.end())
        if kind in ("ws", "lcomment", "bcomment"):
            pass
        elif kind in ("number", "dollar"):
            tokens.append(SvaToken("number", text, span))
        elif kind in ("sysid", "ident"):
            tok_kind = "keyword" if text in KEYWORDS else "identifier"
            tokens.append(SvaToken(tok_kind, text, span))
        elif kind == "op":
            tokens.append(SvaToken("operator", text, span))
        else:
            tokens.append(SvaToken("punctuation", text, span))
        pos = m.end()
    return tokens


@dataclass(frozen=True)
class AstNode:
    id: int
    kind: NodeKind
    children: tuple[int, ...]
    span: tuple[int, int]
    value: str = ""


@dataclass(frozen=True)
class Ast:
    """Immutable tree; node ids are dense pre-order indices, root first."""

    nodes: tuple[AstNode, ...]
    root: int = 0

    def __post_init__(self) -> None:
        _check_tree(self.nodes, self.root)

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> AstNode:
        return self.nodes[node_id]

    @cached_property
    def parents(self) -> tuple[Optional[int], ...]:
        par: list[Optional[int]] = [None] * len(self.nodes)
        for node in self.nodes:
            for c in node.children:
                par[c] = node.id
        return tuple(par)

    @cached_property
    def depths(self) -> tuple[int, ...]:
        depth = [0] * len(self.nodes)
        stack = [self.root]
        while stack:
            nid = stack.pop()
            for c in self.nodes[nid].children:
                depth[c] = depth[nid] + 1
                stack.append(c)
        return tuple(depth)

    def preorder(self) -> Iterator[AstNode]:
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            stack.extend(reversed(node.children))

    def signal_leaves(self) -> list[int]:
        """Ids of signal_ref nodes in source (pre-order) order."""
        return [n.id for n in self.preorder() if n.kind == NodeKind.SIGNAL_REF]

    def shape(self, node_id: Optional[int] = None) -> tuple:
        """Span-free nested tuple used for structural comparison."""
        node = self.nodes[self.root if node_id is None else node_id]
        return (int(node.kind), node.value, tuple(self.shape(c) for c in node.children))

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": [
                {"id": n.id, "kind": n.kind.name.lower(), "code": int(n.kind),
                 "value": n.value, "children": list(n.children), "span": list(n.span)}
                for n in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ast":
        nodes = tuple(
            AstNode(n["id"], NodeKind(n["code"]), tuple(n["children"]), tuple(n["span"]), n.get("value", ""))
            for n in d["nodes"]
        )
        return cls(nodes, d.get("root", 0))


def _check_tree(nodes: Sequence[AstNode], root: int) -> None:
    n = len(nodes)
    if n == 0:
        raise ValueError("empty tree")
    if not 0 <= root < n:
        raise ValueError(f"root {root} out of range")
    seen_parent = [False] * n
    for i, node in enumerate(nodes):
        if node.id != i:
            raise ValueError(f"node at index {i} has id {node.id}")
        if node.kind in LEAF_KINDS and node.children:
            raise ValueError(f"{node.kind.name.lower()} node {i} has children")
        for c in node.children:
            if not 0 <= c < n:
                raise ValueError(f"node {i} references missing child {c}")
            if c == root or seen_parent[c]:
                raise ValueError(f"node {c} has more than one parent")
            seen_parent[c] = True
    # every non-root node has exactly one parent; reachability rules out cycles
    reached = 0
    stack = [root]
    while stack:
        reached += 1
        stack.extend(nodes[stack.pop()].children)
        if reached > n:
            raise ValueError("cycle in tree")
    if reached != n:
        raise ValueError("tree is not connected")


@dataclass(frozen=True)
class ParsedAssertion:
    assertion_id: str
    raw_text: str
    ast: Optional[Ast]
    signals: tuple[str, ...] = ()
    diagnostic: Optional[str] = None

    @property
    def syntax_ok(self) -> bool:
        return self.ast is not None

    def to_dict(self) -> dict:
        return {
            "assertion_id": self.assertion_id,
            "raw_text": self.raw_text,
            "syntax_ok": self.syntax_ok,
            "signals": list(self.signals),
            "diagnostic": self.diagnostic,
            "ast": self.ast.to_dict() if self.ast is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParsedAssertion":
        ast = Ast.from_dict(d["ast"]) if d.get("ast") else None
        return cls(d["assertion_id"], d["raw_text"], ast, tuple(d.get("signals", ())), d.get("diagnostic"))


# ---------------------------------------------------------------------------
# parser


@dataclass
class _Proto:
    kind: NodeKind
    span: tuple[int, int]
    value: str = ""
    children: list["_Proto"] = field(default_factory=list)


class _Parser:
    def __init__(self, tokens: list[SvaToken], end: int):
        self.toks = tokens
        self.i = 0
        self.end = end

    # token helpers
    def peek(self, offset: int = 0) -> Optional[SvaToken]:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def at(self, lexeme: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok is not None and tok.lexeme == lexeme and tok.kind != "identifier"

    def error(self, expected: str) -> SvaSyntaxError:
        tok = self.peek()
        if tok is None:
            return SvaSyntaxError(f"expected {expected} but reached end of input", self.end)
        return SvaSyntaxError(f"expected {expected} but found {tok.lexeme!r}", tok.span[0])

    def expect(self, lexeme: str) -> SvaToken:
        if not self.at(lexeme):
            raise self.error(repr(lexeme))
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def take(self) -> SvaToken:
        tok = self.peek()
        if tok is None:
            raise self.error("a token")
        self.i += 1
        return tok

    def number(self) -> _Proto:
        tok = self.peek()
        if tok is None or tok.kind != "number":
            raise self.error("a number")
        self.i += 1
        return _Proto(NodeKind.LITERAL, tok.span, tok.lexeme)

    # grammar
    def assertion(self) -> _Proto:
        start_tok = self.peek()
        if start_tok is None:
            raise self.error("'assert'")
        tok = start_tok
        if tok.kind == "identifier" and self.at(":", 1):
            self.i += 2  # statement label
        self.expect("assert")
        self.expect("property")
        self.expect("(")
        prop = self.property_spec()
        close = self.expect(")")
        end = close.span[1]
        if self.at(";"):
            end = self.take().span[1]
        if self.peek() is not None:
            raise self.error("end of assertion")
        return _Proto(NodeKind.ASSERTION, (start_tok.span[0], end), "", [prop])

    def property_spec(self) -> _Proto:
        parts: list[_Proto] = []
        first = self.peek()
        if self.at("@"):
            at = self.take()
            self.expect("(")
            edge = ""
            if self.at("posedge") or self.at("negedge") or self.at("edge"):
                edge = self.take().lexeme
            clk = self.expr()
            close = self.expect(")")
            parts.append(_Proto(NodeKind.CLOCKING_EVENT, (at.span[0], close.span[1]), edge, [clk]))
        if self.at("disable"):
            kw = self.take()
            self.expect("iff")
            self.expect("(")
            cond = self.expr()
            close = self.expect(")")
            parts.append(_Proto(NodeKind.UNARY_OP, (kw.span[0], close.span[1]), "disable iff", [cond]))
        body = self.prop()
        parts.append(body)
        start = first.span[0] if first is not None else body.span[0]
        return _Proto(NodeKind.PROPERTY, (start, body.span[1]), "", parts)

    def prop(self) -> _Proto:
        lhs = self.seq()
        if self.at("|->") or self.at("|=>"):
            op = self.take().lexeme
            rhs = self.prop()
            return _Proto(NodeKind.IMPLICATION, (lhs.span[0], rhs.span[1]), op, [lhs, rhs])
        return lhs

    def seq(self) -> _Proto:
        items: list[_Proto] = []
        if not self.at("##"):
            items.append(self.rep())
        while self.at("##"):
            items.append(self.delay())
            items.append(self.rep())
        if len(items) == 1:
            return items[0]
        return _Proto(NodeKind.SEQUENCE, (items[0].span[0], items[-1].span[1]), "", items)

    def delay(self) -> _Proto:
        hashes = self.take()
        if self.at("["):
            self.take()
            lo = self.number()
            self.expect(":")
            hi = self.number()
            close = self.expect("]")
            return _Proto(NodeKind.DELAY, (hashes.span[0], close.span[1]), f"{lo.value}:{hi.value}", [lo, hi])
        n = self.number()
        if n.value == "$":
            raise SvaSyntaxError("unbounded delay needs a range", n.span[0])
        return _Proto(NodeKind.DELAY, (hashes.span[0], n.span[1]), n.value, [n])

    def rep(self) -> _Proto:
        operand = self.expr()
        if self.at("[") and self.at("*", 1):
            self.i += 2
            lo = self.number()
            bounds = [lo]
            value = lo.value
            if self.at(":"):
                self.take()
                hi = self.number()
                bounds.append(hi)
                value = f"{lo.value}:{hi.value}"
            close = self.expect("]")
            return _Proto(NodeKind.REPETITION, (operand.span[0], close.span[1]), value, [operand, *bounds])
        return operand

    def _binary(self, ops: tuple[str, ...], kind: NodeKind, sub) -> _Proto:
        lhs = sub()
        while any(self.at(o) for o in ops):
            op = self.take().lexeme
            rhs = sub()
            lhs = _Proto(kind, (lhs.span[0], rhs.span[1]), op, [lhs, rhs])
        return lhs

    def expr(self) -> _Proto:
        return self._binary(("||",), NodeKind.BOOLEAN_OP, self.and_expr)

    def and_expr(self) -> _Proto:
        return self._binary(("&&",), NodeKind.BOOLEAN_OP, self.bitor)

    def bitor(self) -> _Proto:
        return self._binary(("|",), NodeKind.BOOLEAN_OP, self.bitxor)

    def bitxor(self) -> _Proto:
        return self._binary(("^",), NodeKind.BOOLEAN_OP, self.bitand)

    def bitand(self) -> _Proto:
        return self._binary(("&",), NodeKind.BOOLEAN_OP, self.equality)

    def equality(self) -> _Proto:
        return self._binary(("==", "!=", "===", "!=="), NodeKind.COMPARISON, self.relational)

    def relational(self) -> _Proto:
        return self._binary(("<", "<=", ">", ">="), NodeKind.COMPARISON, self.unary)

    def unary(self) -> _Proto:
        if self.at("!") or self.at("~"):
            op = self.take()
            operand = self.unary()
            return _Proto(NodeKind.UNARY_OP, (op.span[0], operand.span[1]), op.lexeme, [operand])
        return self.postfix()

    def postfix(self) -> _Proto:
        node = self.primary()
        while self.at("[") and not self.at("*", 1):
            self.take()
            first = self.expr()
            if self.at(":"):
                self.take()
                second = self.expr()
                close = self.expect("]")
                node = _Proto(NodeKind.RANGE_SELECT, (node.span[0], close.span[1]), "", [node, first, second])
            else:
                close = self.expect("]")
                node = _Proto(NodeKind.INDEX_SELECT, (node.span[0], close.span[1]), "", [node, first])
        return node

    def primary(self) -> _Proto:
        tok = self.peek()
        if tok is None:
            raise self.error("an expression")
        if tok.kind == "identifier" and tok.lexeme.startswith("$"):
            if tok.lexeme not in SYSTEM_FUNCS:
                raise SvaSyntaxError(f"unsupported system function {tok.lexeme}", tok.span[0])
            self.i += 1
            self.expect("(")
            args: list[_Proto] = []
            if not self.at(")"):
                args.append(self.expr())
                while self.at(","):
                    self.take()
                    args.append(self.expr())
            close = self.expect(")")
            return _Proto(NodeKind.SYSTEM_FUNC, (tok.span[0], close.span[1]), tok.lexeme, args)
        if tok.kind == "identifier":
            self.i += 1
            return _Proto(NodeKind.SIGNAL_REF, tok.span, tok.lexeme)
        if tok.kind == "number" and tok.lexeme != "$":
            self.i += 1
            return _Proto(NodeKind.LITERAL, tok.span, tok.lexeme)
        if self.at("("):
            self.i += 1
            inner = self.prop()
            self.expect(")")
            return inner
        raise self.error("an expression")


def _freeze(root: _Proto) -> Ast:
    flat: list[_Proto] = []
    index: dict[int, int] = {}
    stack = [root]
    while stack:
        p = stack.pop()
        index[id(p)] = len(flat)
        flat.append(p)
        stack.extend(reversed(p.children))
    nodes = tuple(
        AstNode(i, p.kind, tuple(index[id(c)] for c in p.children), p.span, p.value)
        for i, p in enumerate(flat)
    )
    return Ast(nodes, 0)


def extract_signals(ast: Ast) -> tuple[str, ...]:
    """Sorted distinct signal names; selects collapse to their base signal."""
    return tuple(sorted({n.value for n in ast.nodes if n.kind == NodeKind.SIGNAL_REF}))


def parse_assertion(assertion_id: str, source: str | bytes) -> ParsedAssertion:
    """Parse one assertion; syntax problems are reported, never raised."""
    if not assertion_id:
        raise ArgumentError("assertion id must be non-empty")
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            return ParsedAssertion(assertion_id, bytes(source).decode("utf-8", "replace"), None, (),
                                   f"offset {exc.start}: invalid UTF-8")
    try:
        tokens = tokenize(source)
        if not tokens:
            raise SvaSyntaxError("empty assertion", 0)
        tree = _freeze(_Parser(tokens, len(source.encode("utf-8"))).assertion())
    except (LexError, SvaSyntaxError) as exc:
        return ParsedAssertion(assertion_id, source, None, (), f"offset {exc.offset}: {exc.message}")
    except RecursionError:
        return ParsedAssertion(assertion_id, source, None, (), "offset 0: nesting too deep")
    return ParsedAssertion(assertion_id, source, tree, extract_signals(tree), None)


# ---------------------------------------------------------------------------
# pretty printer


def to_source(ast: Ast) -> str:
    """Render *ast* as canonical, fully parenthesized SVA text."""
    return _render(ast, ast.root)


def _render(ast: Ast, nid: int) -> str:
    node = ast[nid]
    kids = node.children
    k = node.kind
    if k == NodeKind.ASSERTION:
        return f"assert property ({_render(ast, kids[0])});"
    if k == NodeKind.PROPERTY:
        return " ".join(_render(ast, c) for c in kids)
    if k == NodeKind.CLOCKING_EVENT:
        edge = f"{node.value} " if node.value else ""
        return f"@({edge}{_render(ast, kids[0])})"
    if k == NodeKind.UNARY_OP and node.value == "disable iff":
        return f"disable iff ({_render(ast, kids[0])})"
    if k == NodeKind.UNARY_OP:
        return f"({node.value}{_render(ast, kids[0])})"
    if k in (NodeKind.IMPLICATION, NodeKind.BOOLEAN_OP, NodeKind.COMPARISON):
        return f"({_render(ast, kids[0])} {node.value} {_render(ast, kids[1])})"
    if k == NodeKind.SEQUENCE:
        return "(" + " ".join(_render(ast, c) for c in kids) + ")"
    if k == NodeKind.DELAY:
        if len(kids) == 2:
            return f"##[{ast[kids[0]].value}:{ast[kids[1]].value}]"
        return f"##{ast[kids[0]].value}"
    if k == NodeKind.REPETITION:
        bounds = ":".join(ast[c].value for c in kids[1:])
        return f"{_render(ast, kids[0])}[*{bounds}]"
    if k == NodeKind.INDEX_SELECT:
        return f"{_render(ast, kids[0])}[{_render(ast, kids[1])}]"
    if k == NodeKind.RANGE_SELECT:
        return f"{_render(ast, kids[0])}[{_render(ast, kids[1])}:{_render(ast, kids[2])}]"
    if k == NodeKind.SYSTEM_FUNC:
        return f"{node.value}(" + ", ".join(_render(ast, c) for c in kids) + ")"
    return node.value  # signal_ref, literal


# ---------------------------------------------------------------------------
# assertion files

_COMMENT_RE = re.compile(r"//[^\n]*|/\*.*?\*/", re.DOTALL)
_ASSERT_RE = re.compile(r"(?:\b[A-Za-z_][A-Za-z0-9_]*\s*:\s*)?\bassert\s+property\b")


def split_sv_statements(text: str) -> list[str]:
    """Return each ``assert property ... ;`` statement of a .sv source."""
    blanked = _COMMENT_RE.sub(lambda m: re.sub(r"[^\n]", " ", m.group()), text)
    out: list[str] = []
    pos = 0
    while True:
        m = _ASSERT_RE.search(blanked, pos)
        if m is None:
            return out
        depth = 0
        j = m.end()
        while j < len(blanked):
            ch = blanked[j]
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch == ";" and depth <= 0:
                break
            j += 1
        out.append(text[m.start():j + 1].strip())
        pos = j + 1


def read_assertions(path: str | Path) -> list[tuple[str, str]]:
    """Load ``(id, sva)`` pairs from a JSON Lines or plain .sv file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".sv", ".sva", ".svh", ".v"):
        return [(f"a{i}", s) for i, s in enumerate(split_sv_statements(text), start=1)]
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append((str(rec["id"]), str(rec["sva"])))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: expected {{\"id\", \"sva\"}} record ({exc})") from exc
    return out


def parse_many(items: Iterable[tuple[str, str]]) -> list[ParsedAssertion]:
    return [parse_assertion(aid, sva) for aid, sva in items]
