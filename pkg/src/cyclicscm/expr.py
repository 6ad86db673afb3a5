"""Mechanism expression language.

Formulas are parsed by a small recursive-descent parser into an immutable
tree of dataclasses and evaluated with numpy ufuncs, so the same tree
evaluates a single state vector or a whole batch of them.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')' | '-' factor
    FUNC   := tanh | sin | cos
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ExprSyntaxError, UnknownFunction, UnknownSymbol

FUNCTIONS = ("tanh", "sin", "cos")
_UFUNCS = {"neg": np.negative, "tanh": np.tanh, "sin": np.sin, "cos": np.cos}
_BINOPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}
_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2}


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class VarRef:
    """Reference to endogenous coordinate ``index``."""

    index: int
    name: str


@dataclass(frozen=True)
class NoiseRef:
    """Reference to exogenous coordinate ``index``."""

    index: int
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # neg | tanh | sin | cos
    child: "ExprNode"


@dataclass(frozen=True)
class Binary:
    op: str  # add | sub | mul | div
    left: "ExprNode"
    right: "ExprNode"


ExprNode = Union[Constant, VarRef, NoiseRef, Unary, Binary]

# symbol table entries: name -> ("var" | "noise", index)
SymbolTable = Mapping[str, tuple]


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>[-+*/()])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, symbols):
        self.tokens = _tokenize(text)
        self.symbols = symbols
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = "add" if self.advance()[1] == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = "mul" if self.advance()[1] == "*" else "div"
            node = Binary(op, node, self.factor())
        return node

    def factor(self):
        kind, text, pos = self.peek()
        if kind == "number":
            self.advance()
            return Constant(float(text))
        if kind == "op" and text == "-":
            self.advance()
            # a literal directly after unary minus folds into a negative constant
            if self.peek()[0] == "number":
                return Constant(-float(self.advance()[1]))
            return Unary("neg", self.factor())
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "ident":
            self.advance()
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownFunction(f"unknown function {text!r}", pos)
                self.advance()
                node = self.expr()
                self.expect(")")
                return Unary(text, node)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} requires '('", self.peek()[2])
            if text not in self.symbols:
                raise UnknownSymbol(f"unknown identifier {text!r}", pos)
            role, index = self.symbols[text]
            return VarRef(index, text) if role == "var" else NoiseRef(index, text)
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse_expr(text: str, symbols: SymbolTable) -> ExprNode:
    """Parse ``text`` into an expression tree.

    Parameters
    ----------
    text : str
        Formula such as ``"0.4*C + 0.5 + e_I"``.
    symbols : mapping
        Maps every admissible identifier to ``("var", i)`` or ``("noise", j)``.

    Raises
    ------
    ExprSyntaxError, UnknownSymbol, UnknownFunction
        With the 0-based character position of the offending token.
    """
    return _Parser(text, symbols).parse()


def eval_expr(node: ExprNode, x, e):
    """Evaluate ``node`` at state ``x`` and noise ``e``.

    ``x`` and ``e`` index their coordinates on the last axis, so batches of
    shape ``(m, n)`` evaluate to arrays of shape ``(m,)``. Non-finite values
    propagate; callers decide whether to raise.
    """
    if isinstance(node, Constant):
        return node.value
    if isinstance(node, VarRef):
        return x[..., node.index]
    if isinstance(node, NoiseRef):
        return e[..., node.index]
    if isinstance(node, Unary):
        return _UFUNCS[node.op](eval_expr(node.child, x, e))
    with np.errstate(all="ignore"):
        return _BINOPS[node.op](eval_expr(node.left, x, e), eval_expr(node.right, x, e))


def to_string(node: ExprNode) -> str:
    """Render ``node`` so that parsing the result rebuilds the same tree."""
    if isinstance(node, Constant):
        return repr(float(node.value))
    if isinstance(node, (VarRef, NoiseRef)):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            child = to_string(node.child)
            # "-2.0" would re-parse as a folded constant
            if isinstance(node.child, (Binary, Constant)):
                child = f"({child})"
            return "-" + child
        return f"{node.op}({to_string(node.child)})"
    prec = _PRECEDENCE[node.op]
    left = to_string(node.left)
    right = to_string(node.right)
    if isinstance(node.left, Binary) and _PRECEDENCE[node.left.op] < prec:
        left = f"({left})"
    if isinstance(node.right, Binary) and _PRECEDENCE[node.right.op] <= prec:
        right = f"({right})"
    return f"{left} {_SYMBOLS[node.op]} {right}"


def walk(node: ExprNode):
    """Yield every node of the tree, parents before children."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        if isinstance(cur, Unary):
            stack.append(cur.child)
        elif isinstance(cur, Binary):
            stack.extend((cur.right, cur.left))


def remap(node: ExprNode, var_map, noise_map=None) -> ExprNode:
    """Return a copy of ``node`` with references renamed/reindexed.

    ``var_map`` and ``noise_map`` map an old index to a new ``(index, name)``.
    """
    if isinstance(node, VarRef):
        return VarRef(*var_map[node.index])
    if isinstance(node, NoiseRef):
        return NoiseRef(*noise_map[node.index]) if noise_map else node
    if isinstance(node, Unary):
        return Unary(node.op, remap(node.child, var_map, noise_map))
    if isinstance(node, Binary):
        return Binary(node.op, remap(node.left, var_map, noise_map),
                      remap(node.right, var_map, noise_map))
    return node
