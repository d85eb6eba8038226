"""Infix expression trees for money-of-account texts.

Grammar (whitespace insignificant):

    expr  := term  (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | atom
    atom  := INT | IDENT | '(' expr ')'

``/`` binds like ``*`` and is left-associative.  There is no rational
literal: ``a/b`` parses as a division node, whose value under total
(meadow) division is the exact quotient, with ``1/0`` evaluating to 0.
Inverse nodes have no surface syntax of their own; they print as
``1/x`` and reparse to the value-equal division form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from .meadow import Rat
from .units import DIMENSIONLESS, Quantity

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Inv",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "ExprSyntaxError",
    "UnboundVariable",
    "parse_expr",
    "format_expr",
    "eval_expr",
    "free_variables",
]


@dataclass(frozen=True)
class Const:
    value: Rat


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Inv:
    operand: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Neg, Inv, Add, Sub, Mul, Div]


class ExprSyntaxError(ValueError):
    """Syntax error carrying the byte offset and the acceptable next tokens."""

    def __init__(self, offset: int, expected: set[str], found: str):
        self.offset = offset
        self.expected = frozenset(expected)
        self.found = found
        exp = ", ".join(sorted(expected))
        super().__init__(f"syntax error at offset {offset}: expected {exp}, found {found}")


class UnboundVariable(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable: {name}")


# -- tokenizer ----------------------------------------------------------------

_TOK_INT = "INT"
_TOK_IDENT = "IDENT"
_TOK_END = "END"
_OPERATORS = "+-*/()"


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        if ch.isdigit():
            start = pos
            while pos < n and text[pos].isdigit():
                pos += 1
            tokens.append((_TOK_INT, text[start:pos], start))
            continue
        if ch.isalpha() or ch == "_":
            start = pos
            while pos < n and (text[pos].isalnum() or text[pos] == "_"):
                pos += 1
            tokens.append((_TOK_IDENT, text[start:pos], start))
            continue
        if ch in _OPERATORS:
            tokens.append((ch, ch, pos))
            pos += 1
            continue
        raise ExprSyntaxError(pos, {"INT", "IDENT", "operator"}, repr(ch))
    tokens.append((_TOK_END, "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def fail(self, expected: set[str]):
        kind, text, offset = self.peek()
        found = "end of input" if kind == _TOK_END else repr(text)
        raise ExprSyntaxError(offset, expected, found)

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek()[0] != _TOK_END:
            self.fail({"'+'", "'-'", "'*'", "'/'", "end of input"})
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> Expr:
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == _TOK_INT:
            self.advance()
            return Const(Rat(int(text)))
        if kind == _TOK_IDENT:
            self.advance()
            return Var(text)
        if kind == "(":
            self.advance()
            node = self.expr()
            if self.peek()[0] != ")":
                self.fail({"')'", "'+'", "'-'", "'*'", "'/'"})
            self.advance()
            return node
        self.fail({"INT", "IDENT", "'('", "'-'"})


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ExprSyntaxError` with byte offset and expected tokens on
    malformed input.
    """
    return _Parser(text).parse()


# -- printing -----------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Inv: 2, Const: 4, Var: 4}


def format_expr(e: Expr) -> str:
    """Canonical text for a tree.

    ``parse_expr(format_expr(e)) == e`` holds for every tree the parser can
    itself produce (nonnegative integer constants, variables, negation and
    the four binary operators).  Other constants and inverse nodes print as
    the value-equal division form.
    """
    return _format(e, 0, False)


def _format(e: Expr, parent_prec: int, is_right: bool) -> str:
    prec = _PREC[type(e)]
    if isinstance(e, Const):
        if e.value.num < 0:
            # negative constants print through negation to stay parseable
            return _format(Neg(Const(-e.value)), parent_prec, is_right)
        if e.value.den != 1:
            return _format(Div(Const(Rat(e.value.num)), Const(Rat(e.value.den))), parent_prec, is_right)
        text = str(e.value.num)
    elif isinstance(e, Var):
        text = e.name
    elif isinstance(e, Neg):
        text = "-" + _format(e.operand, prec, True)
    elif isinstance(e, Inv):
        return _format(Div(Const(Rat(1)), e.operand), parent_prec, is_right)
    elif isinstance(e, (Add, Sub, Mul, Div)):
        op = {Add: " + ", Sub: " - ", Mul: "*", Div: "/"}[type(e)]
        text = _format(e.left, prec, False) + op + _format(e.right, prec, True)
    else:
        raise TypeError(f"not an expression node: {e!r}")
    needs_parens = prec < parent_prec or (prec == parent_prec and is_right and not isinstance(e, (Const, Var, Neg)))
    return f"({text})" if needs_parens else text


# -- evaluation ---------------------------------------------------------------

def eval_expr(e: Expr, env: Mapping[str, Quantity] | None = None) -> Quantity:
    """Evaluate a tree over an environment of named quantities.

    Division is total (zero divisor yields zero); addition of unequal
    dimensions raises :class:`~bitguilder.units.DimensionMismatch`, and a
    variable missing from ``env`` raises :class:`UnboundVariable`.
    """
    env = env or {}
    if isinstance(e, Const):
        return Quantity(e.value, DIMENSIONLESS)
    if isinstance(e, Var):
        try:
            value = env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
        if isinstance(value, Rat):
            value = Quantity(value, DIMENSIONLESS)
        return value
    if isinstance(e, Neg):
        return -eval_expr(e.operand, env)
    if isinstance(e, Inv):
        return eval_expr(e.operand, env).inverse()
    if isinstance(e, Add):
        return eval_expr(e.left, env) + eval_expr(e.right, env)
    if isinstance(e, Sub):
        return eval_expr(e.left, env) - eval_expr(e.right, env)
    if isinstance(e, Mul):
        return eval_expr(e.left, env) * eval_expr(e.right, env)
    if isinstance(e, Div):
        return eval_expr(e.left, env) / eval_expr(e.right, env)
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Neg, Inv)):
        return free_variables(e.operand)
    return free_variables(e.left) | free_variables(e.right)
