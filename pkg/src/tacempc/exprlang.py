"""Small arithmetic expression language for dynamics, costs and outputs.

Grammar (standard precedence, ``^`` binds tighter than unary minus)::

    expr    :=  term (('+' | '-') term)*
    term    :=  unary (('*' | '/') unary)*
    unary   :=  '-' unary | power
    power   :=  atom ('^' exponent)?
    atom    :=  NUMBER | IDENT | '(' expr ')'

``+ - * /`` are left associative, ``^`` is right associative and its
exponent must be a nonnegative integer literal (chains like ``x^2^3``
collapse to ``x^8``).  Identifiers are ``x1..xn`` and ``u1..um``.

Evaluation works on scalars or numpy arrays (componentwise broadcast);
``eval_grad`` propagates forward-mode dual numbers and is exact for the
polynomial/rational expressions the grammar admits.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import TacempcError


class ExprSyntaxError(TacempcError, ValueError):
    """Malformed expression source; carries the character position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(TacempcError, ArithmeticError):
    """Runtime evaluation failure (division by zero)."""


# ---------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    kind: str  # 'x' or 'u'
    index: int  # zero-based


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # '+', '-', '*', '/'
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int  # >= 0


ExprNode = Union[Num, Var, Neg, BinOp, Pow]


# ---------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^()]))"
)

_IDENT_RE = re.compile(r"^([xu])([1-9]\d*)$")


class _Tokens:
    def __init__(self, source: str):
        self.source = source
        self.tokens = []  # (kind, text, pos)
        pos = 0
        while pos < len(source):
            match = _TOKEN_RE.match(source, pos)
            if match is None or match.end() == pos:
                stripped = source[pos:].lstrip()
                if not stripped:
                    break
                raise ExprSyntaxError(
                    f"unexpected character {stripped[0]!r}",
                    len(source) - len(stripped),
                )
            kind = match.lastgroup
            text = match.group(kind)
            self.tokens.append((kind, text, match.start(kind)))
            pos = match.end()
        self.tokens.append(("eof", "", len(source)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok


def parse(source: str, n: int, m: int) -> Expr:
    """Parse ``source`` into an Expr over x1..xn and u1..um."""
    toks = _Tokens(source)
    expr = _parse_expr(toks, n, m)
    kind, text, pos = toks.peek()
    if kind != "eof":
        raise ExprSyntaxError(f"unexpected token {text!r}", pos)
    return expr


def _parse_expr(toks, n, m):
    node = _parse_term(toks, n, m)
    while toks.peek()[1] in ("+", "-"):
        op = toks.next()[1]
        node = BinOp(op, node, _parse_term(toks, n, m))
    return node


def _parse_term(toks, n, m):
    node = _parse_unary(toks, n, m)
    while toks.peek()[1] in ("*", "/"):
        op = toks.next()[1]
        node = BinOp(op, node, _parse_unary(toks, n, m))
    return node


def _parse_unary(toks, n, m):
    if toks.peek()[1] == "-":
        toks.next()
        return Neg(_parse_unary(toks, n, m))
    return _parse_power(toks, n, m)


def _parse_power(toks, n, m):
    base = _parse_atom(toks, n, m)
    if toks.peek()[1] == "^":
        toks.next()
        return Pow(base, _parse_exponent(toks))
    return base


def _parse_exponent(toks):
    kind, text, pos = toks.next()
    if kind != "num" or not re.fullmatch(r"\d+", text):
        raise ExprSyntaxError("exponent must be a nonnegative integer literal", pos)
    value = int(text)
    if toks.peek()[1] == "^":  # right associative: x^2^3 == x^(2^3)
        toks.next()
        value = value ** _parse_exponent(toks)
    return value


def _parse_atom(toks, n, m):
    kind, text, pos = toks.next()
    if kind == "num":
        return Num(float(text))
    if kind == "ident":
        match = _IDENT_RE.match(text)
        if match is None:
            raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
        var_kind, one_based = match.group(1), int(match.group(2))
        limit = n if var_kind == "x" else m
        if one_based > limit:
            raise ExprSyntaxError(
                f"identifier {text!r} exceeds declared dimension {limit}", pos
            )
        return Var(var_kind, one_based - 1)
    if text == "(":
        node = _parse_expr(toks, n, m)
        kind, text, pos = toks.next()
        if text != ")":
            raise ExprSyntaxError("expected ')'", pos)
        return node
    raise ExprSyntaxError(f"expected a number, identifier or '(', got {text!r}", pos)


# ---------------------------------------------------------------------------
# Canonical printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def to_source(e: Expr) -> str:
    """Canonical, reparseable rendering with minimal parentheses."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"{e.kind}{e.index + 1}"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if _prec(e.arg) < _PREC_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = to_source(e.base)
        if _prec(e.base) < _PREC_ATOM:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, BinOp):
        level = _PREC[e.op]
        left = to_source(e.left)
        if _prec(e.left) < level:
            left = f"({left})"
        right = to_source(e.right)
        if _prec(e.right) <= level:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation

def eval(e: Expr, x, u):  # noqa: A001 - name fixed by the public API
    """Evaluate at state x and input u (scalars or broadcastable arrays)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x[e.index] if e.kind == "x" else u[e.index]
    if isinstance(e, Neg):
        return -eval(e.arg, x, u)
    if isinstance(e, Pow):
        return eval(e.base, x, u) ** e.exponent
    if isinstance(e, BinOp):
        a = eval(e.left, x, u)
        b = eval(e.right, x, u)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        _check_nonzero(b)
        return a / b
    raise TypeError(f"not an Expr: {e!r}")


def _check_nonzero(b):
    try:
        zero = bool((b == 0).any())  # array operand
    except AttributeError:
        zero = b == 0
    if zero:
        raise EvalError("division by zero")


def eval_grad(e: Expr, x, u):
    """Value and gradient w.r.t. (x1..xn, u1..um) at a single point.

    The gradient dimension is len(x) + len(u); forward-mode duals, exact
    for the polynomial/rational expressions the grammar admits.
    """
    n = len(x)
    dim = n + len(u)
    value, grad = _eval_dual(e, x, u, n, dim)
    return value, list(grad)


def _eval_dual(e, x, u, n, dim):
    if isinstance(e, Num):
        return e.value, (0.0,) * dim
    if isinstance(e, Var):
        slot = e.index if e.kind == "x" else n + e.index
        grad = [0.0] * dim
        grad[slot] = 1.0
        value = x[e.index] if e.kind == "x" else u[e.index]
        return float(value), tuple(grad)
    if isinstance(e, Neg):
        v, g = _eval_dual(e.arg, x, u, n, dim)
        return -v, tuple(-gi for gi in g)
    if isinstance(e, Pow):
        v, g = _eval_dual(e.base, x, u, n, dim)
        if e.exponent == 0:
            return 1.0, (0.0,) * dim
        scale = e.exponent * v ** (e.exponent - 1)
        return v**e.exponent, tuple(scale * gi for gi in g)
    if isinstance(e, BinOp):
        va, ga = _eval_dual(e.left, x, u, n, dim)
        vb, gb = _eval_dual(e.right, x, u, n, dim)
        if e.op == "+":
            return va + vb, tuple(a + b for a, b in zip(ga, gb))
        if e.op == "-":
            return va - vb, tuple(a - b for a, b in zip(ga, gb))
        if e.op == "*":
            return va * vb, tuple(vb * a + va * b for a, b in zip(ga, gb))
        if vb == 0:
            raise EvalError("division by zero")
        inv = 1.0 / vb
        return va * inv, tuple((a - va * inv * b) * inv for a, b in zip(ga, gb))
    raise TypeError(f"not an Expr: {e!r}")
