"""Scalar expression language: lexing, parsing, evaluation, exact derivatives.

Metric components, potentials and force components are written as text over
named coordinates (``r``, ``theta``) and velocities (``r_dot``). The grammar
is documented in ``docs/expression-grammar.md``::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" unary)?
    primary := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

Every node is an immutable dataclass, so structural equality is ``==``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Token", "Const", "Var", "Neg", "BinOp", "Call", "Expr", "FUNCTIONS",
    "ExprError", "LexError", "ParseError", "UnboundVariableError",
    "DomainError", "UnsupportedNodeError",
    "tokenize", "parse", "parse_expr", "evaluate", "differentiate",
    "simplify", "to_string", "free_variables", "substitute", "is_constant",
    "compile_exprs",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "abs")


class ExprError(ValueError):
    """Base class for every error raised by the expression engine."""


class LexError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class DomainError(ExprError):
    """Numeric domain violation (ln of non-positive, division by zero, ...)."""


class UnsupportedNodeError(ExprError):
    pass


# --------------------------------------------------------------------------
# tokens

@dataclass(frozen=True)
class Token:
    kind: str  # number | identifier | operator | lparen | rparen | comma
    lexeme: str
    position: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<identifier>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<operator>[-+*/^])
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise LexError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            lexeme = m.group()
            if kind == "number" and not math.isfinite(float(lexeme)):
                raise LexError(f"number literal {lexeme!r} is not finite", pos)
            tokens.append(Token(kind, lexeme, pos))
        pos = m.end()
    return tokens


# --------------------------------------------------------------------------
# tree

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Const, Var, Neg, BinOp, Call]

ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, tokens: Sequence[Token], source_len: int):
        self.tokens = list(tokens)
        self.i = 0
        self.end = source_len

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def offset(self) -> int:
        tok = self.peek()
        if tok is not None:
            return tok.position
        if self.tokens:
            last = self.tokens[-1]
            return last.position + len(last.lexeme)
        return self.end

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "operator" and tok.lexeme in ops

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            found = "end of input" if tok is None else repr(tok.lexeme)
            raise ParseError(f"expected {what}, found {found}", self.offset())
        return self.advance()

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError("empty expression", 0)
        e = self.expr()
        tok = self.peek()
        if tok is not None:
            if tok.kind == "rparen":
                raise ParseError("unbalanced ')'", tok.position)
            raise ParseError(f"unexpected {tok.lexeme!r}", tok.position)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.at_op("+", "-"):
            op = self.advance().lexeme
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().lexeme
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            tok = self.peek()
            nxt = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else None
            # "-2" is a negative literal; "-2^2" is still neg(2^2)
            if tok is not None and tok.kind == "number" and not (
                nxt is not None and nxt.kind == "operator" and nxt.lexeme == "^"
            ):
                self.advance()
                return Const(-float(tok.lexeme))
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.at_op("^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.offset())
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.lexeme))
        if tok.kind == "identifier":
            self.advance()
            nxt = self.peek()
            if nxt is not None and nxt.kind == "lparen":
                if tok.lexeme not in FUNCTIONS:
                    raise ParseError(f"unknown function {tok.lexeme!r}", tok.position)
                self.advance()
                arg = self.expr()
                close = self.peek()
                if close is not None and close.kind == "comma":
                    raise ParseError(
                        f"function {tok.lexeme!r} takes exactly one argument",
                        close.position,
                    )
                self.expect("rparen", "')'")
                return Call(tok.lexeme, arg)
            if tok.lexeme in FUNCTIONS:
                raise ParseError(f"function {tok.lexeme!r} needs '('", self.offset())
            return Var(tok.lexeme)
        if tok.kind == "lparen":
            self.advance()
            e = self.expr()
            self.expect("rparen", "')'")
            return e
        raise ParseError(f"unexpected {tok.lexeme!r}", tok.position)


def parse(tokens: Sequence[Token], source_len: int = 0) -> Expr:
    return _Parser(tokens, source_len).parse()


def parse_expr(source: str) -> Expr:
    """Tokenize and parse ``source`` in one go."""
    return parse(tokenize(source), len(source))


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def _fmt_number(v: float) -> str:
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    if s.startswith("-"):
        return f"({s})"
    return s


def to_string(e: Expr) -> str:
    """Render ``e`` so that ``parse_expr(to_string(e)) == e``."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if isinstance(e.arg, Const) or _prec(e.arg) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left, right = to_string(e.left), to_string(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _NEG_PREC:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# --------------------------------------------------------------------------
# evaluation

def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _pow(a: float, b: float) -> float:
    if a == 0.0 and b < 0.0:
        raise DomainError("zero raised to a negative power")
    if a < 0.0 and not float(b).is_integer():
        raise DomainError(f"negative base {a!r} with non-integer exponent {b!r}")
    try:
        return math.pow(a, b)
    except OverflowError:
        raise DomainError("overflow in '^'") from None


def _ln(a: float) -> float:
    if a <= 0.0:
        raise DomainError(f"ln of non-positive value {a!r}")
    return math.log(a)


def _sqrt(a: float) -> float:
    if a < 0.0:
        raise DomainError(f"sqrt of negative value {a!r}")
    return math.sqrt(a)


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError("overflow in exp") from None


def _trig(fn: Callable[[float], float], name: str) -> Callable[[float], float]:
    def wrapped(a: float) -> float:
        if not math.isfinite(a):
            raise DomainError(f"{name} of non-finite value")
        return fn(a)
    return wrapped


_FUNC_IMPL: dict[str, Callable[[float], float]] = {
    "sin": _trig(math.sin, "sin"),
    "cos": _trig(math.cos, "cos"),
    "tan": _trig(math.tan, "tan"),
    "exp": _exp,
    "ln": _ln,
    "sqrt": _sqrt,
    "abs": abs,
}


def _finite(x: float, where: str) -> float:
    if not math.isfinite(x):
        raise DomainError(f"non-finite result in {where}")
    return x


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Call):
        return _finite(_FUNC_IMPL[e.func](evaluate(e.arg, env)), e.func)
    a = evaluate(e.left, env)
    b = evaluate(e.right, env)
    op = e.op
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    elif op == "/":
        r = _div(a, b)
    else:
        r = _pow(a, b)
    return _finite(r, f"'{op}'")


# --------------------------------------------------------------------------
# structure helpers

def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, (Neg, Call)):
        return free_variables(e.arg)
    return free_variables(e.left) | free_variables(e.right)


def is_constant(e: Expr) -> bool:
    return not free_variables(e)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (used for named scenario constants)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


# --------------------------------------------------------------------------
# simplification

def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def simplify(e: Expr) -> Expr:
    """Constant folding plus a handful of value-preserving identities.

    Identities: ``0+e``, ``e+0``, ``e-0``, ``0-e -> -e``, ``1*e``, ``e*1``,
    ``(-1)*e -> -e``, ``0*e -> 0``, ``e/1``, ``e^1``, ``--e``, ``e-e -> 0`` and ``e+(-e) -> 0``.
    Annihilation happens before any domain check, so ``0*(1/x)`` is ``0``.
    Folds that would raise (``1/0``) are left in place.
    """
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        a = simplify(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        a = simplify(e.arg)
        if isinstance(a, Const):
            try:
                return Const(evaluate(Call(e.func, a), {}))
            except DomainError:
                pass
        return Call(e.func, a)

    left, right = simplify(e.left), simplify(e.right)
    op = e.op
    if isinstance(left, Const) and isinstance(right, Const):
        try:
            return Const(evaluate(BinOp(op, left, right), {}))
        except DomainError:
            return BinOp(op, left, right)
    if op == "+":
        if _is(left, 0.0):
            return right
        if _is(right, 0.0):
            return left
        if (isinstance(right, Neg) and right.arg == left) or (
            isinstance(left, Neg) and left.arg == right
        ):
            return ZERO
    elif op == "-":
        if _is(right, 0.0):
            return left
        if _is(left, 0.0):
            return simplify(Neg(right))
        if left == right:
            return ZERO
    elif op == "*":
        if _is(left, 0.0) or _is(right, 0.0):
            return ZERO
        if _is(left, 1.0):
            return right
        if _is(right, 1.0):
            return left
        if _is(left, -1.0):
            return simplify(Neg(right))
        if _is(right, -1.0):
            return simplify(Neg(left))
    elif op == "/":
        if _is(right, 1.0):
            return left
    elif op == "^":
        if _is(right, 1.0):
            return left
    return BinOp(op, left, right)


# --------------------------------------------------------------------------
# differentiation

def _d(e: Expr, var: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return Neg(_d(e.arg, var))
    if isinstance(e, Call):
        u = e.arg
        du = _d(u, var)
        f = e.func
        if f == "sin":
            outer: Expr = Call("cos", u)
        elif f == "cos":
            outer = Neg(Call("sin", u))
        elif f == "tan":
            outer = BinOp("/", ONE, BinOp("^", Call("cos", u), Const(2.0)))
        elif f == "exp":
            outer = e
        elif f == "ln":
            return BinOp("/", du, u)
        elif f == "sqrt":
            return BinOp("/", du, BinOp("*", Const(2.0), e))
        elif f == "abs":
            outer = BinOp("/", u, e)
        else:  # pragma: no cover - parser rejects unknown names
            raise UnsupportedNodeError(f"unknown function {f!r}")
        return BinOp("*", outer, du)

    a, b = e.left, e.right
    if e.op in "+-":
        return BinOp(e.op, _d(a, var), _d(b, var))
    if e.op == "*":
        return BinOp("+", BinOp("*", _d(a, var), b), BinOp("*", a, _d(b, var)))
    if e.op == "/":
        num = BinOp("-", BinOp("*", _d(a, var), b), BinOp("*", a, _d(b, var)))
        return BinOp("/", num, BinOp("^", b, Const(2.0)))
    # power rule, exponent must not depend on any variable
    if not is_constant(b):
        raise UnsupportedNodeError(
            f"non-constant exponent {to_string(b)!r} cannot be differentiated"
        )
    c = evaluate(b, {})
    if c == 0.0:
        return ZERO
    return BinOp("*", BinOp("*", Const(c), BinOp("^", a, Const(c - 1.0))), _d(a, var))


def differentiate(e: Expr, var: str) -> Expr:
    """Exact derivative of ``e`` with respect to ``var``, simplified."""
    return simplify(_d(e, var))


# --------------------------------------------------------------------------
# compilation to Python callables (hot path for integrators)

_COMPILE_NS = {
    "_div": _div, "_pow": _pow,
    **{f"_{name}": fn for name, fn in _FUNC_IMPL.items()},
}


def _emit(e: Expr, slots: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        try:
            return slots[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return f"(-{_emit(e.arg, slots)})"
    if isinstance(e, Call):
        return f"_{e.func}({_emit(e.arg, slots)})"
    a, b = _emit(e.left, slots), _emit(e.right, slots)
    if e.op == "/":
        return f"_div({a}, {b})"
    if e.op == "^":
        return f"_pow({a}, {b})"
    return f"({a} {e.op} {b})"


def compile_exprs(exprs: Iterable[Expr], names: Sequence[str]) -> Callable[..., tuple]:
    """Compile several expressions into one function of positional ``names``.

    The returned callable yields a tuple of floats, one per expression, and
    raises :class:`DomainError` on the same violations as :func:`evaluate`
    (overflow is only detected on the final value of each expression).
    """
    slots = {name: f"a{i}" for i, name in enumerate(names)}
    bodies = [_emit(e, slots) for e in exprs]
    args = ", ".join(slots.values())
    src = f"def _f({args}):\n    return _chk(({', '.join(bodies)}{',' if bodies else ''}))\n"
    ns = dict(_COMPILE_NS, _chk=_check_all)
    exec(compile(src, "<relforce-expr>", "exec"), ns)
    return ns["_f"]


def _check_all(values: tuple) -> tuple:
    for v in values:
        if not math.isfinite(v):
            raise DomainError("non-finite value")
    return values
