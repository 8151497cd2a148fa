"""Scalar fields on R^3 as expression trees with exact symbolic derivatives.

Expressions are built over the fixed variables ``x1``, ``x2``, ``x3`` from
decimal literals, ``+ - * /``, unary minus, integer powers ``^``, and the
unary functions ``sin``, ``cos``, ``exp``, ``max0``, ``step0``.

Grammar (highest precedence last)::

    expr     := term   { ("+" | "-") term }
    term     := factor { ("*" | "/") factor }
    factor   := "-" factor | power
    power    := atom [ "^" exponent ]
    exponent := ["-"] INTEGER
    atom     := NUMBER | IDENT "(" expr ")" | IDENT | "(" expr ")"

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.  Chained
exponents (``x^2^3``) are rejected.  ``max0(u)`` is ``max(u, 0)`` and
``step0(u)`` is its derivative kernel (1 for u > 0, else 0); the pair gives
piecewise-polynomial bumps of finite smoothness inside the same grammar.

Trees are immutable.  ``differentiate`` applies the textbook rules and only
simplifies through identity/annihilator rewrites (0+g, 1*g, 0*g, g^0, ...),
so derivative output stays structurally predictable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernel
from .errors import EvaluationError, ExprSyntaxError, UnknownIdentifierError

VAR_NAMES = ("x1", "x2", "x3")
FUNCTION_NAMES = ("sin", "cos", "exp", "max0", "step0")


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    index: int  # 0, 1, 2


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class Call(Node):
    name: str
    arg: Node


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_zero(n):
    return isinstance(n, Const) and n.value == 0.0


def _is_one(n):
    return isinstance(n, Const) and n.value == 1.0


# Smart constructors: identity/annihilator/cancellation rules only.  They
# never fold general constants and never touch division by a non-literal-one.

def add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Neg(b)
    if a == b:
        # structural cancellation; determinants of frames with repeated
        # columns collapse to the zero field this way
        return ZERO
    return Sub(a, b)


def mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_one(b):
        return a
    return Div(a, b)


def neg(a):
    return Neg(a)


def powi(base, exponent):
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    return Pow(base, int(exponent))


def call(name, arg):
    if name not in FUNCTION_NAMES:
        raise ValueError(f"unknown function {name!r}")
    return Call(name, arg)


def const(value):
    return Const(float(value))


def var(index):
    return Var(_var_index(index))


def _var_index(v):
    if isinstance(v, str):
        try:
            return VAR_NAMES.index(v)
        except ValueError:
            raise ValueError(f"unknown variable {v!r}") from None
    v = int(v)
    if not 0 <= v <= 2:
        raise ValueError(f"variable index out of range: {v}")
    return v


# ---------------------------------------------------------------------------
# differentiation

def _diff(node, v):
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == v else ZERO
    if isinstance(node, Neg):
        return neg(_diff(node.arg, v))
    if isinstance(node, Add):
        return add(_diff(node.left, v), _diff(node.right, v))
    if isinstance(node, Sub):
        return sub(_diff(node.left, v), _diff(node.right, v))
    if isinstance(node, Mul):
        return add(mul(_diff(node.left, v), node.right),
                   mul(node.left, _diff(node.right, v)))
    if isinstance(node, Div):
        # (u'v - uv') / v^2
        u, w = node.left, node.right
        num = sub(mul(_diff(u, v), w), mul(u, _diff(w, v)))
        if _is_zero(num):
            return ZERO
        return Div(num, Pow(w, 2))
    if isinstance(node, Pow):
        n = node.exponent
        if n == 0:
            return ZERO
        du = _diff(node.base, v)
        return mul(mul(Const(float(n)), powi(node.base, n - 1)), du)
    if isinstance(node, Call):
        du = _diff(node.arg, v)
        if node.name == "sin":
            return mul(Call("cos", node.arg), du)
        if node.name == "cos":
            return neg(mul(Call("sin", node.arg), du))
        if node.name == "exp":
            return mul(Call("exp", node.arg), du)
        if node.name == "max0":
            return mul(Call("step0", node.arg), du)
        if node.name == "step0":
            return ZERO
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# printing

_LEVEL_ADD = 1
_LEVEL_MUL = 2
_LEVEL_NEG = 3
_LEVEL_POW = 4
_LEVEL_ATOM = 5


def _level(node):
    if isinstance(node, (Add, Sub)):
        return _LEVEL_ADD
    if isinstance(node, (Mul, Div)):
        return _LEVEL_MUL
    if isinstance(node, Neg):
        return _LEVEL_NEG
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return _LEVEL_NEG  # prints with a leading minus
    if isinstance(node, Pow):
        return _LEVEL_POW
    return _LEVEL_ATOM


def _wrap(text, need):
    return f"({text})" if need else text


def _to_str(node):
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return VAR_NAMES[node.index]
    if isinstance(node, Neg):
        inner = _to_str(node.arg)
        return "-" + _wrap(inner, _level(node.arg) < _LEVEL_NEG)
    if isinstance(node, (Add, Sub, Mul, Div)):
        op, lvl = {
            Add: ("+", _LEVEL_ADD), Sub: ("-", _LEVEL_ADD),
            Mul: ("*", _LEVEL_MUL), Div: ("/", _LEVEL_MUL),
        }[type(node)]
        # left-associative: right child at the same level keeps its parens
        left = _wrap(_to_str(node.left), _level(node.left) < lvl)
        right = _wrap(_to_str(node.right), _level(node.right) <= lvl)
        return f"{left}{op}{right}"
    if isinstance(node, Pow):
        base = _wrap(_to_str(node.base), _level(node.base) < _LEVEL_ATOM)
        return f"{base}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.name}({_to_str(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# parsing

_TOK_NUM = "num"
_TOK_IDENT = "ident"
_TOK_OP = "op"
_TOK_END = "end"


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((_TOK_OP, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ExprSyntaxError(f"bad number literal {lit!r}", i) from None
            tokens.append((_TOK_NUM, value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append((_TOK_IDENT, text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append((_TOK_END, "", n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, symbol):
        kind, value, offset = self.peek()
        if kind != _TOK_OP or value != symbol:
            raise ExprSyntaxError(f"expected {symbol!r}", offset)
        return self.take()

    def parse(self):
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != _TOK_END:
            raise ExprSyntaxError(f"unexpected {value!r}", offset)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == _TOK_OP and value in "+-":
                self.take()
                rhs = self.term()
                node = Add(node, rhs) if value == "+" else Sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == _TOK_OP and value in "*/":
                self.take()
                rhs = self.factor()
                node = Mul(node, rhs) if value == "*" else Div(node, rhs)
            else:
                return node

    def factor(self):
        kind, value, _ = self.peek()
        if kind == _TOK_OP and value == "-":
            self.take()
            return Neg(self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        kind, value, _ = self.peek()
        if kind == _TOK_OP and value == "^":
            self.take()
            node = Pow(node, self.exponent())
        return node

    def exponent(self):
        sign = 1
        kind, value, offset = self.peek()
        if kind == _TOK_OP and value == "-":
            self.take()
            sign = -1
            kind, value, offset = self.peek()
        if kind != _TOK_NUM or value != int(value):
            raise ExprSyntaxError("exponent must be an integer literal", offset)
        self.take()
        return sign * int(value)

    def atom(self):
        kind, value, offset = self.take()
        if kind == _TOK_NUM:
            return Const(value)
        if kind == _TOK_IDENT:
            if value in VAR_NAMES:
                return Var(VAR_NAMES.index(value))
            if value in FUNCTION_NAMES:
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return Call(value, inner)
            raise UnknownIdentifierError(f"unknown identifier {value!r}", offset)
        if kind == _TOK_OP and value == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ExprSyntaxError("expected a value", offset)


# ---------------------------------------------------------------------------
# compilation to kernel programs

def _compile(root):
    code = []
    consts = []

    def emit(node):
        if isinstance(node, Const):
            code.append((kernel.OP_CONST, len(consts)))
            consts.append(node.value)
            return 1
        if isinstance(node, Var):
            code.append((kernel.OP_VAR, node.index))
            return 1
        if isinstance(node, Neg):
            d = emit(node.arg)
            code.append((kernel.OP_NEG, 0))
            return d
        if isinstance(node, (Add, Sub, Mul, Div)):
            op = {Add: kernel.OP_ADD, Sub: kernel.OP_SUB,
                  Mul: kernel.OP_MUL, Div: kernel.OP_DIV}[type(node)]
            dl = emit(node.left)
            dr = emit(node.right)
            code.append((op, 0))
            return max(dl, 1 + dr)
        if isinstance(node, Pow):
            d = emit(node.base)
            code.append((kernel.OP_POWI, node.exponent))
            return d
        if isinstance(node, Call):
            d = emit(node.arg)
            op = {"sin": kernel.OP_SIN, "cos": kernel.OP_COS,
                  "exp": kernel.OP_EXP, "max0": kernel.OP_MAX0,
                  "step0": kernel.OP_STEP0}[node.name]
            code.append((op, 0))
            return d
        raise TypeError(f"not an expression node: {node!r}")

    depth = emit(root)
    if depth > kernel.STACK_CAP:
        raise ValueError(f"expression too deep for the evaluator ({depth} slots)")
    flat = np.asarray(code, dtype=np.int32).reshape(-1)
    return kernel.Program(flat, np.asarray(consts, dtype=np.float64), depth)


# ---------------------------------------------------------------------------
# interval bounds

_INF = math.inf


def _ibounds(node, lo, hi):
    """Conservative range of `node` over the box [lo1,hi1]x[lo2,hi2]x[lo3,hi3]."""
    if isinstance(node, Const):
        return node.value, node.value
    if isinstance(node, Var):
        return lo[node.index], hi[node.index]
    if isinstance(node, Neg):
        a, b = _ibounds(node.arg, lo, hi)
        return -b, -a
    if isinstance(node, Add):
        a, b = _ibounds(node.left, lo, hi)
        c, d = _ibounds(node.right, lo, hi)
        return a + c, b + d
    if isinstance(node, Sub):
        a, b = _ibounds(node.left, lo, hi)
        c, d = _ibounds(node.right, lo, hi)
        return a - d, b - c
    if isinstance(node, Mul):
        a, b = _ibounds(node.left, lo, hi)
        c, d = _ibounds(node.right, lo, hi)
        prods = (a * c, a * d, b * c, b * d)
        return min(prods), max(prods)
    if isinstance(node, Div):
        a, b = _ibounds(node.left, lo, hi)
        c, d = _ibounds(node.right, lo, hi)
        if c <= 0.0 <= d:
            return -_INF, _INF
        quots = (a / c, a / d, b / c, b / d)
        return min(quots), max(quots)
    if isinstance(node, Pow):
        a, b = _ibounds(node.base, lo, hi)
        n = node.exponent
        if n >= 0:
            if n % 2 == 1:
                return a ** n, b ** n
            m = max(a ** n, b ** n)
            return (0.0 if a <= 0.0 <= b else min(a ** n, b ** n)), m
        if a <= 0.0 <= b:
            return -_INF, _INF
        vals = (a ** n, b ** n)
        return min(vals), max(vals)
    if isinstance(node, Call):
        a, b = _ibounds(node.arg, lo, hi)
        if node.name in ("sin", "cos"):
            return -1.0, 1.0
        if node.name == "exp":
            return math.exp(a) if a > -_INF else 0.0, math.exp(b) if b < _INF else _INF
        if node.name == "max0":
            return max(a, 0.0), max(b, 0.0)
        if node.name == "step0":
            return (1.0 if a > 0.0 else 0.0), (0.0 if b <= 0.0 else 1.0)
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# public surface

class ScalarField:
    """Immutable scalar field, evaluable and exactly differentiable."""

    __slots__ = ("root", "_program")

    def __init__(self, root):
        if not isinstance(root, Node):
            raise TypeError("ScalarField wraps an expression node")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "_program", None)

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    @property
    def program(self):
        prog = self._program
        if prog is None:
            prog = _compile(self.root)
            object.__setattr__(self, "_program", prog)
        return prog

    def eval(self, x):
        """Evaluate at a point (3 floats).  Raises EvaluationError on /0."""
        x1, x2, x3 = float(x[0]), float(x[1]), float(x[2])
        return kernel.eval_scalar(self.program, x1, x2, x3)

    def eval_many(self, pts):
        """Evaluate at an (n, 3) array of points; returns shape (n,)."""
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("expected an (n, 3) array of points")
        return kernel.eval_batch(self.program, pts)

    def diff(self, v):
        """Exact partial derivative with respect to x1/x2/x3 (name or 0-2)."""
        return ScalarField(_diff(self.root, _var_index(v)))

    def variables(self):
        """Indices of variables the expression actually reads."""
        found = set()

        def walk(node):
            if isinstance(node, Var):
                found.add(node.index)
            elif isinstance(node, Neg):
                walk(node.arg)
            elif isinstance(node, (Add, Sub, Mul, Div)):
                walk(node.left)
                walk(node.right)
            elif isinstance(node, Pow):
                walk(node.base)
            elif isinstance(node, Call):
                walk(node.arg)

        walk(self.root)
        return frozenset(found)

    def bound_range(self, lo, hi):
        """Interval-arithmetic bounds (may be infinite) over a box."""
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        return _ibounds(self.root, lo, hi)

    def __call__(self, x):
        return self.eval(x)

    def __str__(self):
        return _to_str(self.root)

    def __repr__(self):
        return f"ScalarField({_to_str(self.root)!r})"

    def __eq__(self, other):
        return isinstance(other, ScalarField) and self.root == other.root

    def __hash__(self):
        return hash(self.root)


def parse_expr(text):
    """Parse expression text into a ScalarField.

    Raises ExprSyntaxError (with a character offset) on malformed input and
    UnknownIdentifierError for identifiers outside the fixed vocabulary.
    """
    return ScalarField(_Parser(text).parse())


def differentiate(field, v):
    """Exact partial derivative of a ScalarField."""
    return field.diff(v)


def evaluate(field, x):
    """Evaluate a ScalarField at a point."""
    return field.eval(x)


def as_field(obj):
    """Coerce a ScalarField, expression string, or number to a ScalarField."""
    if isinstance(obj, ScalarField):
        return obj
    if isinstance(obj, str):
        return parse_expr(obj)
    if isinstance(obj, (int, float)):
        return ScalarField(Const(float(obj)))
    if isinstance(obj, Node):
        return ScalarField(obj)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a scalar field")
