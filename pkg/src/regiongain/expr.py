"""Scalar arithmetic expressions: parser, evaluator, stack-machine compiler.

Expressions carry vector fields, storage functions and gains supplied in
configuration files.  The grammar is conventional infix arithmetic with
``^`` for exponentiation (binding tighter than unary minus), the unary
functions ``abs, sin, cos, exp, sqrt`` and the n-ary ``min``/``max``.

Parsed trees are immutable; evaluation is pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnboundVariableError",
    "DomainError",
    "Expression",
    "parse",
    "evaluate",
    "to_source",
    "variables",
    "compile_program",
    "Program",
]


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    """Malformed source text.  Carries the 0-based position of the offense."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class UnboundVariableError(ExprError):
    pass


class DomainError(ExprError):
    """Evaluation left the real line (division by zero, sqrt of a negative,
    a negative base raised to a fractional power, overflow)."""


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # neg, abs, sin, cos, exp, sqrt
    operand: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # add, sub, mul, div, pow
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class MinMax:
    op: str  # min, max
    args: tuple


Expression = Const | Var | Unary | Binary | MinMax

_UNARY_FUNCS = ("abs", "sin", "cos", "exp", "sqrt")
_NARY_FUNCS = ("min", "max")


# ---------------------------------------------------------------------------
# Tokenizer / parser (recursive descent)

_PUNCT = "+-*/^(),"


def _tokenize(source):
    tokens = []  # (kind, text, pos)
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
        elif c in _PUNCT:
            tokens.append((c, c, i))
            i += 1
        elif c.isdigit() or c == ".":
            j = i
            while j < n and (source[j].isdigit() or source[j] == "."):
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise ExprSyntaxError(f"bad number literal {text!r}", i) from None
            tokens.append(("num", text, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("name", source[i:j], i))
            i = j
        else:
            raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ExprSyntaxError(
                f"expected {kind!r}, found {tok[1] or 'end of input'!r}", tok[2]
            )
        return tok

    # expr := term (('+'|'-') term)*
    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            rhs = self.term()
            node = Binary("add" if op == "+" else "sub", node, rhs)
        return node

    # term := unary (('*'|'/') unary)*
    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            rhs = self.unary()
            node = Binary("mul" if op == "*" else "div", node, rhs)
        return node

    # unary := '-' unary | power   (so -x^2 parses as -(x^2))
    def unary(self):
        if self.peek()[0] == "-":
            self.next()
            return Unary("neg", self.unary())
        if self.peek()[0] == "+":
            self.next()
            return self.unary()
        return self.power()

    # power := atom ('^' unary)?   (right associative, exponent may be signed)
    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.next()
            return Binary("pow", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.next()
        if kind == "num":
            return Const(float(text))
        if kind == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[0] == "(":
                self.next()
                args = [self.expr()]
                while self.peek()[0] == ",":
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                if text in _UNARY_FUNCS:
                    if len(args) != 1:
                        raise ExprSyntaxError(
                            f"{text} takes exactly one argument", pos
                        )
                    return Unary(text, args[0])
                if text in _NARY_FUNCS:
                    if len(args) < 2:
                        raise ExprSyntaxError(
                            f"{text} takes at least two arguments", pos
                        )
                    return MinMax(text, tuple(args))
                raise ExprSyntaxError(f"unknown function {text!r}", pos)
            return Var(text)
        raise ExprSyntaxError(
            f"unexpected {text or 'end of input'!r}", pos
        )


def parse(source: str) -> Expression:
    """Parse infix source text into an expression tree."""
    p = _Parser(_tokenize(source))
    node = p.expr()
    kind, text, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"trailing input {text!r}", pos)
    return node


# ---------------------------------------------------------------------------
# Evaluation

def variables(e: Expression) -> set:
    """Free variable names of the tree."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Unary):
            stack.append(node.operand)
        elif isinstance(node, Binary):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, MinMax):
            stack.extend(node.args)
    return out


def evaluate(e: Expression, bindings: dict) -> float:
    """Evaluate the tree at finite real bindings, in double precision.

    Raises UnboundVariableError or DomainError where arithmetic leaves the
    finite reals.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariableError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Unary):
        v = evaluate(e.operand, bindings)
        if e.op == "neg":
            return -v
        if e.op == "abs":
            return abs(v)
        if e.op == "sin":
            return math.sin(v)
        if e.op == "cos":
            return math.cos(v)
        if e.op == "exp":
            try:
                return math.exp(v)
            except OverflowError:
                raise DomainError(f"exp overflow at {v}") from None
        if e.op == "sqrt":
            if v < 0:
                raise DomainError(f"sqrt of negative value {v}")
            return math.sqrt(v)
    if isinstance(e, Binary):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "add":
            return a + b
        if e.op == "sub":
            return a - b
        if e.op == "mul":
            return a * b
        if e.op == "div":
            if b == 0.0:
                raise DomainError("division by zero")
            return a / b
        if e.op == "pow":
            if a < 0 and b != math.floor(b):
                raise DomainError(
                    f"non-real power: base {a} with fractional exponent {b}"
                )
            try:
                r = math.pow(a, b)
            except (OverflowError, ValueError):
                raise DomainError(f"pow({a}, {b}) left the reals") from None
            return r
    if isinstance(e, MinMax):
        vals = [evaluate(a, bindings) for a in e.args]
        return min(vals) if e.op == "min" else max(vals)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Pretty printer.  Output re-parses to an equivalent tree.

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def to_source(e: Expression) -> str:
    src, _ = _render(e)
    return src


def _render(e):
    if isinstance(e, Const):
        return repr(e.value), 5
    if isinstance(e, Var):
        return e.name, 5
    if isinstance(e, Unary):
        if e.op == "neg":
            inner, prec = _render(e.operand)
            # operand of unary minus must bind at least as tight as neg,
            # except pow which binds tighter anyway
            if prec < _PREC["neg"]:
                inner = f"({inner})"
            return f"-{inner}", _PREC["neg"]
        inner, _ = _render(e.operand)
        return f"{e.op}({inner})", 5
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        ls, lp = _render(e.left)
        rs, rp = _render(e.right)
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[e.op]
        if lp < prec or (e.op == "pow" and lp <= prec):
            ls = f"({ls})"
        # sub/div are left associative; pow is right associative
        if rp < prec or (e.op in ("sub", "div") and rp == prec):
            rs = f"({rs})"
        if e.op == "pow" and isinstance(e.right, Unary) and e.right.op == "neg":
            pass  # exponent may be signed without parens
        return f"{ls} {sym} {rs}" if e.op != "pow" else f"{ls}^{rs}", prec
    if isinstance(e, MinMax):
        parts = ", ".join(_render(a)[0] for a in e.args)
        return f"{e.op}({parts})", 5
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Compilation to a flat postfix program for the numeric kernels

OP_CONST = 0
OP_VAR = 1
OP_NEG = 2
OP_ABS = 3
OP_SIN = 4
OP_COS = 5
OP_EXP = 6
OP_SQRT = 7
OP_ADD = 8
OP_SUB = 9
OP_MUL = 10
OP_DIV = 11
OP_POW = 12
OP_MIN = 13
OP_MAX = 14

_UNARY_CODE = {
    "neg": OP_NEG,
    "abs": OP_ABS,
    "sin": OP_SIN,
    "cos": OP_COS,
    "exp": OP_EXP,
    "sqrt": OP_SQRT,
}
_BINARY_CODE = {
    "add": OP_ADD,
    "sub": OP_SUB,
    "mul": OP_MUL,
    "div": OP_DIV,
    "pow": OP_POW,
}


@dataclass(frozen=True)
class Program:
    """Flat postfix form of an expression, ready for the stack machine."""

    ops: np.ndarray  # int32 opcodes
    arg: np.ndarray  # int32 variable indices
    val: np.ndarray  # float64 constants
    var_names: tuple

    @property
    def n_vars(self):
        return len(self.var_names)


def compile_program(e: Expression, var_names) -> Program:
    """Flatten the tree to postfix over the given variable ordering.

    Raises UnboundVariableError if the tree references a name not listed.
    """
    var_names = tuple(var_names)
    index = {name: i for i, name in enumerate(var_names)}
    ops, arg, val = [], [], []

    def emit(op, a=0, v=0.0):
        ops.append(op)
        arg.append(a)
        val.append(v)

    def walk(node):
        if isinstance(node, Const):
            emit(OP_CONST, 0, node.value)
        elif isinstance(node, Var):
            if node.name not in index:
                raise UnboundVariableError(
                    f"variable {node.name!r} not declared (have {var_names})"
                )
            emit(OP_VAR, index[node.name])
        elif isinstance(node, Unary):
            walk(node.operand)
            emit(_UNARY_CODE[node.op])
        elif isinstance(node, Binary):
            walk(node.left)
            walk(node.right)
            emit(_BINARY_CODE[node.op])
        elif isinstance(node, MinMax):
            walk(node.args[0])
            code = OP_MIN if node.op == "min" else OP_MAX
            for a in node.args[1:]:
                walk(a)
                emit(code)
        else:
            raise TypeError(f"not an expression node: {node!r}")

    walk(e)
    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        arg=np.asarray(arg, dtype=np.int32),
        val=np.asarray(val, dtype=np.float64),
        var_names=var_names,
    )
