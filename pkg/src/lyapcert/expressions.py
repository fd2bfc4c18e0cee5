"""Small arithmetic expression language for user-supplied fields and candidates.

Grammar (whitespace insignificant, identifiers case-sensitive):

    expr    := term (('+'|'-') term)*
    term    := factor (('*'|'/') factor)*
    factor  := unary ('^' factor)?          # '^' right-associative
    unary   := '-'? primary
    primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Variables are ``x1`` .. ``xn``; named constants ``pi`` and ``e``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {
    "min": (2, None),  # at least 2 args
    "max": (2, None),
    "abs": (1, 1),
    "sqrt": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "ln": (1, 1),
}

NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}

# ASCII '-' plus the unicode minus sign accepted on input.
_MINUS = {"-", "−"}


class ExpressionError(ValueError):
    """Parse-time failure; carries the byte offset of the offending token."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvaluationError(ArithmeticError):
    """Raised when an expression cannot be evaluated to a finite real."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as in the source text


@dataclass(frozen=True)
class Neg:
    child: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Const | Var | Neg | BinOp | Call


# ---------------------------------------------------------------------------
# Tokenizer


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _MINUS:
            tokens.append(("op", "-", i))
            i += 1
        elif c in "+*/^(),":
            kind = {"(": "lparen", ")": "rparen", ",": "comma"}.get(c, "op")
            tokens.append((kind, c, i))
            i += 1
        elif c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and (text[k] in "+-" or text[k] in _MINUS):
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j].replace("−", "-"))
            except ValueError:
                raise ExpressionError(f"malformed number {text[i:j]!r}", i) from None
            tokens.append(("number", value, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
        else:
            raise ExpressionError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, tokens, dimension):
        self.tokens = tokens
        self.pos = 0
        self.dimension = dimension

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.peek()
        if tok[0] != kind:
            raise ExpressionError(f"expected {what}, found {tok[1]!r}" if tok[1] else f"expected {what}, found end of input", tok[2])
        return self.advance()

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.parse_factor())
        return node

    def parse_factor(self):
        node = self.parse_unary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            node = BinOp("^", node, self.parse_factor())  # right-assoc
        return node

    def parse_unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.parse_primary())
        return self.parse_primary()

    def parse_primary(self):
        tok = self.advance()
        kind, value, offset = tok
        if kind == "number":
            return Const(value)
        if kind == "lparen":
            node = self.parse_expr()
            self.expect("rparen", "')'")
            return node
        if kind == "ident":
            if self.peek()[0] == "lparen":
                self.advance()
                args = [self.parse_expr()]
                while self.peek()[0] == "comma":
                    self.advance()
                    args.append(self.parse_expr())
                self.expect("rparen", "')'")
                if value not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {value!r}", offset)
                lo, hi = FUNCTIONS[value]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ExpressionError(
                        f"function {value!r} takes "
                        + (f"{lo} argument(s)" if hi == lo else f"at least {lo} arguments")
                        + f", got {len(args)}",
                        offset,
                    )
                return Call(value, tuple(args))
            if value in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[value])
            if value.startswith("x") and value[1:].isdigit():
                index = int(value[1:])
                if not 1 <= index <= self.dimension:
                    raise ExpressionError(
                        f"variable {value!r} out of range for dimension {self.dimension}", offset
                    )
                return Var(index)
            raise ExpressionError(f"unknown identifier {value!r}", offset)
        if kind == "end":
            raise ExpressionError("unexpected end of input", offset)
        raise ExpressionError(f"unexpected token {value!r}", offset)


def parse_expression(text, dimension):
    """Parse ``text`` into an AST over variables x1..x<dimension>."""
    if not text or not text.strip():
        raise ExpressionError("empty expression", 0)
    if dimension < 1:
        raise ValueError("dimension must be a positive integer")
    parser = _Parser(_tokenize(text), dimension)
    node = parser.parse_expr()
    end = parser.peek()
    if end[0] != "end":
        raise ExpressionError(f"unexpected trailing input {end[1]!r}", end[2])
    return node


# ---------------------------------------------------------------------------
# Printing (round-trips through parse_expression)

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def to_string(node):
    """Render a tree; parse(to_string(t), n) yields a tree equal to t."""
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        inner = to_string(node.child)
        # child is always a primary, but parenthesize defensively when printed
        # form would re-parse differently
        if isinstance(node.child, (BinOp, Neg)) or inner.startswith("-"):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_string(a) for a in node.args)})"
    if isinstance(node, BinOp):
        lp = _PRECEDENCE[node.op]
        left = to_string(node.left)
        right = to_string(node.right)
        if isinstance(node.left, BinOp) and (
            _PRECEDENCE[node.left.op] < lp or (node.op == "^")
        ):
            left = f"({left})"
        if isinstance(node.left, Neg):
            left = f"({left})"
        if isinstance(node.right, BinOp) and _PRECEDENCE[node.right.op] <= lp and node.op != "^":
            right = f"({right})"
        if isinstance(node.right, Neg) and node.op != "^":
            right = f"({right})"
        if isinstance(node.right, Neg) and node.op == "^":
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Evaluation

def _pow(base, exponent):
    # Non-integer exponents require a positive base: fail fast instead of NaN.
    exp_arr = np.asarray(exponent)
    if np.all(exp_arr == np.floor(exp_arr)):
        with np.errstate(divide="raise", invalid="raise"):
            try:
                return np.power(base, exponent)
            except FloatingPointError as exc:
                raise EvaluationError(f"power failed: {exc}") from None
    if not np.all(np.asarray(base) > 0):
        raise EvaluationError("non-integer exponent requires a positive base")
    return np.power(base, exponent)


def evaluate(node, x):
    """Evaluate over a point (length-n sequence) or a batch (m, n) array.

    Vectorized: each variable maps to a column of ``x`` when 2-D.
    """
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2

    def ev(n):
        if isinstance(n, Const):
            return n.value
        if isinstance(n, Var):
            return x[:, n.index - 1] if batched else x[n.index - 1]
        if isinstance(n, Neg):
            return -ev(n.child)
        if isinstance(n, BinOp):
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if n.op == "/":
                with np.errstate(divide="raise", invalid="raise"):
                    try:
                        return a / b
                    except FloatingPointError:
                        raise EvaluationError("division by zero") from None
            return _pow(a, b)
        if isinstance(n, Call):
            args = [ev(a) for a in n.args]
            if n.name == "min":
                out = args[0]
                for a in args[1:]:
                    out = np.minimum(out, a)
                return out
            if n.name == "max":
                out = args[0]
                for a in args[1:]:
                    out = np.maximum(out, a)
                return out
            if n.name == "abs":
                return np.abs(args[0])
            if n.name == "sqrt":
                if not np.all(np.asarray(args[0]) >= 0):
                    raise EvaluationError("sqrt of negative value")
                return np.sqrt(args[0])
            if n.name == "sin":
                return np.sin(args[0])
            if n.name == "cos":
                return np.cos(args[0])
            if n.name == "exp":
                return np.exp(args[0])
            if n.name == "ln":
                if not np.all(np.asarray(args[0]) > 0):
                    raise EvaluationError("ln of non-positive value")
                return np.log(args[0])
        raise TypeError(f"not an expression node: {n!r}")

    out = ev(node)
    if batched:
        out = np.broadcast_to(np.asarray(out, dtype=float), (x.shape[0],)).copy()
    else:
        out = float(out)
    if not np.all(np.isfinite(out)):
        raise EvaluationError("expression produced a non-finite value")
    return out


def evaluate_reference(node, x):
    """Oracle interpreter on plain Python floats, used by tests."""
    xs = [float(v) for v in x]

    def ev(n):
        if isinstance(n, Const):
            return n.value
        if isinstance(n, Var):
            return xs[n.index - 1]
        if isinstance(n, Neg):
            return -ev(n.child)
        if isinstance(n, BinOp):
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if n.op == "/":
                if b == 0:
                    raise EvaluationError("division by zero")
                return a / b
            if float(b).is_integer():
                return a**b
            if a <= 0:
                raise EvaluationError("non-integer exponent requires a positive base")
            return a**b
        if isinstance(n, Call):
            args = [ev(a) for a in n.args]
            if n.name == "min":
                return min(args)
            if n.name == "max":
                return max(args)
            if n.name == "abs":
                return abs(args[0])
            if n.name == "sqrt":
                if args[0] < 0:
                    raise EvaluationError("sqrt of negative value")
                return math.sqrt(args[0])
            if n.name == "sin":
                return math.sin(args[0])
            if n.name == "cos":
                return math.cos(args[0])
            if n.name == "exp":
                return math.exp(args[0])
            if n.name == "ln":
                if args[0] <= 0:
                    raise EvaluationError("ln of non-positive value")
                return math.log(args[0])
        raise TypeError(f"not an expression node: {n!r}")

    return ev(node)


def kink_gap(node, x):
    """Distance proxy to the nearest non-smooth locus of the expression at x.

    Returns the smallest |a - b| over min/max nodes and |a| over abs/sqrt
    nodes; +inf when the expression is smooth at x.
    """
    gap = math.inf

    def walk(n):
        nonlocal gap
        if isinstance(n, Neg):
            walk(n.child)
        elif isinstance(n, BinOp):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Call):
            if n.name in ("min", "max"):
                vals = [evaluate_reference(a, x) for a in n.args]
                vals.sort()
                for a, b in zip(vals, vals[1:]):
                    gap = min(gap, abs(b - a))
            elif n.name in ("abs", "sqrt"):
                gap = min(gap, abs(evaluate_reference(n.args[0], x)))
            for a in n.args:
                walk(a)

    walk(node)
    return gap


def variables_used(node):
    out = set()

    def walk(n):
        if isinstance(n, Var):
            out.add(n.index)
        elif isinstance(n, Neg):
            walk(n.child)
        elif isinstance(n, BinOp):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Call):
            for a in n.args:
                walk(a)

    walk(node)
    return out
