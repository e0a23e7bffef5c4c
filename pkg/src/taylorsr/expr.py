"""Immutable symbolic expression trees: evaluation, structural editing,
random generation, and a round-trippable infix text form.

Trees are the unit of evolution.  Every editing operation returns a new
tree; handles into a tree are root-to-node child-index paths, so they stay
meaningful across copies with the same shape.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import jets

UNARY_OPS = ("sin", "cos", "exp", "neg")
BINARY_OPS = ("add", "sub", "mul", "div")

MAX_DEPTH = 10
MAX_SIZE = 80
POW_MIN, POW_MAX = 2, 6

#: root-to-node path of child indices
Handle = tuple[int, ...]


class LimitsExceeded(Exception):
    """A structural edit would violate the configured depth/size bounds."""


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


@dataclass(frozen=True)
class Expr:
    kind: str
    children: tuple["Expr", ...] = ()
    value: float = 0.0  # constants only
    axis: int = 0  # variables only
    exponent: int = 0  # pow only

    def __post_init__(self):
        arity = {"const": 0, "var": 0, "pow": 1}.get(
            self.kind, 1 if self.kind in UNARY_OPS else 2 if self.kind in BINARY_OPS else None
        )
        if arity is None:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if len(self.children) != arity:
            raise ValueError(f"{self.kind} expects {arity} children, got {len(self.children)}")
        if self.kind == "pow" and not POW_MIN <= self.exponent <= POW_MAX:
            raise ValueError(f"pow exponent must be in [{POW_MIN}, {POW_MAX}]")
        if self.kind == "var" and self.axis < 0:
            raise ValueError("variable axis must be >= 0")
        # size/depth are cached at construction: trees are immutable and
        # the genetic operators query these constantly against the limits
        object.__setattr__(self, "size", 1 + sum(c.size for c in self.children))
        object.__setattr__(
            self, "depth", 1 + max((c.depth for c in self.children), default=0)
        )

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def const(value: float) -> "Expr":
        return Expr("const", value=float(value))

    @staticmethod
    def var(axis: int) -> "Expr":
        return Expr("var", axis=axis)

    @staticmethod
    def unary(op: str, child: "Expr") -> "Expr":
        return Expr(op, (child,))

    @staticmethod
    def binary(op: str, left: "Expr", right: "Expr") -> "Expr":
        return Expr(op, (left, right))

    @staticmethod
    def powi(base: "Expr", exponent: int) -> "Expr":
        return Expr("pow", (base,), exponent=exponent)

    # -- structure -------------------------------------------------------------

    # ``size`` (node count) and ``depth`` (1 for a leaf) are plain attributes
    # assigned in __post_init__, not dataclass fields.

    def max_axis(self) -> int:
        if self.kind == "var":
            return self.axis
        return max((c.max_axis() for c in self.children), default=-1)

    def __str__(self) -> str:
        return serialize(self)

    # -- evaluation -------------------------------------------------------------

    def eval(self, point):
        """Evaluate at one point (d,) or a batch (N, d); non-finite propagates."""
        pts = np.asarray(point, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        with np.errstate(all="ignore"):
            out = self._eval(pts)
        out = np.broadcast_to(out, (pts.shape[0],))
        return float(out[0]) if single else np.array(out)

    def _eval(self, pts: np.ndarray):
        k = self.kind
        if k == "const":
            # np.float64 so downstream overflow yields inf instead of raising
            return np.float64(self.value)
        if k == "var":
            return pts[:, self.axis]
        if k == "neg":
            return -self.children[0]._eval(pts)
        if k == "sin":
            return np.sin(self.children[0]._eval(pts))
        if k == "cos":
            return np.cos(self.children[0]._eval(pts))
        if k == "exp":
            return np.exp(self.children[0]._eval(pts))
        if k == "pow":
            return self.children[0]._eval(pts) ** self.exponent
        a = self.children[0]._eval(pts)
        b = self.children[1]._eval(pts)
        if k == "add":
            return a + b
        if k == "sub":
            return a - b
        if k == "mul":
            return a * b
        return np.divide(a, b)

    def apply_node(self, pts: np.ndarray, axis, order: int, child_coeffs) -> np.ndarray:
        """Combine already-computed child coefficient arrays at this node."""
        k = self.kind
        if k == "const":
            return jets.const_coeffs(self.value, order, (pts.shape[0],))
        if k == "var":
            return jets.var_coeffs(pts[:, self.axis], np.equal(self.axis, axis), order)
        if k == "neg":
            return jets.neg_coeffs(child_coeffs[0])
        if k == "sin":
            return jets.sin_cos_coeffs(child_coeffs[0])[0]
        if k == "cos":
            return jets.sin_cos_coeffs(child_coeffs[0])[1]
        if k == "exp":
            return jets.exp_coeffs(child_coeffs[0])
        if k == "pow":
            return jets.pow_int_coeffs(child_coeffs[0], self.exponent)
        a, b = child_coeffs
        if k == "add":
            return jets.add_coeffs(a, b)
        if k == "sub":
            return jets.sub_coeffs(a, b)
        if k == "mul":
            return jets.mul_coeffs(a, b)
        return jets.div_coeffs(a, b)

    def eval_coeffs(self, pts: np.ndarray, axis, order: int) -> np.ndarray:
        """Taylor coefficients (order+1, N) along ``axis``, other coords frozen.

        ``axis`` may be an int or a per-point int array (mixed-axis batch).
        """
        children = [c.eval_coeffs(pts, axis, order) for c in self.children]
        return self.apply_node(pts, axis, order, children)


@dataclass(frozen=True)
class SymbolLibrary:
    """Terminal and operator set available to random generation."""

    n_vars: int
    unary: tuple[str, ...] = UNARY_OPS
    binary: tuple[str, ...] = BINARY_OPS
    const_range: tuple[float, float] = (-3.0, 3.0)
    use_pow: bool = True
    p_const: float = 0.4  # terminal split: constants vs variables

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("library needs at least one variable")
        if not (self.unary or self.binary or self.use_pow):
            raise ValueError("library needs at least one operator")


# -- structural editing ---------------------------------------------------------


def subtrees(expr: Expr) -> list[Handle]:
    """All node handles in deterministic pre-order (root first)."""
    out: list[Handle] = []

    def walk(node: Expr, path: Handle):
        out.append(path)
        for i, child in enumerate(node.children):
            walk(child, path + (i,))

    walk(expr, ())
    return out


def get_subtree(expr: Expr, handle: Handle) -> Expr:
    node = expr
    for i in handle:
        if i >= len(node.children):
            raise IndexError(f"invalid handle {handle}")
        node = node.children[i]
    return node


def replace_subtree(expr: Expr, handle: Handle, replacement: Expr) -> Expr:
    if not handle:
        return replacement
    i = handle[0]
    if i >= len(expr.children):
        raise IndexError(f"invalid handle {handle}")
    children = list(expr.children)
    children[i] = replace_subtree(children[i], handle[1:], replacement)
    return Expr(expr.kind, tuple(children), expr.value, expr.axis, expr.exponent)


def mask_subtree(expr: Expr, handle: Handle) -> Expr:
    """Replace the node at ``handle`` with the neutral constant 1."""
    return replace_subtree(expr, handle, Expr.const(1.0))


def coeffs_cache(
    expr: Expr, pts: np.ndarray, axis, order: int
) -> dict[Handle, np.ndarray]:
    """Coefficient arrays for every node, keyed by handle, from one walk."""
    cache: dict[Handle, np.ndarray] = {}

    def walk(node: Expr, path: Handle) -> np.ndarray:
        kids = [walk(c, path + (i,)) for i, c in enumerate(node.children)]
        out = node.apply_node(pts, axis, order, kids)
        cache[path] = out
        return out

    walk(expr, ())
    return cache


def masked_root_coeffs(
    expr: Expr,
    cache: dict[Handle, np.ndarray],
    handle: Handle,
    pts: np.ndarray,
    axis,
    order: int,
) -> np.ndarray:
    """Root coefficients after masking ``handle``, recomputing ancestors only.

    ``cache`` must come from ``coeffs_cache`` on the same points/axis/order;
    sibling subtrees reuse their cached arrays, so each mask costs O(depth)
    node evaluations instead of a full re-walk.
    """
    cur = jets.const_coeffs(1.0, order, (pts.shape[0],))
    for d in range(len(handle) - 1, -1, -1):
        prefix = handle[:d]
        node = get_subtree(expr, prefix)
        kids = [
            cur if i == handle[d] else cache[prefix + (i,)]
            for i in range(len(node.children))
        ]
        cur = node.apply_node(pts, axis, order, kids)
    return cur


def swap_subtrees(
    a: Expr,
    sa: Handle,
    b: Expr,
    sb: Handle,
    max_depth: int = MAX_DEPTH,
    max_size: int = MAX_SIZE,
) -> tuple[Expr, Expr]:
    """Exchange the indicated subtrees; raises ``LimitsExceeded`` on violation."""
    sub_a = get_subtree(a, sa)
    sub_b = get_subtree(b, sb)
    new_a = replace_subtree(a, sa, sub_b)
    new_b = replace_subtree(b, sb, sub_a)
    for t in (new_a, new_b):
        if t.depth > max_depth or t.size > max_size:
            raise LimitsExceeded(f"offspring of depth {t.depth}, size {t.size}")
    return new_a, new_b


def random_expr(lib: SymbolLibrary, max_depth: int, rng: np.random.Generator) -> Expr:
    """Grow-style random tree, terminals forced at the depth limit."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if max_depth == 1 or rng.random() < 0.25:
        if rng.random() < lib.p_const:
            lo, hi = lib.const_range
            return Expr.const(rng.uniform(lo, hi))
        return Expr.var(int(rng.integers(lib.n_vars)))
    ops = list(lib.unary) + list(lib.binary) + (["pow"] if lib.use_pow else [])
    op = ops[int(rng.integers(len(ops)))]
    if op == "pow":
        return Expr.powi(
            random_expr(lib, max_depth - 1, rng), int(rng.integers(POW_MIN, POW_MAX + 1))
        )
    if op in UNARY_OPS:
        return Expr.unary(op, random_expr(lib, max_depth - 1, rng))
    return Expr.binary(
        op, random_expr(lib, max_depth - 1, rng), random_expr(lib, max_depth - 1, rng)
    )


def complexity(expr: Expr) -> int:
    """Structural complexity: node count (pow counts once, exponent is an attribute)."""
    return expr.size


# -- simplification --------------------------------------------------------------


def simplify(expr: Expr) -> Expr:
    """Constant folding plus mul-by-1 / add-0 / double-neg elimination."""
    if not expr.children:
        return expr
    children = tuple(simplify(c) for c in expr.children)
    node = Expr(expr.kind, children, expr.value, expr.axis, expr.exponent)
    if all(c.kind == "const" for c in children):
        folded = node.eval(np.zeros(1))
        if np.isfinite(folded):
            return Expr.const(folded)
        return node
    k = node.kind
    if k == "neg" and children[0].kind == "neg":
        return children[0].children[0]
    if k in ("add", "sub", "mul", "div"):
        a, b = children
        if k == "add":
            if _is_const(a, 0.0):
                return b
            if _is_const(b, 0.0):
                return a
        elif k == "sub":
            if _is_const(b, 0.0):
                return a
        elif k == "mul":
            if _is_const(a, 1.0):
                return b
            if _is_const(b, 1.0):
                return a
            if _is_const(a, 0.0) or _is_const(b, 0.0):
                return Expr.const(0.0)
        elif k == "div":
            if _is_const(b, 1.0):
                return a
    return node


def _is_const(e: Expr, v: float) -> bool:
    return e.kind == "const" and e.value == v


# -- serialization ----------------------------------------------------------------


def serialize(expr: Expr, t_axis: int | None = None) -> str:
    """Infix text with explicit parentheses; constants at 17 significant digits."""
    k = expr.kind
    if k == "const":
        return f"{expr.value:.17g}"
    if k == "var":
        if t_axis is not None and expr.axis == t_axis:
            return "t"
        return f"x{expr.axis}"
    if k == "neg":
        return f"(-({serialize(expr.children[0], t_axis)}))"
    if k in ("sin", "cos", "exp"):
        return f"{k}({serialize(expr.children[0], t_axis)})"
    if k == "pow":
        return f"({serialize(expr.children[0], t_axis)} ^ {expr.exponent})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
    return (
        f"({serialize(expr.children[0], t_axis)} {sym} "
        f"{serialize(expr.children[1], t_axis)})"
    )


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        for kind in ("num", "name", "op"):
            if m.group(kind) is not None:
                tokens.append((kind, m.group(kind), m.start(kind)))
                break
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, t_axis: int | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.t_axis = t_axis

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", pos)
        self.advance()

    def parse(self) -> Expr:
        e = self.expression()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {val!r}", pos)
        return e

    def expression(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                e = Expr.binary("add" if val == "+" else "sub", e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.factor()
                e = Expr.binary("mul" if val == "*" else "div", e, rhs)
            else:
                return e

    def factor(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            nkind, nval, _ = self.peek()
            if nkind == "num":  # negative literal, not a neg node
                self.advance()
                return self.maybe_pow(Expr.const(-float(nval)))
            return self.maybe_pow(Expr.unary("neg", self.factor()))
        return self.maybe_pow(self.primary())

    def maybe_pow(self, base: Expr) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            nkind, nval, npos = self.peek()
            if nkind != "num" or "." in nval or "e" in nval.lower():
                raise ParseError("expected integer exponent", npos)
            self.advance()
            return Expr.powi(base, int(nval))
        return base

    def primary(self) -> Expr:
        kind, val, pos = self.advance()
        if kind == "num":
            return Expr.const(float(val))
        if kind == "name":
            if val in ("sin", "cos", "exp"):
                self.expect_op("(")
                arg = self.expression()
                self.expect_op(")")
                return Expr.unary(val, arg)
            if val == "t":
                if self.t_axis is None:
                    raise ParseError("'t' used but no time axis declared", pos)
                return Expr.var(self.t_axis)
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                return Expr.var(int(m.group(1)))
            raise ParseError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            e = self.expression()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected token {val!r}" if val else "unexpected end of input", pos)


def parse(text: str, t_axis: int | None = None) -> Expr:
    """Parse the infix grammar emitted by ``serialize``; errors carry an offset."""
    return _Parser(text, t_axis).parse()
