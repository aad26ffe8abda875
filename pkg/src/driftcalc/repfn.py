"""Expression trees for deterministic functions acting on process increments.

A representing function maps increment vectors in C^d to C^n and vanishes at
the origin.  Trees are built from a closed node set (coordinates, complex
constants, field operations, exp/log, constant powers, and indicator factors)
so that first and second derivatives at the origin are exact: they are
obtained by second-order forward-mode Taylor propagation, never by symbolic
rewriting or numerical differencing.

Evaluation follows an explicit NaN convention: any point where a
subexpression is undefined (division by zero, log or constant power of a
nonpositive real) yields complex NaN, and NaN propagates through every node,
indicators included.  Powers use the principal branch via exp(v*log(base)).

All values are immutable after construction; evaluation and differentiation
are pure and safe to call concurrently.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass

import numpy as np

from .errors import NanPointError

_CNAN = complex(float("nan"), float("nan"))

#: predicate operators accepted by Indicator nodes
PRED_OPS = ("eq", "ne", "abs_le", "abs_gt")


def _isnan(z):
    z = np.asarray(z)
    return np.isnan(z.real) | np.isnan(z.imag)


def _as_node(value) -> "Node":
    if isinstance(value, Node):
        return value
    if isinstance(value, numbers.Number):
        return Const(complex(value))
    raise TypeError(f"cannot convert {type(value).__name__} to an expression node")


class Node:
    """Base class for expression nodes; supports arithmetic sugar."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, _as_node(other))

    def __radd__(self, other):
        return Add(_as_node(other), self)

    def __sub__(self, other):
        return Sub(self, _as_node(other))

    def __rsub__(self, other):
        return Sub(_as_node(other), self)

    def __mul__(self, other):
        return Mul(self, _as_node(other))

    def __rmul__(self, other):
        return Mul(_as_node(other), self)

    def __truediv__(self, other):
        return Div(self, _as_node(other))

    def __rtruediv__(self, other):
        return Div(_as_node(other), self)

    def __neg__(self):
        return Neg(self)

    # Subclasses implement _eval (vectorised over a batch of points) and
    # _jet (value, gradient, Hessian at the origin).  Both are dispatched
    # through the memoised walkers below so shared subtrees evaluate once.


@dataclass(frozen=True)
class Coord(Node):
    """Input coordinate x_i (0-based index)."""

    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or self.index < 0:
            raise ValueError(f"coordinate index must be a nonnegative integer, got {self.index!r}")


@dataclass(frozen=True)
class Const(Node):
    value: complex

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))
        if _isnan(self.value):
            raise ValueError("NaN constants are not allowed")


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
class Neg(Node):
    child: Node


@dataclass(frozen=True)
class Exp(Node):
    child: Node


@dataclass(frozen=True)
class Log(Node):
    child: Node


@dataclass(frozen=True)
class PowConst(Node):
    """Principal-branch power base**exponent with a constant exponent."""

    exponent: complex
    child: Node

    def __post_init__(self):
        object.__setattr__(self, "exponent", complex(self.exponent))
        if _isnan(self.exponent):
            raise ValueError("NaN exponents are not allowed")


@dataclass(frozen=True)
class Indicator(Node):
    """Indicator factor 1{pred(child)} with value in {0, 1}, NaN-propagating.

    The predicate compares the child's value with a real constant:
    ``eq``/``ne`` require the constant to be nonzero, ``abs_le``/``abs_gt``
    require it to be positive, which makes the indicator constant on a
    neighbourhood of the origin whenever the child vanishes there.
    """

    op: str
    threshold: float
    child: Node

    def __post_init__(self):
        if self.op not in PRED_OPS:
            raise ValueError(f"unknown predicate {self.op!r}; expected one of {PRED_OPS}")
        thr = float(self.threshold)
        object.__setattr__(self, "threshold", thr)
        if not np.isfinite(thr):
            raise ValueError("predicate threshold must be finite")
        if self.op in ("eq", "ne") and thr == 0.0:
            raise ValueError("equality predicates must compare against a nonzero level")
        if self.op in ("abs_le", "abs_gt") and thr <= 0.0:
            raise ValueError("radius predicates require a positive radius")

    def test(self, values: np.ndarray) -> np.ndarray:
        """Apply the predicate elementwise; result is boolean."""
        if self.op == "eq":
            return (values.real == self.threshold) & (values.imag == 0.0)
        if self.op == "ne":
            return ~((values.real == self.threshold) & (values.imag == 0.0))
        if self.op == "abs_le":
            return np.abs(values) <= self.threshold
        return np.abs(values) > self.threshold


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _eval_node(node: Node, X: np.ndarray, memo: dict) -> np.ndarray:
    """Evaluate one node over a batch X of shape (N, d); returns (N,) complex."""
    key = id(node)
    cached = memo.get(key)
    if cached is not None:
        return cached

    if isinstance(node, Coord):
        out = X[:, node.index].copy()
    elif isinstance(node, Const):
        out = np.full(X.shape[0], node.value, dtype=np.complex128)
    elif isinstance(node, Add):
        out = _eval_node(node.left, X, memo) + _eval_node(node.right, X, memo)
    elif isinstance(node, Sub):
        out = _eval_node(node.left, X, memo) - _eval_node(node.right, X, memo)
    elif isinstance(node, Mul):
        a = _eval_node(node.left, X, memo)
        b = _eval_node(node.right, X, memo)
        out = a * b
        # 0 * NaN must stay NaN; numpy already guarantees this for complex.
    elif isinstance(node, Neg):
        out = -_eval_node(node.child, X, memo)
    elif isinstance(node, Div):
        num = _eval_node(node.left, X, memo)
        den = _eval_node(node.right, X, memo)
        bad = den == 0
        with np.errstate(all="ignore"):
            out = num / np.where(bad, 1.0, den)
        out = np.where(bad, _CNAN, out)
    elif isinstance(node, Exp):
        with np.errstate(all="ignore"):
            out = np.exp(_eval_node(node.child, X, memo))
    elif isinstance(node, Log):
        z = _eval_node(node.child, X, memo)
        bad = (z.imag == 0.0) & (z.real <= 0.0)
        with np.errstate(all="ignore"):
            out = np.log(np.where(bad, 1.0, z))
        out = np.where(bad, _CNAN, out)
    elif isinstance(node, PowConst):
        z = _eval_node(node.child, X, memo)
        bad = (z.imag == 0.0) & (z.real <= 0.0)
        with np.errstate(all="ignore"):
            out = np.exp(node.exponent * np.log(np.where(bad, 1.0, z)))
        out = np.where(bad, _CNAN, out)
    elif isinstance(node, Indicator):
        z = _eval_node(node.child, X, memo)
        out = np.where(node.test(z), 1.0 + 0.0j, 0.0 + 0.0j)
        out = np.where(_isnan(z), _CNAN, out)
    else:
        raise TypeError(f"unknown node type {type(node).__name__}")

    memo[key] = out
    return out


# ---------------------------------------------------------------------------
# second-order forward-mode jets at the origin
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Jet2:
    """Value, Jacobian, and Hessian of a representing function at the origin.

    ``value`` has shape (n,), ``jacobian`` (n, d), ``hessian`` (n, d, d) with
    the Hessian symmetric in its trailing index pair.
    """

    value: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray


def _jet_node(node: Node, dim: int, memo: dict):
    """Propagate (value, gradient, Hessian) at x=0 through one node."""
    key = id(node)
    cached = memo.get(key)
    if cached is not None:
        return cached

    if isinstance(node, Coord):
        g = np.zeros(dim, dtype=np.complex128)
        g[node.index] = 1.0
        out = (0j, g, np.zeros((dim, dim), dtype=np.complex128))
    elif isinstance(node, Const):
        out = (node.value, np.zeros(dim, dtype=np.complex128), np.zeros((dim, dim), dtype=np.complex128))
    elif isinstance(node, Add):
        va, ga, ha = _jet_node(node.left, dim, memo)
        vb, gb, hb = _jet_node(node.right, dim, memo)
        out = (va + vb, ga + gb, ha + hb)
    elif isinstance(node, Sub):
        va, ga, ha = _jet_node(node.left, dim, memo)
        vb, gb, hb = _jet_node(node.right, dim, memo)
        out = (va - vb, ga - gb, ha - hb)
    elif isinstance(node, Neg):
        v, g, h = _jet_node(node.child, dim, memo)
        out = (-v, -g, -h)
    elif isinstance(node, Mul):
        va, ga, ha = _jet_node(node.left, dim, memo)
        vb, gb, hb = _jet_node(node.right, dim, memo)
        out = (va * vb, va * gb + vb * ga, va * hb + vb * ha + np.outer(ga, gb) + np.outer(gb, ga))
    elif isinstance(node, Div):
        va, ga, ha = _jet_node(node.left, dim, memo)
        vb, gb, hb = _jet_node(node.right, dim, memo)
        if vb == 0 or _isnan(vb):
            raise NanPointError("division by zero at the origin", point=0.0)
        v = va / vb
        g = (ga - v * gb) / vb
        h = (ha - v * hb - np.outer(g, gb) - np.outer(gb, g)) / vb
        out = (v, g, h)
    elif isinstance(node, Exp):
        vc, gc, hc = _jet_node(node.child, dim, memo)
        w = np.exp(vc)
        out = (w, w * gc, w * (hc + np.outer(gc, gc)))
    elif isinstance(node, Log):
        vc, gc, hc = _jet_node(node.child, dim, memo)
        if vc.imag == 0.0 and vc.real <= 0.0:
            raise NanPointError("log of a nonpositive real at the origin", point=0.0)
        out = (np.log(vc), gc / vc, hc / vc - np.outer(gc, gc) / vc**2)
    elif isinstance(node, PowConst):
        vc, gc, hc = _jet_node(node.child, dim, memo)
        if vc.imag == 0.0 and vc.real <= 0.0:
            raise NanPointError("power of a nonpositive real at the origin", point=0.0)
        p = node.exponent
        w = np.exp(p * np.log(vc))
        out = (w, p * w / vc * gc, p * w / vc * hc + p * (p - 1) * w / vc**2 * np.outer(gc, gc))
    elif isinstance(node, Indicator):
        # Predicates are constant near the origin by construction, so the
        # indicator is frozen at its origin value before differentiation.
        vc, _gc, _hc = _jet_node(node.child, dim, memo)
        frozen = 1.0 + 0j if node.test(np.asarray([vc]))[0] else 0j
        out = (frozen, np.zeros(dim, dtype=np.complex128), np.zeros((dim, dim), dtype=np.complex128))
    else:
        raise TypeError(f"unknown node type {type(node).__name__}")

    memo[key] = out
    return out


# ---------------------------------------------------------------------------
# the public RepFn value
# ---------------------------------------------------------------------------


def _walk(node: Node, seen: set):
    if id(node) in seen:
        return
    seen.add(id(node))
    yield node
    for attr in ("left", "right", "child"):
        sub = getattr(node, attr, None)
        if sub is not None:
            yield from _walk(sub, seen)


@dataclass(frozen=True)
class RepFn:
    """A deterministic representing function C^d -> C^n with f(0) = 0.

    ``outputs`` holds one scalar expression tree per output component.
    Construction validates coordinate bounds, that evaluation at the zero
    vector yields the zero vector exactly, and that no indicator predicate
    sits on its discontinuity at the origin.
    """

    input_dim: int
    outputs: tuple

    def __post_init__(self):
        if not isinstance(self.input_dim, int) or self.input_dim < 1:
            raise ValueError("input_dim must be a positive integer")
        outputs = tuple(self.outputs)
        object.__setattr__(self, "outputs", outputs)
        if len(outputs) < 1:
            raise ValueError("a representing function needs at least one output")
        seen: set = set()
        nodes = [n for root in outputs for n in _walk(root, seen)]
        for n in nodes:
            if isinstance(n, Coord) and n.index >= self.input_dim:
                raise ValueError(
                    f"coordinate index {n.index} out of range for input dimension {self.input_dim}"
                )
        origin = np.zeros((1, self.input_dim), dtype=np.complex128)
        memo: dict = {}
        for k, root in enumerate(outputs):
            val = _eval_node(root, origin, memo)[0]
            if _isnan(val):
                raise ValueError(f"output {k} is undefined at the origin")
            if val != 0:
                raise ValueError(f"output {k} evaluates to {val} at the origin; must be exactly 0")
        for n in nodes:
            if isinstance(n, Indicator):
                z0 = memo.get(id(n.child))
                if z0 is None:
                    z0 = _eval_node(n.child, origin, memo)
                z0 = z0[0]
                if n.op in ("eq", "ne"):
                    on_boundary = z0.imag == 0.0 and z0.real == n.threshold
                else:
                    on_boundary = abs(z0) == n.threshold
                if on_boundary:
                    raise ValueError(
                        "indicator predicate is discontinuous at the origin "
                        f"(child value {z0}, {n.op} {n.threshold})"
                    )

    @property
    def output_dim(self) -> int:
        return len(self.outputs)

    def eval_batch(self, X) -> np.ndarray:
        """Evaluate at a batch of points, shape (N, d) -> (N, n) complex."""
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected a batch of shape (N, {self.input_dim}), got {X.shape}")
        X = X.astype(np.complex128, copy=False)
        memo: dict = {}
        cols = [_eval_node(root, X, memo) for root in self.outputs]
        return np.stack(cols, axis=1)

    def eval(self, x) -> np.ndarray:
        """Evaluate at a single point, shape (d,) -> (n,) complex."""
        x = np.asarray(x)
        if x.shape != (self.input_dim,):
            raise ValueError(f"expected a point of shape ({self.input_dim},), got {x.shape}")
        return self.eval_batch(x[None, :])[0]

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)

    def jet_at_zero(self) -> Jet2:
        """Exact value/Jacobian/Hessian at the origin by forward propagation."""
        d, n = self.input_dim, self.output_dim
        memo: dict = {}
        value = np.zeros(n, dtype=np.complex128)
        jac = np.zeros((n, d), dtype=np.complex128)
        hess = np.zeros((n, d, d), dtype=np.complex128)
        for k, root in enumerate(self.outputs):
            v, g, h = _jet_node(root, d, memo)
            value[k], jac[k], hess[k] = v, g, h
        return Jet2(value=value, jacobian=jac, hessian=hess)


def compose(psi: RepFn, xi: RepFn) -> RepFn:
    """Syntactic composition psi(xi): (d -> n) composed into (n -> m) gives d -> m.

    Coordinates of ``psi`` are substituted by the output trees of ``xi``;
    shared subtrees are preserved so the result evaluates each inner output
    once per point.
    """
    if xi.output_dim != psi.input_dim:
        raise ValueError(
            f"dimension mismatch: inner function produces {xi.output_dim} outputs, "
            f"outer expects {psi.input_dim} inputs"
        )
    memo: dict = {}

    def subst(node: Node) -> Node:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Coord):
            out = xi.outputs[node.index]
        elif isinstance(node, (Const,)):
            out = node
        elif isinstance(node, Add):
            out = Add(subst(node.left), subst(node.right))
        elif isinstance(node, Sub):
            out = Sub(subst(node.left), subst(node.right))
        elif isinstance(node, Mul):
            out = Mul(subst(node.left), subst(node.right))
        elif isinstance(node, Div):
            out = Div(subst(node.left), subst(node.right))
        elif isinstance(node, Neg):
            out = Neg(subst(node.child))
        elif isinstance(node, Exp):
            out = Exp(subst(node.child))
        elif isinstance(node, Log):
            out = Log(subst(node.child))
        elif isinstance(node, PowConst):
            out = PowConst(node.exponent, subst(node.child))
        elif isinstance(node, Indicator):
            out = Indicator(node.op, node.threshold, subst(node.child))
        else:
            raise TypeError(f"unknown node type {type(node).__name__}")
        memo[key] = out
        return out

    return RepFn(xi.input_dim, tuple(subst(root) for root in psi.outputs))


def finite_difference_jet(f: RepFn, step: float) -> Jet2:
    """Central-difference estimate of the Jacobian and Hessian at the origin.

    Independent of the forward-mode path; used as a cross-check oracle.
    Raises NanPointError if any stencil point is undefined.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    d, n = f.input_dim, f.output_dim
    h = float(step)

    points = [np.zeros(d)]
    for i in range(d):
        for s in (+1, -1):
            p = np.zeros(d)
            p[i] = s * h
            points.append(p)
    for i in range(d):
        for j in range(i + 1, d):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                p = np.zeros(d)
                p[i], p[j] = si * h, sj * h
                points.append(p)
    P = np.asarray(points)
    vals = f.eval_batch(P)
    bad = np.where(_isnan(vals).any(axis=1))[0]
    if bad.size:
        raise NanPointError(
            f"representing function is undefined at stencil point {P[bad[0]].tolist()}",
            point=P[bad[0]],
        )

    f0 = vals[0]
    jac = np.zeros((n, d), dtype=np.complex128)
    hess = np.zeros((n, d, d), dtype=np.complex128)
    idx = 1
    plus = np.zeros((d, n), dtype=np.complex128)
    minus = np.zeros((d, n), dtype=np.complex128)
    for i in range(d):
        plus[i], minus[i] = vals[idx], vals[idx + 1]
        idx += 2
    for i in range(d):
        jac[:, i] = (plus[i] - minus[i]) / (2 * h)
        hess[:, i, i] = (plus[i] - 2 * f0 + minus[i]) / h**2
    for i in range(d):
        for j in range(i + 1, d):
            fpp, fpm, fmp, fmm = vals[idx], vals[idx + 1], vals[idx + 2], vals[idx + 3]
            idx += 4
            mixed = (fpp - fpm - fmp + fmm) / (4 * h**2)
            hess[:, i, j] = mixed
            hess[:, j, i] = mixed
    return Jet2(value=f0.copy(), jacobian=jac, hessian=hess)


# ---------------------------------------------------------------------------
# prefix-notation serialisation (grammar documented in the cli module)
# ---------------------------------------------------------------------------


def format_complex(z) -> str:
    """Render a complex number as 'a', 'bi', or 'a+bi' at full precision."""
    z = complex(z)
    if z.imag == 0.0:
        return repr(z.real)
    if z.real == 0.0:
        return repr(z.imag) + "i"
    sign = "+" if z.imag >= 0 else "-"
    return f"{z.real!r}{sign}{abs(z.imag)!r}i"


def parse_complex(text: str) -> complex:
    """Parse 'a', 'bi', or 'a+bi' (also accepts Python's 'j' suffix)."""
    s = str(text).strip().replace(" ", "")
    if not s:
        raise ValueError("empty complex literal")
    if s.endswith("i"):
        s = s[:-1] + "j"
    try:
        return complex(s)
    except ValueError as exc:
        raise ValueError(f"malformed complex literal {text!r}") from exc


def to_prefix(f: RepFn) -> str:
    """Serialise a RepFn to prefix notation: (repfn D EXPR...)."""

    def render(node: Node) -> str:
        if isinstance(node, Coord):
            return f"(x {node.index})"
        if isinstance(node, Const):
            return f"(const {format_complex(node.value)})"
        if isinstance(node, Add):
            return f"(add {render(node.left)} {render(node.right)})"
        if isinstance(node, Sub):
            return f"(sub {render(node.left)} {render(node.right)})"
        if isinstance(node, Mul):
            return f"(mul {render(node.left)} {render(node.right)})"
        if isinstance(node, Div):
            return f"(div {render(node.left)} {render(node.right)})"
        if isinstance(node, Neg):
            return f"(neg {render(node.child)})"
        if isinstance(node, Exp):
            return f"(exp {render(node.child)})"
        if isinstance(node, Log):
            return f"(log {render(node.child)})"
        if isinstance(node, PowConst):
            return f"(pow {format_complex(node.exponent)} {render(node.child)})"
        if isinstance(node, Indicator):
            return f"(ind {node.op} {node.threshold!r} {render(node.child)})"
        raise TypeError(f"unknown node type {type(node).__name__}")

    body = " ".join(render(root) for root in f.outputs)
    return f"(repfn {f.input_dim} {body})"


def _tokenize(text: str):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse_sexpr(tokens, pos):
    if tokens[pos] != "(":
        return tokens[pos], pos + 1
    pos += 1
    items = []
    while pos < len(tokens) and tokens[pos] != ")":
        item, pos = _parse_sexpr(tokens, pos)
        items.append(item)
    if pos >= len(tokens):
        raise ValueError("unbalanced parentheses in prefix expression")
    return items, pos + 1


def from_prefix(text: str) -> RepFn:
    """Parse the prefix notation produced by :func:`to_prefix`."""
    tokens = _tokenize(text)
    if not tokens:
        raise ValueError("empty prefix expression")
    tree, pos = _parse_sexpr(tokens, 0)
    if pos != len(tokens):
        raise ValueError("trailing tokens after prefix expression")
    if not isinstance(tree, list) or not tree or tree[0] != "repfn":
        raise ValueError("prefix expression must start with (repfn D ...)")
    if len(tree) < 3:
        raise ValueError("(repfn ...) needs a dimension and at least one expression")
    dim = int(tree[1])

    def build(item) -> Node:
        if not isinstance(item, list) or not item:
            raise ValueError(f"malformed expression {item!r}")
        head, rest = item[0], item[1:]
        if head == "x":
            (i,) = rest
            return Coord(int(i))
        if head == "const":
            (c,) = rest
            return Const(parse_complex(c))
        binary = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}
        if head in binary:
            a, b = rest
            return binary[head](build(a), build(b))
        unary = {"neg": Neg, "exp": Exp, "log": Log}
        if head in unary:
            (a,) = rest
            return unary[head](build(a))
        if head == "pow":
            c, a = rest
            return PowConst(parse_complex(c), build(a))
        if head == "ind":
            op, thr, a = rest
            return Indicator(op, float(thr), build(a))
        raise ValueError(f"unknown operator {head!r}")

    return RepFn(dim, tuple(build(item) for item in tree[2:]))
