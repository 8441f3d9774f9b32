"""Small array-valued automatic differentiation engine.

Two cooperating pieces:

* Tape / Node: reverse mode. Operations on Nodes are recorded in creation
  order, which is already a topological order, so the backward pass is one
  reversed sweep accumulating adjoints. One tape per loss evaluation.
* Jet2: forward mode for input derivatives. A jet carries a value plus its
  first and second derivative in (scaled) time and first derivative in
  (scaled) space. Slots hold whatever carrier the surrounding code uses:
  plain arrays outside training, Nodes inside, and the float 0.0 as an exact
  "identically zero" marker so dead slots cost nothing. A second-time slot
  of None means "not tracked" and poisons derived slots to None, which lets
  first-order paths skip the chain-rule terms they would never read.

Physics code is written once against the module-level functions (sqrt, exp,
sigmoid, ...), which accept numbers, arrays, Nodes and jets alike.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(g, shape):
    """Sum an adjoint down to the shape of the operand that broadcast."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tape:
    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def wrap(self, value):
        """Record a leaf (parameter or constant)."""
        return Node(self, np.asarray(value, dtype=float))


class Node:
    """One recorded value; parents and their vector-Jacobian products."""

    __slots__ = ("tape", "value", "parents", "vjps", "adjoint")
    __array_ufunc__ = None  # make ndarray OP node defer to our reflected ops

    def __init__(self, tape, value, parents=(), vjps=()):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.adjoint = None
        tape.nodes.append(self)

    # -- arithmetic ------------------------------------------------------
    # Binary ops defer to Jet2 (returning NotImplemented triggers the jet's
    # reflected op), so a Node mixes into jet expressions as a constant in
    # the jet's input variables.
    def _lift(self, other):
        if isinstance(other, Node):
            return other
        return Node(self.tape, np.asarray(other, dtype=float))

    def __add__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        b = self._lift(other)
        sa, sb = self.value.shape, b.value.shape
        return Node(self.tape, self.value + b.value, (self, b),
                    (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        b = self._lift(other)
        sa, sb = self.value.shape, b.value.shape
        return Node(self.tape, self.value - b.value, (self, b),
                    (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(-g, sb)))

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __neg__(self):
        return Node(self.tape, -self.value, (self,), (lambda g: -g,))

    def __mul__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        b = self._lift(other)
        va, vb = self.value, b.value
        return Node(self.tape, va * vb, (self, b),
                    (lambda g: _unbroadcast(g * vb, va.shape),
                     lambda g: _unbroadcast(g * va, vb.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        b = self._lift(other)
        va, vb = self.value, b.value
        return Node(self.tape, va / vb, (self, b),
                    (lambda g: _unbroadcast(g / vb, va.shape),
                     lambda g: _unbroadcast(-g * va / (vb * vb), vb.shape)))

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __pow__(self, c):
        if isinstance(c, Node):
            raise TypeError("only constant exponents are supported")
        va = self.value
        return Node(self.tape, va ** c, (self,),
                    (lambda g: g * c * va ** (c - 1),))

    def __matmul__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        b = self._lift(other)
        va, vb = self.value, b.value
        if va.ndim != 2 or vb.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        return Node(self.tape, va @ vb, (self, b),
                    (lambda g: g @ vb.T, lambda g: va.T @ g))

    def __rmatmul__(self, other):
        return self._lift(other).__matmul__(self)

    # -- reductions / shaping -------------------------------------------
    def sum(self):
        shape = self.value.shape
        return Node(self.tape, np.asarray(self.value.sum()), (self,),
                    (lambda g: g * np.ones(shape),))

    def mean(self):
        shape, n = self.value.shape, self.value.size
        return Node(self.tape, np.asarray(self.value.mean()), (self,),
                    (lambda g: g * np.ones(shape) / n,))

    def col(self, j):
        """Select column j of a 2-D value."""
        va = self.value

        def vjp(g):
            z = np.zeros_like(va)
            z[:, j] = g
            return z

        return Node(self.tape, va[:, j], (self,), (vjp,))


def _node_unary(x, value, dvalue):
    return Node(x.tape, value, (x,), (lambda g: g * dvalue,))


def backward(loss, check_finite=False):
    """Accumulate adjoints of all nodes on the loss's tape.

    The loss must be scalar-sized. With check_finite, every recorded value is
    scanned first and a non-finite one aborts with its op index.
    """
    if loss.value.size != 1:
        raise ValueError("loss must be scalar")
    nodes = loss.tape.nodes
    if check_finite:
        for i, n in enumerate(nodes):
            if not np.all(np.isfinite(n.value)):
                raise FloatingPointError(f"non-finite value at op index {i}")
    if not np.all(np.isfinite(loss.value)):
        raise FloatingPointError("non-finite loss")
    for n in nodes:
        n.adjoint = None
    loss.adjoint = np.ones_like(loss.value)
    for n in reversed(nodes):
        g = n.adjoint
        if g is None:
            continue
        for p, vjp in zip(n.parents, n.vjps):
            c = vjp(g)
            p.adjoint = c if p.adjoint is None else p.adjoint + c


def parameter_gradient(loss, leaves, check_finite=False):
    """Gradient of a scalar loss for a dict of leaf Nodes.

    Leaves that do not reach the loss get exact zeros. The tape is spent
    afterwards: its node list is cleared, which breaks the tape<->node
    reference cycle so each step's graph is freed by plain refcounting
    instead of waiting for a full garbage collection.
    """
    backward(loss, check_finite=check_finite)
    grads = {k: (n.adjoint if n.adjoint is not None
                 else np.zeros_like(n.value))
             for k, n in leaves.items()}
    loss.tape.nodes.clear()
    return grads


# ---------------------------------------------------------------------------
# forward jets

def _iszero(v):
    return isinstance(v, float) and v == 0.0


def _mslot(a, b):
    """Product of two derivative slots."""
    if a is None or b is None:
        return None
    if _iszero(a) or _iszero(b):
        return 0.0
    return a * b


def _sslot(*terms):
    """Sum of derivative slots."""
    if any(t is None for t in terms):
        return None
    live = [t for t in terms if not _iszero(t)]
    if not live:
        return 0.0
    out = live[0]
    for t in live[1:]:
        out = out + t
    return out


class Jet2:
    """Value f with slots ft = df/dt, ftt = d2f/dt2, fx = df/dx."""

    __slots__ = ("f", "ft", "ftt", "fx")
    __array_ufunc__ = None

    def __init__(self, f, ft=0.0, ftt=0.0, fx=0.0):
        self.f = f
        self.ft = ft
        self.ftt = ftt
        self.fx = fx

    @classmethod
    def time(cls, t):
        """Seed a time input: dt = 1."""
        return cls(t, 1.0, 0.0, 0.0)

    @classmethod
    def space(cls, x):
        """Seed a space input: dx = 1."""
        return cls(x, 0.0, 0.0, 1.0)

    # -- arithmetic ------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Jet2):
            return other
        return Jet2(other)

    def __add__(self, other):
        b = self._lift(other)
        ftt = None if (self.ftt is None or b.ftt is None) \
            else _sslot(self.ftt, b.ftt)
        return Jet2(self.f + b.f, _sslot(self.ft, b.ft), ftt,
                    _sslot(self.fx, b.fx))

    __radd__ = __add__

    def __neg__(self):
        def neg(v):
            return 0.0 if _iszero(v) else (None if v is None else -v)
        return Jet2(-self.f, neg(self.ft), neg(self.ftt), neg(self.fx))

    def __sub__(self, other):
        return self.__add__(self._lift(other).__neg__())

    def __rsub__(self, other):
        return self.__neg__().__add__(other)

    def __mul__(self, other):
        b = self._lift(other)
        f = self.f * b.f
        ft = _sslot(_mslot(self.ft, b.f), _mslot(self.f, b.ft))
        fx = _sslot(_mslot(self.fx, b.f), _mslot(self.f, b.fx))
        if self.ftt is None or b.ftt is None:
            ftt = None
        else:
            cross = _mslot(self.ft, b.ft)
            if not _iszero(cross):
                cross = cross + cross
            ftt = _sslot(_mslot(self.ftt, b.f), _mslot(self.f, b.ftt), cross)
        return Jet2(f, ft, ftt, fx)

    __rmul__ = __mul__

    def __truediv__(self, other):
        b = self._lift(other)
        return self.__mul__(_lift_unary(
            b, lambda v: 1.0 / v, lambda v: -1.0 / (v * v),
            lambda v: 2.0 / (v * v * v)))

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __pow__(self, c):
        return _lift_unary(self, lambda v: v ** c,
                           lambda v: c * v ** (c - 1),
                           lambda v: c * (c - 1) * v ** (c - 2))

    def __matmul__(self, other):
        if isinstance(other, Jet2):
            raise TypeError("matmul of two jets is not supported")

        def mm(s):
            return 0.0 if _iszero(s) else (None if s is None else s @ other)
        return Jet2(self.f @ other, mm(self.ft), mm(self.ftt), mm(self.fx))


def _lift_unary(z, f, d1, d2):
    """Apply a scalar function with derivative callables d1, d2 to a jet."""
    if not isinstance(z, Jet2):
        return f(z)
    v = f(z.f)
    ft_live = not _iszero(z.ft)
    fx_live = not _iszero(z.fx)
    ftt_live = z.ftt is not None and not _iszero(z.ftt)
    g1 = d1(z.f) if (ft_live or fx_live or ftt_live) else None
    ft = g1 * z.ft if ft_live else 0.0
    fx = g1 * z.fx if fx_live else 0.0
    if z.ftt is None:
        ftt = None
    else:
        ftt = g1 * z.ftt if ftt_live else 0.0
        if ft_live:
            t2 = d2(z.f) * (z.ft * z.ft)
            ftt = t2 if _iszero(ftt) else ftt + t2
    return Jet2(v, ft, ftt, fx)


def evaluate_with_input_derivatives(f, x=None, t=None):
    """Call f on seeded jets; returns whatever f returns (jets carry the
    input derivatives). Pass x, t or both, as plain numbers or arrays."""
    args = []
    if x is not None:
        args.append(Jet2.space(x))
    if t is not None:
        args.append(Jet2.time(t))
    return f(*args)


# ---------------------------------------------------------------------------
# generic math; dispatches on ndarray / Node / Jet2

def _sigmoid_np(x):
    t = np.exp(-np.abs(x))
    return np.where(np.asarray(x) >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def _softplus_np(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sqrt(x):
    if isinstance(x, Jet2):
        return _lift_unary(x, sqrt, lambda v: 0.5 / sqrt(v),
                           lambda v: -0.25 / (sqrt(v) * v))
    if isinstance(x, Node):
        v = np.sqrt(x.value)
        return _node_unary(x, v, 0.5 / v)
    return np.sqrt(x)


def exp(x):
    if isinstance(x, Jet2):
        return _lift_unary(x, exp, exp, exp)
    if isinstance(x, Node):
        v = np.exp(x.value)
        return _node_unary(x, v, v)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet2):
        return _lift_unary(x, log, lambda v: 1.0 / v, lambda v: -1.0 / (v * v))
    if isinstance(x, Node):
        return _node_unary(x, np.log(x.value), 1.0 / x.value)
    return np.log(x)


def sin(x):
    if isinstance(x, Jet2):
        return _lift_unary(x, sin, cos, lambda v: -sin(v))
    if isinstance(x, Node):
        return _node_unary(x, np.sin(x.value), np.cos(x.value))
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet2):
        return _lift_unary(x, cos, lambda v: -sin(v), lambda v: -cos(v))
    if isinstance(x, Node):
        return _node_unary(x, np.cos(x.value), -np.sin(x.value))
    return np.cos(x)


def sigmoid(x):
    """Logistic function, overflow-safe for large |x|."""
    if isinstance(x, Jet2):
        return _lift_unary(x, sigmoid,
                           lambda v: (lambda s: s * (1.0 - s))(sigmoid(v)),
                           lambda v: (lambda s: s * (1.0 - s) * (1.0 - 2.0 * s))(sigmoid(v)))
    if isinstance(x, Node):
        s = _sigmoid_np(x.value)
        return _node_unary(x, s, s * (1.0 - s))
    return _sigmoid_np(x)


def softplus(x):
    """log(1 + exp(x)) computed without overflow; derivative is sigmoid."""
    if isinstance(x, Jet2):
        return _lift_unary(x, softplus, sigmoid,
                           lambda v: (lambda s: s * (1.0 - s))(sigmoid(v)))
    if isinstance(x, Node):
        return _node_unary(x, _softplus_np(x.value), _sigmoid_np(x.value))
    return _softplus_np(x)


def col(x, j):
    """Column j of a 2-D value, for arrays, Nodes and jets."""
    if isinstance(x, Jet2):
        def cc(s):
            return 0.0 if _iszero(s) else (None if s is None else col(s, j))
        return Jet2(col(x.f, j), cc(x.ft), cc(x.ftt), cc(x.fx))
    if isinstance(x, Node):
        return x.col(j)
    return x[:, j]


def stack_cols(cols):
    """Stack equal-length 1-D columns into a 2-D value.

    Accepts any mix of arrays, Nodes and jets per column; jets are stacked
    slot-wise, with dead (0.0) slots filled by zeros, scalar slots (seed
    values) broadcast to the column length, and an untracked (None)
    second-time slot in any column poisoning the stacked slot to None.
    """
    if any(isinstance(c, Jet2) for c in cols):
        jets = [c if isinstance(c, Jet2) else Jet2(c) for c in cols]
        n = value_of(jets[0].f).shape[0]

        def column(v):
            if _iszero(v):
                return np.zeros(n)
            if isinstance(v, Node):
                return v
            arr = np.asarray(v, dtype=float)
            if arr.ndim == 0:
                return np.full(n, float(arr))
            return arr

        def one(slot):
            vals = [getattr(j, slot) for j in jets]
            if any(v is None for v in vals):
                return None
            if all(_iszero(v) for v in vals):
                return 0.0
            return stack_cols([column(v) for v in vals])

        return Jet2(one("f"), one("ft"), one("ftt"), one("fx"))
    nodes = [c for c in cols if isinstance(c, Node)]
    if nodes:
        tape = nodes[0].tape
        lifted = [c if isinstance(c, Node) else tape.wrap(c) for c in cols]

        def vjp_for(j):
            return lambda g: g[:, j]

        return Node(tape, np.stack([c.value for c in lifted], axis=1),
                    tuple(lifted), tuple(vjp_for(j) for j in range(len(lifted))))
    return np.stack([np.asarray(c, dtype=float) for c in cols], axis=-1)


def value_of(x):
    """Plain ndarray behind any carrier."""
    if isinstance(x, Jet2):
        return value_of(x.f)
    if isinstance(x, Node):
        return x.value
    return np.asarray(x)


def finite_difference_check(f, point, h=1e-6):
    """Compare a gradient against central finite differences.

    f maps a flat parameter vector to (loss, gradient). Steps are scaled per
    coordinate by (1 + |value|). Returns (max relative error, per-coordinate
    errors); nothing is asserted here.
    """
    point = np.asarray(point, dtype=float)
    _, grad = f(point)
    grad = np.asarray(grad, dtype=float)
    fd = np.empty_like(point)
    for i in range(point.size):
        step = h * (1.0 + abs(point[i]))
        up = point.copy()
        up[i] += step
        dn = point.copy()
        dn[i] -= step
        fd[i] = (f(up)[0] - f(dn)[0]) / (2.0 * step)
    scale = max(np.max(np.abs(grad)), np.max(np.abs(fd)), 1e-30)
    denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-9 * scale)
    errs = np.abs(grad - fd) / denom
    return float(errs.max()), errs
