"""Dense float64 matrix numerics with tape-based reverse-mode autodiff.

Every value is a 2-D ``numpy.float64`` array ("matrix"). A :class:`DiffNode`
wraps one matrix together with backward rules toward its parents; calling
:func:`backward` on a scalar (1x1) root accumulates gradients into every
reachable node. The engine is eager and unoptimized on purpose: clarity and
finite-difference fidelity win over speed at the scales this package targets.

Numerical conventions (applied uniformly so downstream losses never see a
NaN from an in-contract input):
  * inputs to ``log`` and denominators are clamped to ``EPS = 1e-12``,
  * L2-normalizing an exactly-zero row returns the zero row with zero
    gradient.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ContractError, ShapeError

EPS = 1e-12


def as_matrix(data) -> np.ndarray:
    """Coerce scalars / sequences / arrays to a 2-D float64 array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got {arr.ndim}")
    return arr


class DiffNode:
    """One tape entry: a matrix value plus backward rules to its parents.

    ``grad`` is lazily allocated; a node left untouched by :func:`backward`
    reports an all-zero gradient.
    """

    __slots__ = ("value", "_grad", "parents", "_vjps")

    def __init__(self, value, parents=(), vjps=()):
        self.value = as_matrix(value)
        self._grad = None
        self.parents = tuple(parents)
        self._vjps = tuple(vjps)

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g):
        self._grad = g

    def zero_grad(self):
        self._grad = None

    # Operator sugar; non-node operands are treated as constants.
    def __add__(self, other):
        return elementwise(self, _ensure(other), "add")

    def __radd__(self, other):
        return elementwise(_ensure(other), self, "add")

    def __sub__(self, other):
        return elementwise(self, _ensure(other), "sub")

    def __rsub__(self, other):
        return elementwise(_ensure(other), self, "sub")

    def __mul__(self, other):
        return elementwise(self, _ensure(other), "mul")

    def __rmul__(self, other):
        return elementwise(_ensure(other), self, "mul")

    def __truediv__(self, other):
        return elementwise(self, _ensure(other), "div")

    def __rtruediv__(self, other):
        return elementwise(_ensure(other), self, "div")

    def __neg__(self):
        return unary(self, "neg")

    def __matmul__(self, other):
        return matmul(self, _ensure(other))

    def __repr__(self):
        r, c = self.value.shape
        return f"DiffNode({r}x{c})"


def constant(data) -> DiffNode:
    """Wrap data as a leaf node (no parents)."""
    return DiffNode(data)


def leaf(data) -> DiffNode:
    """Alias of :func:`constant`; use for trainable parameters."""
    return DiffNode(data)


def _ensure(x) -> DiffNode:
    return x if isinstance(x, DiffNode) else DiffNode(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    if g.shape != shape:
        raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")
    return g


def _check_broadcast(a: np.ndarray, b: np.ndarray):
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def matmul(a: DiffNode, b: DiffNode) -> DiffNode:
    """Matrix product with the usual transpose backward rules."""
    a, b = _ensure(a), _ensure(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul {a.value.shape} @ {b.value.shape}")
    av, bv = a.value, b.value
    return DiffNode(av @ bv, (a, b), (lambda g: g @ bv.T, lambda g: av.T @ g))


def _safe_denominator(x: np.ndarray) -> np.ndarray:
    # keep the sign, push the magnitude away from zero
    return np.where(x >= 0, np.maximum(x, EPS), np.minimum(x, -EPS))


def elementwise(a: DiffNode, b: DiffNode, kind: str) -> DiffNode:
    """Pointwise add/sub/mul/div with row- or column-vector broadcasting."""
    a, b = _ensure(a), _ensure(b)
    av, bv = a.value, b.value
    _check_broadcast(av, bv)
    ash, bsh = av.shape, bv.shape
    if kind == "add":
        out = av + bv
        vjps = (lambda g: _unbroadcast(g, ash), lambda g: _unbroadcast(g, bsh))
    elif kind == "sub":
        out = av - bv
        vjps = (lambda g: _unbroadcast(g, ash), lambda g: _unbroadcast(-g, bsh))
    elif kind == "mul":
        out = av * bv
        vjps = (
            lambda g: _unbroadcast(g * bv, ash),
            lambda g: _unbroadcast(g * av, bsh),
        )
    elif kind == "div":
        safe = _safe_denominator(bv)
        out = av / safe
        vjps = (
            lambda g: _unbroadcast(g / safe, ash),
            lambda g: _unbroadcast(-g * av / (safe * safe), bsh),
        )
    else:
        raise ConfigError(f"unknown elementwise kind {kind!r}")
    return DiffNode(out, (a, b), vjps)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def unary(a: DiffNode, kind: str) -> DiffNode:
    """Pointwise relu/sigmoid/exp/log/sqrt/square/neg."""
    a = _ensure(a)
    av = a.value
    if kind == "relu":
        out = np.maximum(av, 0.0)
        vjp = lambda g: g * (av > 0)
    elif kind == "sigmoid":
        out = _stable_sigmoid(av)
        vjp = lambda g: g * out * (1.0 - out)
    elif kind == "exp":
        out = np.exp(av)
        vjp = lambda g: g * out
    elif kind == "log":
        safe = np.maximum(av, EPS)
        out = np.log(safe)
        vjp = lambda g: g / safe
    elif kind == "sqrt":
        out = np.sqrt(np.maximum(av, 0.0))
        vjp = lambda g: g * 0.5 / np.sqrt(np.maximum(av, EPS))
    elif kind == "square":
        out = av * av
        vjp = lambda g: g * 2.0 * av
    elif kind == "neg":
        out = -av
        vjp = lambda g: -g
    else:
        raise ConfigError(f"unknown unary kind {kind!r}")
    return DiffNode(out, (a,), (vjp,))


def reduce(a: DiffNode, kind: str) -> DiffNode:
    """sum/mean to 1x1, row_sum/row_max to Nx1, col_sum to 1xC."""
    a = _ensure(a)
    av = a.value
    n, c = av.shape
    if kind == "sum":
        out = np.array([[av.sum()]])
        vjp = lambda g: np.full_like(av, g[0, 0])
    elif kind == "mean":
        out = np.array([[av.mean()]])
        vjp = lambda g: np.full_like(av, g[0, 0] / av.size)
    elif kind == "row_sum":
        out = av.sum(axis=1, keepdims=True)
        vjp = lambda g: np.broadcast_to(g, av.shape).copy()
    elif kind == "col_sum":
        out = av.sum(axis=0, keepdims=True)
        vjp = lambda g: np.broadcast_to(g, av.shape).copy()
    elif kind == "row_max":
        idx = av.argmax(axis=1)
        out = av[np.arange(n), idx].reshape(-1, 1)

        def vjp(g, idx=idx):
            # ties route the full gradient to the first maximum
            full = np.zeros_like(av)
            full[np.arange(n), idx] = g[:, 0]
            return full

    else:
        raise ConfigError(f"unknown reduce kind {kind!r}")
    return DiffNode(out, (a,), (vjp,))


def row_softmax(a: DiffNode, temperature: float = 1.0) -> DiffNode:
    """Per-row softmax of ``a / temperature``; rows sum to one."""
    if temperature <= 0:
        raise ConfigError(f"softmax temperature must be positive, got {temperature}")
    a = _ensure(a)
    z = a.value / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * s).sum(axis=1, keepdims=True)
        return (g - inner) * s / temperature

    return DiffNode(s, (a,), (vjp,))


def row_l2_normalize(a: DiffNode) -> DiffNode:
    """Scale every row to unit L2 norm; an exactly-zero row stays zero."""
    a = _ensure(a)
    av = a.value
    norms = np.sqrt((av * av).sum(axis=1, keepdims=True))
    nonzero = norms > 0.0
    safe = np.where(nonzero, norms, 1.0)
    out = np.where(nonzero, av / safe, 0.0)

    def vjp(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return np.where(nonzero, (g - out * inner) / safe, 0.0)

    return DiffNode(out, (a,), (vjp,))


def concat_cols(nodes) -> DiffNode:
    """Stack matrices side by side; all must share the row count."""
    nodes = [_ensure(n) for n in nodes]
    if not nodes:
        raise ShapeError("concat_cols of an empty list")
    rows = nodes[0].value.shape[0]
    if any(n.value.shape[0] != rows for n in nodes):
        raise ShapeError("concat_cols operands disagree on row count")
    out = np.hstack([n.value for n in nodes])
    offsets = np.cumsum([0] + [n.value.shape[1] for n in nodes])
    vjps = tuple(
        (lambda g, lo=lo, hi=hi: g[:, lo:hi])
        for lo, hi in zip(offsets[:-1], offsets[1:])
    )
    return DiffNode(out, tuple(nodes), vjps)


def slice_cols(a: DiffNode, start: int, stop: int) -> DiffNode:
    """Column slice ``a[:, start:stop]`` (inverse of concat_cols)."""
    a = _ensure(a)
    if not (0 <= start < stop <= a.value.shape[1]):
        raise ShapeError(f"slice [{start}:{stop}] out of range for {a.value.shape}")
    out = a.value[:, start:stop].copy()

    def vjp(g):
        full = np.zeros_like(a.value)
        full[:, start:stop] = g
        return full

    return DiffNode(out, (a,), (vjp,))


def transpose(a: DiffNode) -> DiffNode:
    a = _ensure(a)
    return DiffNode(a.value.T.copy(), (a,), (lambda g: g.T,))


def diag_col(a: DiffNode) -> DiffNode:
    """Main diagonal of a square matrix as an Nx1 column."""
    a = _ensure(a)
    n, c = a.value.shape
    if n != c:
        raise ShapeError(f"diag_col needs a square matrix, got {a.value.shape}")
    out = np.diag(a.value).reshape(-1, 1).copy()

    def vjp(g):
        full = np.zeros_like(a.value)
        np.fill_diagonal(full, g[:, 0])
        return full

    return DiffNode(out, (a,), (vjp,))


def _topo_order(root: DiffNode):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: DiffNode) -> dict:
    """Populate gradients for everything reachable from a scalar root.

    Gradients of all reachable nodes are reset first, so repeated calls are
    idempotent; a node consumed by several paths receives the summed
    contribution. Returns a map ``id(node) -> gradient`` for the reachable
    leaves (nodes with no parents).
    """
    if root.value.shape != (1, 1):
        raise ContractError(f"backward root must be 1x1, got {root.value.shape}")
    order = _topo_order(root)
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones((1, 1))
    for node in reversed(order):
        g = node._grad
        for parent, vjp in zip(node.parents, node._vjps):
            parent.grad += vjp(g)
    return {id(node): node.grad for node in order if not node.parents}


def zero_grads(params):
    for p in params:
        p.zero_grad()


class AdamState:
    """Moment buffers and step counter for bias-corrected Adam."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ConfigError(f"betas must lie in (0,1), got {beta1}, {beta2}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.value) for p in self.params]
        self.second_moment = [np.zeros_like(p.value) for p in self.params]


def adam_step(state: AdamState, params=None, grads=None):
    """One in-place Adam update; grads default to each param's .grad."""
    params = state.params if params is None else list(params)
    if grads is None:
        grads = [p.grad for p in params]
    if len(params) != len(grads) or len(params) != len(state.params):
        raise ShapeError("params/grads length mismatch against optimizer state")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.value.shape != g.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.value.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params
