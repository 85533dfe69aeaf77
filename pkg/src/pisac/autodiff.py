"""Reverse-mode differentiation over dense float64 tensors.

Small tape-free engine: every operation returns a Node holding its
value and vector-Jacobian closures for each parent.  backward() does a
deterministic depth-first topological sweep from a scalar root and
accumulates gradients by summation.  The primitive set is exactly what
the channel synthesis, the policy network and the penalty loss need;
elementwise primitives broadcast, matmul/solve/logdet operate on
stacked leading dimensions.
"""

from __future__ import annotations

import numpy as np


class Node:
    """One vertex of the differentiation graph."""

    __slots__ = ("value", "parents", "grad")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents  # tuple of (Node, vjp callable)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def constant(value) -> Node:
    return Node(value)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------

def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value + b.value,
                ((a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(g, b.shape))))


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value - b.value,
                ((a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(-g, b.shape))))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(a.value * b.value,
                ((a, lambda g: _unbroadcast(g * b.value, a.shape)),
                 (b, lambda g: _unbroadcast(g * a.value, b.shape))))


def reciprocal(a: Node) -> Node:
    inv = 1.0 / a.value
    return Node(inv, ((a, lambda g: -g * inv * inv),))


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(out, ((a, lambda g: g * out),))


def log(a: Node) -> Node:
    return Node(np.log(a.value), ((a, lambda g: g / a.value),))


def sqrt(a: Node) -> Node:
    out = np.sqrt(a.value)
    return Node(out, ((a, lambda g: g * 0.5 / out),))


def sin(a: Node) -> Node:
    return Node(np.sin(a.value), ((a, lambda g: g * np.cos(a.value)),))


def cos(a: Node) -> Node:
    return Node(np.cos(a.value), ((a, lambda g: -g * np.sin(a.value)),))


def relu(a: Node) -> Node:
    """Hinge max(x, 0); subgradient at 0 is 0."""
    mask = a.value > 0.0
    return Node(np.where(mask, a.value, 0.0), ((a, lambda g: g * mask),))


def elu(a: Node) -> Node:
    pos = a.value > 0.0
    out = np.where(pos, a.value, np.expm1(a.value))
    return Node(out, ((a, lambda g: g * np.where(pos, 1.0, out + 1.0)),))


def sigmoid(a: Node) -> Node:
    out = 1.0 / (1.0 + np.exp(-a.value))
    return Node(out, ((a, lambda g: g * out * (1.0 - out)),))


# -- shape plumbing -------------------------------------------------------

def reshape(a: Node, shape) -> Node:
    old = a.shape
    return Node(a.value.reshape(shape),
                ((a, lambda g: g.reshape(old)),))


def transpose(a: Node, axes=None) -> Node:
    if axes is None:
        axes = list(range(a.value.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Node(a.value.transpose(axes),
                ((a, lambda g: g.transpose(inv)),))


def concat(nodes, axis: int) -> Node:
    nodes = [as_node(n) for n in nodes]
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)
    value = np.concatenate([n.value for n in nodes], axis=axis)

    def make_vjp(i):
        sl = [slice(None)] * value.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return Node(value, tuple((n, make_vjp(i)) for i, n in enumerate(nodes)))


def getitem(a: Node, idx) -> Node:
    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return Node(a.value[idx], ((a, vjp),))


# -- reductions -----------------------------------------------------------

def sumn(a: Node, axis=None, keepdims: bool = False) -> Node:
    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.shape).copy()

    return Node(a.value.sum(axis=axis, keepdims=keepdims), ((a, vjp),))


def mean(a: Node, axis=None, keepdims: bool = False) -> Node:
    if axis is None:
        count = a.value.size
    else:
        count = a.value.shape[axis]

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g / count, a.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg / count, a.shape).copy()

    return Node(a.value.mean(axis=axis, keepdims=keepdims), ((a, vjp),))


def norm(a: Node, axis: int = -1, keepdims: bool = False) -> Node:
    """Euclidean norm along one axis."""
    out = np.sqrt((a.value ** 2).sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        nn = out if keepdims else np.expand_dims(out, axis)
        return gg * a.value / nn

    return Node(out, ((a, vjp),))


def vmin(a: Node, axis: int = -1) -> Node:
    """Minimum along an axis; gradient routes to the first argmin."""
    idx = np.argmin(a.value, axis=axis)
    out = np.take_along_axis(a.value, np.expand_dims(idx, axis),
                             axis=axis).squeeze(axis)

    def vjp(g):
        z = np.zeros_like(a.value)
        np.put_along_axis(z, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis=axis)
        return z

    return Node(out, ((a, vjp),))


# -- linear algebra --------------------------------------------------------

def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    value = a.value @ b.value

    def vjp_a(g):
        return _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)

    def vjp_b(g):
        return _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)

    return Node(value, ((a, vjp_a), (b, vjp_b)))


def logdet_spd(a: Node) -> Node:
    """log det of symmetric positive definite matrices (stacked ok).

    Backward is the symmetrized inverse.
    """
    chol = np.linalg.cholesky(a.value)
    out = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)

    def vjp(g):
        inv = np.linalg.inv(a.value)
        inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
        return g[..., None, None] * inv

    return Node(out, ((a, vjp),))


def solve(a: Node, b: Node) -> Node:
    """x = A^-1 b for stacked square A and matching right-hand sides."""
    x = np.linalg.solve(a.value, b.value)
    at = np.swapaxes(a.value, -1, -2)

    def vjp_a(g):
        gb = np.linalg.solve(at, g)
        return _unbroadcast(-gb @ np.swapaxes(x, -1, -2), a.shape)

    def vjp_b(g):
        return _unbroadcast(np.linalg.solve(at, g), b.shape)

    return Node(x, ((a, vjp_a), (b, vjp_b)))


# -- network primitives -----------------------------------------------------

def conv1d(x: Node, w: Node, b: Node) -> Node:
    """1-D convolution, stride 1, zero 'same' padding.

    x: (batch, c_in, length), w: (c_out, c_in, k) with odd k, b: (c_out,).
    """
    batch, c_in, length = x.shape
    c_out, c_in_w, k = w.shape
    if c_in_w != c_in:
        raise ValueError(f"channel mismatch: {c_in_w} vs {c_in}")
    pad = (k - 1) // 2
    xp = np.pad(x.value, ((0, 0), (0, 0), (pad, pad)))
    # im2col folded across the batch so the conv is one large matmul:
    # col (c_in * k, batch * length), w2 (c_out, c_in * k).
    col = np.stack([xp[:, :, t:t + length] for t in range(k)], axis=2)
    col = col.transpose(1, 2, 0, 3).reshape(c_in * k, batch * length)
    w2 = w.value.reshape(c_out, c_in * k)
    out = (w2 @ col).reshape(c_out, batch, length).transpose(1, 0, 2)
    out = out + b.value[None, :, None]

    def vjp_x(g):
        gt = g.transpose(1, 0, 2).reshape(c_out, batch * length)
        gcol = (w2.T @ gt).reshape(c_in, k, batch, length)
        gx = np.zeros_like(xp)
        for t in range(k):
            gx[:, :, t:t + length] += gcol[:, t].transpose(1, 0, 2)
        return gx[:, :, pad:pad + length]

    def vjp_w(g):
        gt = g.transpose(1, 0, 2).reshape(c_out, batch * length)
        return (gt @ col.T).reshape(c_out, c_in, k)

    def vjp_b(g):
        return g.sum(axis=(0, 2))

    return Node(out, ((x, vjp_x), (w, vjp_w), (b, vjp_b)))


def maxpool1d(x: Node) -> Node:
    """Max pooling, window 2, stride 2, ceil mode (odd lengths pad right).

    Gradient routes to the first maximal element of each window.
    """
    batch, ch, length = x.shape
    out_len = (length + 1) // 2
    if length % 2:
        xv = np.concatenate(
            [x.value, np.full((batch, ch, 1), -np.inf)], axis=2)
    else:
        xv = x.value
    pairs = xv.reshape(batch, ch, out_len, 2)
    left, right = pairs[..., 0], pairs[..., 1]
    take_left = left >= right  # ties route to the first element
    out = np.where(take_left, left, right)

    def vjp(g):
        gz = np.empty_like(pairs)
        gz[..., 0] = np.where(take_left, g, 0.0)
        gz[..., 1] = np.where(take_left, 0.0, g)
        return gz.reshape(batch, ch, -1)[:, :, :length]

    return Node(out, ((x, vjp),))


def global_avg_pool(x: Node) -> Node:
    """Mean over the trailing (length) axis: (batch, c, l) -> (batch, c)."""
    return mean(x, axis=-1)


# -- traversal ---------------------------------------------------------------

def _toposort(root: Node):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Node):
    """Accumulate gradients of a scalar root into every reachable node."""
    if root.value.size != 1:
        raise ValueError("backward requires a scalar root")
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            g = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad = parent.grad + g


def check_gradient(builder, inputs, step: float = 1e-6, rng=None,
                   max_coords: int | None = None) -> float:
    """Compare reverse-mode gradients against central finite differences.

    builder maps a list of leaf Nodes to a scalar Node.  Returns the
    worst relative error over all checked coordinates (optionally a
    random subsample of max_coords per input).
    """
    leaves = [as_node(np.array(x, dtype=np.float64)) for x in inputs]
    root = builder(leaves)
    backward(root)
    worst = 0.0
    for leaf in leaves:
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        grad = np.broadcast_to(grad, leaf.value.shape)
        coords = list(np.ndindex(leaf.value.shape))
        if max_coords is not None and len(coords) > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            pick = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in pick]
        for idx in coords:
            orig = leaf.value[idx]
            leaf.value[idx] = orig + step
            f_plus = float(builder(leaves).value)
            leaf.value[idx] = orig - step
            f_minus = float(builder(leaves).value)
            leaf.value[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            ad = float(grad[idx])
            denom = max(abs(fd), abs(ad), 1e-8)
            worst = max(worst, abs(fd - ad) / denom)
    return worst
