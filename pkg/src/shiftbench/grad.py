"""Minimal reverse-mode differentiation tape over numpy arrays.

Only the handful of operations the reference models need are provided
(affine maps, relu, pooling via reshape+mean, embedding lookups, l2
normalization, cross-entropy, index remapping). Ops accept either plain
ndarrays or `Var` nodes; a graph is recorded only when a `Var` is involved,
so inference code and gradient code share the same forward functions.

All values are float64.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var", "value_of", "backward",
    "add", "sub", "mul", "neg", "matmul", "affine", "relu",
    "mean", "sum_", "reshape", "take_rows", "row_stack", "element",
    "l2_normalize", "cross_entropy", "exp", "clip", "remap", "transpose",
]


class Var:
    """A node in the computation graph holding a float64 ndarray."""

    __slots__ = ("value", "grad", "_parents", "_vjps")

    def __init__(self, value, parents=(), vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjps = vjps

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def value_of(x):
    """Raw float64 ndarray behind `x`, whether it is a Var or array-like."""
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _traced(*xs):
    return any(isinstance(x, Var) for x in xs)


def _make(value, inputs, vjps):
    """Wrap `value` in a Var recording only the traced inputs."""
    parents, kept = [], []
    for x, vjp in zip(inputs, vjps):
        if isinstance(x, Var):
            parents.append(x)
            kept.append(vjp)
    return Var(value, tuple(parents), tuple(kept))


def _unbroadcast(g, shape):
    """Reduce gradient `g` back to `shape` after numpy broadcasting."""
    g = np.asarray(g, dtype=np.float64)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def backward(root: Var) -> None:
    """Accumulate gradients of the scalar `root` into every reachable Var."""
    if root.value.size != 1:
        raise ValueError(f"backward expects a scalar root, got shape {root.value.shape}")
    topo, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = np.array(contrib, dtype=np.float64, copy=True)
            else:
                parent.grad += contrib


# ---------------------------------------------------------------------------
# ops


def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    if not _traced(a, b):
        return out
    return _make(out, (a, b), (
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(g, bv.shape),
    ))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    if not _traced(a, b):
        return out
    return _make(out, (a, b), (
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(-g, bv.shape),
    ))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    if not _traced(a, b):
        return out
    return _make(out, (a, b), (
        lambda g: _unbroadcast(g * bv, av.shape),
        lambda g: _unbroadcast(g * av, bv.shape),
    ))


def neg(a):
    av = value_of(a)
    if not _traced(a):
        return -av
    return _make(-av, (a,), (lambda g: -g,))


def matmul(a, b):
    """2D @ 2D matrix product."""
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    if not _traced(a, b):
        return out
    return _make(out, (a, b), (
        lambda g: g @ bv.T,
        lambda g: av.T @ g,
    ))


def affine(x, w, b):
    """x @ w + b with x (B, D), w (D, M), b (M,)."""
    xv, wv, bv = value_of(x), value_of(w), value_of(b)
    out = xv @ wv + bv
    if not _traced(x, w, b):
        return out
    return _make(out, (x, w, b), (
        lambda g: g @ wv.T,
        lambda g: xv.T @ g,
        lambda g: g.sum(axis=0),
    ))


def relu(a):
    av = value_of(a)
    out = np.maximum(av, 0.0)
    if not _traced(a):
        return out
    mask = av > 0.0
    return _make(out, (a,), (lambda g: g * mask,))


def mean(a, axis=None):
    av = value_of(a)
    out = av.mean(axis=axis)
    if not _traced(a):
        return out
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])

    def vjp(g):
        g = np.asarray(g, dtype=np.float64)
        if axis is None:
            return np.full(av.shape, g / n)
        gg = np.expand_dims(g, tuple(np.atleast_1d(axis)))
        return np.broadcast_to(gg / n, av.shape).copy()

    return _make(out, (a,), (vjp,))


def sum_(a, axis=None):
    av = value_of(a)
    out = av.sum(axis=axis)
    if not _traced(a):
        return out

    def vjp(g):
        g = np.asarray(g, dtype=np.float64)
        if axis is None:
            return np.full(av.shape, g)
        gg = np.expand_dims(g, tuple(np.atleast_1d(axis)))
        return np.broadcast_to(gg, av.shape).copy()

    return _make(out, (a,), (vjp,))


def reshape(a, shape):
    av = value_of(a)
    out = av.reshape(shape)
    if not _traced(a):
        return out
    return _make(out, (a,), (lambda g: np.asarray(g).reshape(av.shape),))


def transpose(a):
    av = value_of(a)
    if not _traced(a):
        return av.T
    return _make(av.T, (a,), (lambda g: np.asarray(g).T,))


def take_rows(a, idx):
    """Select rows a[idx] from a 2D array (embedding lookup)."""
    av = value_of(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = av[idx]
    if not _traced(a):
        return out

    def vjp(g):
        acc = np.zeros_like(av)
        np.add.at(acc, idx, np.asarray(g, dtype=np.float64))
        return acc

    return _make(out, (a,), (vjp,))


def row_stack(rows):
    """Stack a sequence of 1D vars/arrays into a 2D matrix."""
    vals = [value_of(r) for r in rows]
    out = np.stack(vals, axis=0)
    if not _traced(*rows):
        return out
    parents = list(rows)
    vjps = [(lambda i: (lambda g: np.asarray(g)[i]))(i) for i in range(len(rows))]
    return _make(out, tuple(parents), tuple(vjps))


def element(a, index):
    """Scalar element a[index] (index is a tuple for nD arrays)."""
    av = value_of(a)
    out = np.asarray(av[index], dtype=np.float64)
    if not _traced(a):
        return out

    def vjp(g):
        acc = np.zeros_like(av)
        acc[index] = g
        return acc

    return _make(out, (a,), (vjp,))


def l2_normalize(a, axis=-1, eps=1e-12):
    """Rows scaled to unit l2 norm along `axis`."""
    av = value_of(a)
    norm = np.sqrt(np.sum(av * av, axis=axis, keepdims=True))
    norm = np.maximum(norm, eps)
    out = av / norm
    if not _traced(a):
        return out

    def vjp(g):
        g = np.asarray(g, dtype=np.float64)
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (g - out * dot) / norm

    return _make(out, (a,), (vjp,))


def exp(a):
    av = value_of(a)
    out = np.exp(av)
    if not _traced(a):
        return out
    return _make(out, (a,), (lambda g: g * out,))


def clip(a, lo, hi):
    """Value clamp; gradient passes through only inside [lo, hi]."""
    av = value_of(a)
    out = np.clip(av, lo, hi)
    if not _traced(a):
        return out
    mask = (av >= lo) & (av <= hi)
    return _make(out, (a,), (lambda g: g * mask,))


def _log_softmax(z):
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean cross-entropy of (B, C) logits against integer labels."""
    lv = value_of(logits)
    labels = np.asarray(labels, dtype=np.intp)
    logp = _log_softmax(lv)
    out = -logp[np.arange(lv.shape[0]), labels].mean()
    if not _traced(logits):
        return out

    def vjp(g):
        p = np.exp(logp)
        p[np.arange(lv.shape[0]), labels] -= 1.0
        return p * (np.asarray(g, dtype=np.float64) / lv.shape[0])

    return _make(out, (logits,), (vjp,))


def remap(a, src, out_size):
    """Gather flat elements: out[j] = a.flat[src[j]] where src[j] >= 0, else 0.

    Used for differentiable nearest-neighbour resize + zero padding.
    """
    av = value_of(a)
    flat = av.reshape(-1)
    src = np.asarray(src, dtype=np.intp)
    out = np.where(src >= 0, flat[np.maximum(src, 0)], 0.0)
    if not _traced(a):
        return out

    def vjp(g):
        g = np.asarray(g, dtype=np.float64).reshape(-1)
        acc = np.zeros_like(flat)
        valid = src >= 0
        np.add.at(acc, src[valid], g[valid])
        return acc.reshape(av.shape)

    return _make(out, (a,), (vjp,))
