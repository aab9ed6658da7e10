"""Dense float64 tensors with a reverse-mode gradient tape.

Everything in this package trains through the primitives defined here.
The op set is deliberately small so each backward rule stays auditable:
matrix products, elementwise add/sub/mul, tanh/atanh/logistic, clamp,
sign, squared-norm reductions, and the max-abs norm. No broadcasting
beyond adding a bias vector to every row of a matrix.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Graph",
    "ShapeError",
    "no_grad",
    "grad_enabled",
    "add",
    "sub",
    "mul",
    "affine_const",
    "neg",
    "matmul",
    "hstack",
    "symmetrize",
    "reshape",
    "straight_through",
    "tanh",
    "atanh",
    "logistic",
    "clamp",
    "sign",
    "sumsq",
    "total",
    "mean",
    "linf",
    "mse",
    "grad_check",
]

# atanh would return inf at exactly +/-1; inputs are nudged inside by this
# margin. The modeling clip (1 - eps) * x used by attractor nets is a
# separate, much larger guard and lives in the attractor module.
ATANH_GUARD = 1e-12


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


def _shape_error(op, *shapes):
    listed = " vs ".join(str(tuple(s)) for s in shapes)
    return ShapeError(f"{op}: incompatible shapes {listed}")


_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends tape recording (e.g. for evaluation)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """A dense float64 array, optionally participating in the gradient tape.

    Tensors produced by primitives remember their parents and a backward
    rule; calling ``backward()`` on a scalar result accumulates gradients
    into every ``requires_grad`` leaf that contributed to it.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bw")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bw = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def is_leaf(self):
        return not self._parents

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # -- graph management ----------------------------------------------------

    def detach(self):
        """A grad-free copy. The data is copied so later in-place parameter
        updates cannot leak into detached snapshots."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        ``self`` must be a scalar. Repeated calls without ``zero_grad``
        keep accumulating, which is what lets parameters shared across an
        unrolled recurrence receive the sum of their per-step gradients.
        """
        if self.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        Graph.trace(self).run()

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return affine_const(self, float(other), 0.0)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return affine_const(self, -1.0, 0.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, bw):
    """Create an op result, recording it on the tape only when needed."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
    return out


class Graph:
    """Topologically ordered tape of the primitives reachable from a root.

    The order is a postorder over the implicit op graph, so reversing it
    visits every node exactly once with all downstream gradient already
    aggregated (reverse topological order).
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root):
        nodes = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        return cls(nodes)

    def run(self, seed=None):
        """Push gradient from the root (last node) back to the leaves."""
        if not self.nodes:
            return
        root = self.nodes[-1]
        flows = {id(root): np.ones_like(root.data) if seed is None else seed}
        for node in reversed(self.nodes):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf():
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._bw(g)):
                if not parent.requires_grad or pg is None:
                    continue
                key = id(parent)
                if key in flows:
                    flows[key] = flows[key] + pg
                else:
                    flows[key] = pg


# -- primitives ---------------------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g))
    # matrix rows + bias vector, either order
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return _make(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    if a.ndim == 1 and b.ndim == 2 and b.shape[1] == a.shape[0]:
        return _make(a.data + b.data, (a, b), lambda g: (g.sum(axis=0), g))
    raise _shape_error("add", a.shape, b.shape)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _make(a.data - b.data, (a, b), lambda g: (g, -g))
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return _make(a.data - b.data, (a, b), lambda g: (g, -g.sum(axis=0)))
    raise _shape_error("sub", a.shape, b.shape)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise _shape_error("mul", a.shape, b.shape)
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def affine_const(x, scale, shift=0.0):
    """scale * x + shift with python-float constants (covers neg, 1-x, x/c)."""
    scale = float(scale)
    return _make(scale * x.data + shift, (x,), lambda g: (scale * g,))


def neg(x):
    return affine_const(x, -1.0, 0.0)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0]:
        bw = lambda g: (g @ bd.T, ad.T @ g)
    elif a.ndim == 1 and b.ndim == 2 and a.shape[0] == b.shape[0]:
        bw = lambda g: (g @ bd.T, np.outer(ad, g))
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        bw = lambda g: (np.outer(g, bd), ad.T @ g)
    elif a.ndim == 1 and b.ndim == 1 and a.shape == b.shape:
        bw = lambda g: (g * bd, g * ad)
    else:
        raise _shape_error("matmul", a.shape, b.shape)
    return _make(ad @ bd, (a, b), bw)


def hstack(a, b):
    """Column-concatenate two matrices with matching row counts."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise _shape_error("hstack", a.shape, b.shape)
    k = a.shape[1]
    return _make(
        np.concatenate([a.data, b.data], axis=1),
        (a, b),
        lambda g: (g[:, :k], g[:, k:]),
    )


def symmetrize(x):
    """(x + x.T) / 2 for a square matrix."""
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise _shape_error("symmetrize", x.shape)
    return _make(
        0.5 * (x.data + x.data.T), (x,), lambda g: (0.5 * (g + g.T),)
    )


def reshape(x, shape):
    old = x.data.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def straight_through(x, value):
    """Take ``value`` (same shape as x) as the forward result while passing
    gradient through to x unchanged, as if the op were the identity."""
    value = np.asarray(value, dtype=np.float64)
    if value.shape != x.shape:
        raise _shape_error("straight_through", x.shape, value.shape)
    return _make(value, (x,), lambda g: (g,))


def tanh(x):
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def atanh(x):
    xc = np.clip(x.data, -1.0 + ATANH_GUARD, 1.0 - ATANH_GUARD)
    return _make(np.arctanh(xc), (x,), lambda g: (g / (1.0 - xc * xc),))


def logistic(x):
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def clamp(x, lo, hi):
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def sign(x):
    return _make(np.sign(x.data), (x,), lambda g: (np.zeros_like(g),))


def sumsq(x, axis=None):
    """Squared L2 norm, either of the whole tensor or per row (axis=1)."""
    xd = x.data
    if axis is None:
        return _make(np.sum(xd * xd), (x,), lambda g: (2.0 * g * xd,))
    if axis != 1 or x.ndim != 2:
        raise _shape_error("sumsq(axis=1)", x.shape)
    return _make(
        np.sum(xd * xd, axis=1), (x,), lambda g: (2.0 * g[:, None] * xd,)
    )


def total(x):
    return _make(np.sum(x.data), (x,), lambda g: (g * np.ones_like(x.data),))


def mean(x):
    n = x.size
    return _make(
        np.sum(x.data) / n, (x,), lambda g: (g * np.full_like(x.data, 1.0 / n),)
    )


def linf(x):
    """Max-abs norm. Subgradient routes through the first maximal entry."""
    xd = x.data
    flat = np.abs(xd).ravel()
    idx = int(np.argmax(flat))
    val = flat[idx]

    def bw(g):
        out = np.zeros_like(xd)
        out.ravel()[idx] = np.sign(xd.ravel()[idx]) * g
        return (out,)

    return _make(val, (x,), bw)


def mse(a, b):
    """Mean over all entries of the squared difference."""
    d = sub(a, b)
    return affine_const(sumsq(d), 1.0 / d.size)


# -- verification -------------------------------------------------------------


def grad_check(f, x, eps=1e-5):
    """Compare the taped gradient of ``f`` at ``x`` against central differences.

    ``f`` must map a Tensor to a scalar Tensor and be deterministic. Returns
    the maximum over coordinates of
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    out = f(leaf)
    if out.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = (
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    ).copy()

    numeric = np.zeros_like(leaf.data)
    flat = leaf.data.ravel()
    nflat = numeric.ravel()
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(Tensor(leaf.data)).data)
            flat[i] = orig - eps
            lo = float(f(Tensor(leaf.data)).data)
            flat[i] = orig
            nflat[i] = (hi - lo) / (2.0 * eps)

    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise FloatingPointError("non-finite values encountered in grad_check")
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
