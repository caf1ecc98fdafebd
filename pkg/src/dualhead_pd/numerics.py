"""Small reverse-mode autodiff over NumPy arrays.

Every op returns a :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. :func:`backward` orders the
graph reachable from a scalar root (the compute record) and visits each node
once in reverse.

Arrays use float32 by default; wrap gradient checks in ``precision(np.float64)``.
"""

from contextlib import contextmanager

import numpy as np

from . import kernels


class DimensionError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


_dtype = [np.float32]


def default_dtype():
    return _dtype[-1]


@contextmanager
def precision(dtype):
    _dtype.append(np.dtype(dtype).type)
    try:
        yield
    finally:
        _dtype.pop()


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "name")

    def __init__(self, value, parents=(), backward_fn=None, name=None):
        value = np.asarray(value)
        if value.dtype.kind != "f":
            value = value.astype(default_dtype())
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def numpy(self):
        return self.value

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

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
        return mul(self, -1.0)


class Param(Tensor):
    """A named leaf whose gradient the optimizer consumes."""

    __slots__ = ()

    def __init__(self, name, value):
        super().__init__(np.array(value, copy=True), name=name)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype or default_dtype()))


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dt = like.value.dtype if like is not None else default_dtype()
    return Tensor(np.asarray(x, dtype=dt))


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root):
    """Accumulate d(root)/d(node) into ``.grad`` of every reachable Param.

    Intermediate gradients are dropped after use. Returns the compute record
    (nodes in forward order).
    """
    if root.value.size != 1:
        raise DimensionError(f"backward needs a scalar root, got shape {root.shape}")
    record = _topological(root)
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(record):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Param):
            node.grad = node.grad + g
            continue
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return record


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return Tensor(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return Tensor(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    a, b = _as_tensor(a, b if isinstance(b, Tensor) else None), _as_tensor(b, a if isinstance(a, Tensor) else None)
    av, bv = a.value, b.value
    return Tensor(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def reshape(a, shape):
    old = a.shape
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False):
    n = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(parts, axis=-1):
    values = [p.value for p in parts]
    ax = axis % values[0].ndim
    bounds = np.cumsum([v.shape[ax] for v in values])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor(np.concatenate(values, axis=ax), tuple(parts), back)


def take(a, indices, axis=0):
    """Gather along ``axis``; repeated indices accumulate in backward."""
    idx = np.asarray(indices, dtype=np.int64)
    shape = a.shape

    def back(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, (slice(None),) * (axis % len(shape)) + (idx,), g)
        return (out,)

    return Tensor(np.take(a.value, idx, axis=axis), (a,), back)


def log(a):
    av = a.value
    return Tensor(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a):
    out = np.sqrt(a.value)

    def back(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return Tensor(out, (a,), back)


def clip(a, lo, hi):
    av = a.value
    inside = (av >= lo) & (av <= hi)
    return Tensor(np.clip(av, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# activations


def relu(x):
    mask = x.value > 0
    return Tensor(np.where(mask, x.value, 0).astype(x.value.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x):
    v = x.value
    # split on sign so neither branch overflows
    ex = np.exp(-np.abs(v))
    out = np.where(v >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex)).astype(v.dtype)
    return Tensor(out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax(x, axis=-1):
    v = x.value
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor(out, (x,), back)


# ---------------------------------------------------------------------------
# layers


def dense(x, w, b):
    xv, wv = x.value, w.value
    if xv.shape[-1] != wv.shape[0] or b.shape != (wv.shape[1],):
        raise DimensionError(
            f"dense: input {xv.shape} incompatible with weight {wv.shape} / bias {b.shape}"
        )

    def back(g):
        gx = g @ wv.T
        gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return gx, gw, gb

    return Tensor(xv @ wv + b.value, (x, w, b), back)


def matvec(x, q):
    """out[..., t] = <x[..., t, :], q>."""
    xv, qv = x.value, q.value
    if xv.shape[-1] != qv.shape[0]:
        raise DimensionError(f"matvec: input {xv.shape} incompatible with vector {qv.shape}")

    def back(g):
        gq = np.tensordot(g, xv, axes=(tuple(range(g.ndim)), tuple(range(g.ndim))))
        return g[..., None] * qv, gq

    return Tensor(xv @ qv, (x, q), back)


def conv1d(x, w, b):
    """Same-padded, stride-1 convolution over the time axis (-2).

    x is (T, Cin) or (N, T, Cin); w is (K, Cin, Cout) with K odd.
    """
    if w.shape[0] % 2 == 0:
        raise ConfigurationError(f"conv1d kernel size must be odd, got {w.shape[0]}")
    xv = x.value
    if xv.ndim not in (2, 3) or xv.shape[-1] != w.shape[1] or b.shape != (w.shape[2],):
        raise DimensionError(
            f"conv1d: input {xv.shape} incompatible with filters {w.shape} / bias {b.shape}"
        )
    squeeze = xv.ndim == 2
    x3 = xv[None] if squeeze else xv
    out = kernels.conv1d_forward(x3, w.value, b.value)

    def back(g):
        g3 = g[None] if squeeze else g
        gx, gw, gb = kernels.conv1d_backward(x3, w.value, g3)
        return (gx[0] if squeeze else gx), gw, gb

    return Tensor(out[0] if squeeze else out, (x, w, b), back)


def _standardize(v, axis, eps):
    mu = v.mean(axis=axis, keepdims=True)
    xc = v - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return xc * inv, inv


def _standardize_back(g, xhat, inv, axis):
    return inv * (
        g - g.mean(axis=axis, keepdims=True) - xhat * (g * xhat).mean(axis=axis, keepdims=True)
    )


def layer_norm(x, gain, bias, eps=1e-8):
    """Standardize each vector over the last axis, then apply gain and bias."""
    xhat, inv = _standardize(x.value, -1, eps)
    gv = gain.value

    def back(g):
        axes = tuple(range(g.ndim - 1))
        return (
            _standardize_back(g * gv, xhat, inv, -1),
            (g * xhat).sum(axis=axes),
            g.sum(axis=axes),
        )

    return Tensor(xhat * gv + bias.value, (x, gain, bias), back)


def time_standardize(x, eps=1e-8):
    """Per-channel standardization over the time axis (-2), population std."""
    xhat, inv = _standardize(x.value, -2, eps)
    return Tensor(xhat, (x,), lambda g: (_standardize_back(g, xhat, inv, -2),))


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(scalar_fn, inputs, eps=1e-6, floor=1e-3):
    """Worst relative error between analytic and central-difference gradients.

    ``scalar_fn`` maps the list of ``inputs`` (Params) to a scalar Tensor.
    Relative error per coordinate is |a - n| / max(|a|, |n|, floor); the floor
    keeps coordinates with vanishing gradients from dividing by round-off.
    """
    for p in inputs:
        p.zero_grad()
    out = scalar_fn(inputs)
    if not np.all(np.isfinite(out.value)):
        raise NumericError("scalar_fn produced a non-finite value")
    backward(out)
    worst = 0.0
    for p in inputs:
        analytic = p.grad
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(scalar_fn(inputs).value)
            flat[i] = orig - eps
            lo = float(scalar_fn(inputs).value)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite value perturbing {p.name}[{i}]")
            numeric = (hi - lo) / (2 * eps)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
