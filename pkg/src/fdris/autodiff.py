"""Small reverse-mode automatic differentiation over real numpy arrays.

A ``Var`` wraps an ndarray and records the operations applied to it; calling
``backward`` on a scalar result fills ``.grad`` on every upstream ``Var``.
The recorded graph doubles as the forward tape: replaying the stored closures
reproduces the forward values exactly.

Only what the actor/critic networks need is implemented: elementwise
arithmetic with broadcasting, matrix products, relu/tanh/softmax, layer
normalization, reductions, concatenation and slicing.
"""

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    __slots__ = ("value", "grad", "parents", "vjps")

    def __init__(self, value, parents=(), vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjps = vjps  # one vector-Jacobian closure per parent

    @property
    def shape(self):
        return self.value.shape

    # -- graph construction helpers --------------------------------------

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Var) else Var(x)

    def __add__(self, other):
        other = Var._lift(other)
        return Var(
            self.value + other.value,
            (self, other),
            (
                lambda g: _unbroadcast(g, self.value.shape),
                lambda g: _unbroadcast(g, other.value.shape),
            ),
        )

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, (self,), (lambda g: -g,))

    def __sub__(self, other):
        return self + (-Var._lift(other))

    def __rsub__(self, other):
        return Var._lift(other) + (-self)

    def __mul__(self, other):
        other = Var._lift(other)
        return Var(
            self.value * other.value,
            (self, other),
            (
                lambda g: _unbroadcast(g * other.value, self.value.shape),
                lambda g: _unbroadcast(g * self.value, other.value.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Var._lift(other)
        return Var(
            self.value / other.value,
            (self, other),
            (
                lambda g: _unbroadcast(g / other.value, self.value.shape),
                lambda g: _unbroadcast(
                    -g * self.value / other.value**2, other.value.shape
                ),
            ),
        )

    def __matmul__(self, other):
        other = Var._lift(other)
        return Var(
            self.value @ other.value,
            (self, other),
            (
                lambda g: g @ other.value.T,
                lambda g: self.value.T @ g,
            ),
        )

    def __pow__(self, p: float):
        return Var(
            self.value**p,
            (self,),
            (lambda g: g * p * self.value ** (p - 1),),
        )

    def __getitem__(self, idx):
        def vjp(g):
            out = np.zeros_like(self.value)
            np.add.at(out, idx, g)
            return out

        return Var(self.value[idx], (self,), (vjp,))

    # -- backward pass ----------------------------------------------------

    def backward(self, seed=None):
        """Accumulate gradients of this (scalar) node into the whole graph."""
        if seed is None:
            if self.value.size != 1:
                raise ValueError("backward() without seed requires a scalar output")
            seed = np.ones_like(self.value)
        order = []
        seen = set()
        # iterative topo sort; graphs can exceed the recursion limit
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))

        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.asarray(seed, dtype=np.float64).reshape(self.value.shape)
        for node in reversed(order):
            g = node.grad
            for parent, vjp in zip(node.parents, node.vjps):
                parent.grad = parent.grad + vjp(g)


# -- elementwise nonlinearities -------------------------------------------


def relu(x: Var) -> Var:
    mask = x.value > 0
    return Var(x.value * mask, (x,), (lambda g: g * mask,))


def tanh(x: Var) -> Var:
    out = np.tanh(x.value)
    return Var(out, (x,), (lambda g: g * (1.0 - out**2),))


def softmax(x: Var, axis: int = -1) -> Var:
    """Row-wise softmax along `axis`, numerically stabilised."""
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return p * (g - (g * p).sum(axis=axis, keepdims=True))

    return Var(p, (x,), (vjp,))


def sqrt(x: Var) -> Var:
    out = np.sqrt(x.value)
    return Var(out, (x,), (lambda g: g * 0.5 / out,))


# -- reductions and shaping -----------------------------------------------


def vsum(x: Var, axis=None, keepdims=False) -> Var:
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, x.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, x.value.shape).copy()

    return Var(out, (x,), (vjp,))


def vmean(x: Var, axis=None, keepdims=False) -> Var:
    n = x.value.size if axis is None else x.value.shape[axis]
    return vsum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(x: Var, shape) -> Var:
    return Var(
        x.value.reshape(shape), (x,), (lambda g: g.reshape(x.value.shape),)
    )


def concat(parts, axis: int = -1) -> Var:
    parts = [Var._lift(p) for p in parts]
    values = [p.value for p in parts]
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return vjp

    return Var(
        np.concatenate(values, axis=axis),
        tuple(parts),
        tuple(make_vjp(i) for i in range(len(parts))),
    )


def layer_norm_op(x: Var, gain: Var, offset: Var, eps: float) -> Var:
    """Per-row layer normalization with the full Jacobian in the backward pass.

    `x` is (batch, d); `gain`/`offset` are (d,).
    """
    mu = x.value.mean(axis=-1, keepdims=True)
    var = x.value.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv
    out = xhat * gain.value + offset.value
    d = x.value.shape[-1]

    def vjp_x(g):
        gx = g * gain.value
        # gradient through mean and variance statistics
        return inv * (
            gx
            - gx.mean(axis=-1, keepdims=True)
            - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        )

    def vjp_gain(g):
        return _unbroadcast(g * xhat, gain.value.shape)

    def vjp_offset(g):
        return _unbroadcast(g, offset.value.shape)

    out_var = Var(out, (x, gain, offset), (vjp_x, vjp_gain, vjp_offset))
    # keep d referenced for clarity of the formula above
    del d
    return out_var


def straight_through(hard: np.ndarray, soft: Var) -> Var:
    """Forward the `hard` values, backpropagate as if the output were `soft`."""
    if hard.shape != soft.value.shape:
        raise ValueError(f"shape mismatch {hard.shape} vs {soft.value.shape}")
    return Var(np.asarray(hard, dtype=np.float64), (soft,), (lambda g: g,))
