"""Dense layers, layer normalization, initializers and Adam.

Parameters are held as ``autodiff.Var`` so one backward pass yields exact
gradients for every weight.  Everything is float64 so finite-difference
checks stay meaningful.
"""

import numpy as np

from .autodiff import Var, layer_norm_op
from .errors import DimensionError

LAYER_NORM_EPS = 1e-5


class DenseLayer:
    """y = W x + b, weights (d_out, d_in), activation applied by the caller."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise DimensionError(
                f"inconsistent dense shapes {weight.shape} / {bias.shape}"
            )
        self.weight = Var(weight)
        self.bias = Var(bias)

    @property
    def d_in(self):
        return self.weight.value.shape[1]

    @property
    def d_out(self):
        return self.weight.value.shape[0]

    def __call__(self, x: Var) -> Var:
        # x is (batch, d_in)
        if x.value.shape[-1] != self.d_in:
            raise DimensionError(
                f"input width {x.value.shape[-1]} != layer d_in {self.d_in}"
            )
        return x @ Var(self.weight.value.T, (self.weight,), (lambda g: g.T,)) + self.bias

    def params(self):
        return [self.weight, self.bias]


class LayerNorm:
    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS):
        self.gain = Var(np.ones(dim))
        self.offset = Var(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Var) -> Var:
        if x.value.shape[-1] != self.gain.value.shape[0]:
            raise DimensionError("layer norm width mismatch")
        return layer_norm_op(x, self.gain, self.offset, self.eps)

    def params(self):
        return [self.gain, self.offset]


def init_glorot(d_out: int, d_in: int, rng: np.random.Generator) -> DenseLayer:
    """Glorot uniform weights U(-g, g), g = sqrt(6/(d_in+d_out)); zero bias."""
    g = np.sqrt(6.0 / (d_in + d_out))
    return DenseLayer(rng.uniform(-g, g, size=(d_out, d_in)), np.zeros(d_out))


def init_small_uniform(
    d_out: int, d_in: int, bound: float, rng: np.random.Generator
) -> DenseLayer:
    """Near-zero uniform init for final action layers; zero bias."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    return DenseLayer(rng.uniform(-bound, bound, size=(d_out, d_in)), np.zeros(d_out))


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) over a parameter list."""

    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, grads=None):
        """Apply one update; `grads` defaults to each param's `.grad`."""
        if grads is None:
            grads = [p.grad for p in self.params]
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g**2
            mhat = self.m[i] / b1t
            vhat = self.v[i] / b2t
            p.value = p.value - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_tensors(self, prefix: str) -> dict:
        out = {f"{prefix}/t": np.array([float(self.t)])}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}/m{i}"] = m
            out[f"{prefix}/v{i}"] = v
        return out

    def load_state_tensors(self, prefix: str, tensors: dict):
        self.t = int(tensors[f"{prefix}/t"][0])
        for i in range(len(self.params)):
            self.m[i] = tensors[f"{prefix}/m{i}"].reshape(self.m[i].shape)
            self.v[i] = tensors[f"{prefix}/v{i}"].reshape(self.v[i].shape)
