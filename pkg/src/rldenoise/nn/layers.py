"""Minimal layer library with explicit forward/backward passes.

Only what the three networks here need: 3x3 / 3x3x3 convolutions (stride 1,
same or valid padding), dense and noisy-dense layers, leaky-ReLU, eLU,
global average pooling, flatten and softmax.  Convolutions run as one GEMM
per kernel tap on a channels-last copy of the input (shifted slices keep
rows contiguous, so every GEMM operand is BLAS-ready), chunked over the
batch to bound transient memory.  All layers are dtype-parametric; networks
run in float32, gradient checks use float64 instances.
"""

from __future__ import annotations

import numpy as np

# Cap on per-chunk transient elements; ~2 MB in float32 keeps the tap-loop
# accumulators cache-resident, which matters more than GEMM size here.
_COL_BUDGET = 500_000


class Parameter:
    """A named tensor with an accumulated gradient."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base class: forward caches whatever backward needs."""

    name = "layer"

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def _need_cache(self, cache, kind: str):
        if cache is None:
            raise RuntimeError(f"{kind}: backward called before forward")
        return cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)


def _batch_chunks(batch: int, per_item: int):
    """Yield batch slices so that batch_chunk * per_item <= _COL_BUDGET."""
    step = max(1, _COL_BUDGET // max(1, per_item))
    for lo in range(0, batch, step):
        yield slice(lo, min(lo + step, batch))


class _ConvNd(Layer):
    """Shared im2col convolution core for 2D and 3D, kernel extent 3."""

    _ndim = 2

    def __init__(self, c_in: int, c_out: int, *, padding: str = "same",
                 rng: np.random.Generator | None = None,
                 dtype=np.float32, name: str = "conv"):
        if padding not in ("same", "valid"):
            raise ValueError(f"{name}: padding must be 'same' or 'valid', got {padding!r}")
        self.c_in = int(c_in)
        self.c_out = int(c_out)
        self.padding = padding
        self.dtype = np.dtype(dtype)
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        taps = 3 ** self._ndim
        kshape = (self.c_out, self.c_in) + (3,) * self._ndim
        self.weight = Parameter(f"{name}.weight",
                                he_uniform(rng, kshape, self.c_in * taps, self.dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(self.c_out, dtype=self.dtype))
        self._xl = None

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    # spatial axes of an input tensor (B, C, *spatial)
    @property
    def _axes(self):
        return tuple(range(2, 2 + self._ndim))

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 2 + self._ndim:
            raise ValueError(f"{self.name}: expected {2 + self._ndim}D input "
                             f"(batch, channels, spatial), got shape {x.shape}")
        if x.shape[1] != self.c_in:
            raise ValueError(f"{self.name}: expected {self.c_in} input channels, "
                             f"got shape {x.shape}")
        if self.padding == "valid" and any(x.shape[a] < 3 for a in self._axes):
            raise ValueError(f"{self.name}: spatial extents {x.shape[2:]} too small "
                             "for a 3-wide valid convolution")

    def _pad(self, x: np.ndarray) -> np.ndarray:
        if self.padding == "valid":
            return x
        pad = [(0, 0), (0, 0)] + [(1, 1)] * self._ndim
        return np.pad(x, pad)

    def _tap_weights(self) -> np.ndarray:
        """(C_out, C_in, *3s) -> (taps, C_in, C_out) for per-tap GEMMs."""
        taps = 3 ** self._ndim
        w = self.weight.data.reshape(self.c_out, self.c_in, taps)
        return np.ascontiguousarray(np.moveaxis(w, 2, 0).swapaxes(1, 2))

    def _tap_slice(self, chunk: slice, tap, out_spatial) -> tuple:
        return ((chunk,) + tuple(slice(t, t + n)
                                 for t, n in zip(tap, out_spatial))
                + (slice(None),))

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check_input(x)
        xp = self._pad(x)
        out_spatial = tuple(xp.shape[a] - 2 for a in self._axes)
        n_out = int(np.prod(out_spatial))
        # channels-last copy once; every kernel tap is then a shifted slice
        # whose rows are contiguous, so each GEMM operand is BLAS-ready
        xl = np.ascontiguousarray(np.moveaxis(xp, 1, -1))
        self._xl = xl
        self._out_spatial = out_spatial
        w2 = self._tap_weights()
        b = x.shape[0]
        y = np.empty((b, self.c_out) + out_spatial, dtype=self.dtype)
        per_item = n_out * (self.c_in + 2 * self.c_out)
        for sl in _batch_chunks(b, per_item):
            nb = sl.stop - sl.start
            xs = np.empty((nb * n_out, self.c_in), dtype=self.dtype)
            xs_view = xs.reshape((nb,) + out_spatial + (self.c_in,))
            acc = np.zeros((nb * n_out, self.c_out), dtype=self.dtype)
            tmp = np.empty_like(acc)
            for k, tap in enumerate(np.ndindex(*(3,) * self._ndim)):
                np.copyto(xs_view, xl[self._tap_slice(sl, tap, out_spatial)])
                np.matmul(xs, w2[k], out=tmp)
                acc += tmp
            acc += self.bias.data
            y[sl] = np.moveaxis(
                acc.reshape((nb,) + out_spatial + (self.c_out,)), -1, 1)
        return y

    def backward(self, grad: np.ndarray) -> np.ndarray:
        xl = self._need_cache(self._xl, self.name)
        out_spatial = self._out_spatial
        n_out = int(np.prod(out_spatial))
        taps = 3 ** self._ndim
        w2 = self._tap_weights()
        dxl = np.zeros_like(xl)
        dw2 = np.zeros((taps, self.c_in, self.c_out), dtype=self.dtype)
        db = np.zeros(self.c_out, dtype=self.dtype)
        b = grad.shape[0]
        per_item = n_out * (2 * self.c_in + 2 * self.c_out)
        for sl in _batch_chunks(b, per_item):
            nb = sl.stop - sl.start
            gy = np.ascontiguousarray(
                np.moveaxis(grad[sl], 1, -1)).reshape(nb * n_out, self.c_out)
            db += gy.sum(axis=0)
            xs = np.empty((nb * n_out, self.c_in), dtype=self.dtype)
            xs_view = xs.reshape((nb,) + out_spatial + (self.c_in,))
            dxs = np.empty((nb * n_out, self.c_in), dtype=self.dtype)
            for k, tap in enumerate(np.ndindex(*(3,) * self._ndim)):
                sel = self._tap_slice(sl, tap, out_spatial)
                np.copyto(xs_view, xl[sel])
                dw2[k] += xs.T @ gy
                np.matmul(gy, w2[k].T, out=dxs)
                dxl[sel] += dxs.reshape((nb,) + out_spatial + (self.c_in,))
        dw = np.moveaxis(dw2.swapaxes(1, 2), 0, 2)
        self.weight.grad += dw.reshape(self.weight.data.shape)
        self.bias.grad += db
        dxp = np.moveaxis(dxl, -1, 1)
        if self.padding == "same":
            core = (slice(None), slice(None)) + (slice(1, -1),) * self._ndim
            dxp = dxp[core]
        return np.ascontiguousarray(dxp)


class Conv2D(_ConvNd):
    _ndim = 2


class Conv3D(_ConvNd):
    _ndim = 3


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, *, rng: np.random.Generator | None = None,
                 dtype=np.float32, name: str = "dense"):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.dtype = np.dtype(dtype)
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(f"{name}.weight",
                                he_uniform(rng, (n_out, n_in), n_in, self.dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(n_out, dtype=self.dtype))
        self._x = None

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"{self.name}: expected (batch, {self.n_in}) input, "
                             f"got shape {x.shape}")
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._need_cache(self._x, self.name)
        self.weight.grad += grad.T @ x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.data


def _factorized(e: np.ndarray) -> np.ndarray:
    return np.sign(e) * np.sqrt(np.abs(e))


class NoisyDense(Layer):
    """Dense layer with factorized Gaussian parameter noise.

    Noise modes:
      sample - draw fresh factorized noise on every forward
      frozen - reuse the last drawn noise (error if none was drawn)
      zero   - deterministic, noise terms dropped
    """

    def __init__(self, n_in: int, n_out: int, *, rng: np.random.Generator | None = None,
                 dtype=np.float32, name: str = "noisy"):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.dtype = np.dtype(dtype)
        self.name = name
        self._rng = rng if rng is not None else np.random.default_rng(0)
        sigma0 = 0.5 / np.sqrt(n_in)
        self.weight_mu = Parameter(f"{name}.weight_mu",
                                   he_uniform(self._rng, (n_out, n_in), n_in, self.dtype))
        self.weight_sigma = Parameter(f"{name}.weight_sigma",
                                      np.full((n_out, n_in), sigma0, dtype=self.dtype))
        self.bias_mu = Parameter(f"{name}.bias_mu", np.zeros(n_out, dtype=self.dtype))
        self.bias_sigma = Parameter(f"{name}.bias_sigma",
                                    np.full(n_out, sigma0, dtype=self.dtype))
        self.noise_mode = "zero"
        self._f_in = None
        self._f_out = None
        self._x = None
        self._w_eff = None
        self._zero_pass = True

    def parameters(self) -> list[Parameter]:
        return [self.weight_mu, self.weight_sigma, self.bias_mu, self.bias_sigma]

    def sample_noise(self, rng: np.random.Generator | None = None) -> None:
        r = rng if rng is not None else self._rng
        self._f_in = _factorized(r.standard_normal(self.n_in)).astype(self.dtype)
        self._f_out = _factorized(r.standard_normal(self.n_out)).astype(self.dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"{self.name}: expected (batch, {self.n_in}) input, "
                             f"got shape {x.shape}")
        mode = self.noise_mode
        if mode == "sample":
            self.sample_noise()
        elif mode == "frozen":
            if self._f_in is None:
                raise RuntimeError(f"{self.name}: frozen noise requested but no noise "
                                   "was ever sampled")
        elif mode != "zero":
            raise ValueError(f"{self.name}: unknown noise mode {mode!r}")
        self._x = x
        if mode == "zero":
            self._zero_pass = True
            self._w_eff = self.weight_mu.data
            return x @ self._w_eff.T + self.bias_mu.data
        self._zero_pass = False
        w_eff = self.weight_mu.data + self.weight_sigma.data * np.outer(self._f_out, self._f_in)
        b_eff = self.bias_mu.data + self.bias_sigma.data * self._f_out
        self._w_eff = w_eff
        return x @ w_eff.T + b_eff

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._need_cache(self._x, self.name)
        dw_eff = grad.T @ x
        db_eff = grad.sum(axis=0)
        self.weight_mu.grad += dw_eff
        self.bias_mu.grad += db_eff
        if not self._zero_pass:
            self.weight_sigma.grad += dw_eff * np.outer(self._f_out, self._f_in)
            self.bias_sigma.grad += db_eff * self._f_out
        return grad @ self._w_eff


class LeakyReLU(Layer):
    def __init__(self, alpha: float = 0.01, name: str = "lrelu"):
        self.alpha = float(alpha)
        self.name = name
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x >= 0
        return np.where(self._mask, x, self.alpha * x)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        mask = self._need_cache(self._mask, self.name)
        return np.where(mask, grad, self.alpha * grad)


class ELU(Layer):
    def __init__(self, alpha: float = 1.0, name: str = "elu"):
        self.alpha = float(alpha)
        self.name = name
        self._x = None
        self._y = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        self._y = np.where(x >= 0, x, self.alpha * np.expm1(np.minimum(x, 0)))
        return self._y

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._need_cache(self._x, self.name)
        # d/dx alpha*(e^x - 1) = alpha*e^x = y + alpha for x < 0
        return np.where(x >= 0, grad, grad * (self._y + self.alpha))


class GlobalAvgPool(Layer):
    """(B, C, *spatial) -> (B, C) by averaging every spatial axis."""

    def __init__(self, name: str = "gap"):
        self.name = name
        self._shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim < 3:
            raise ValueError(f"{self.name}: expected (batch, channels, spatial...), "
                             f"got shape {x.shape}")
        self._shape = x.shape
        return x.mean(axis=tuple(range(2, x.ndim)))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        shape = self._need_cache(self._shape, self.name)
        n = int(np.prod(shape[2:]))
        g = (grad / n).reshape(shape[:2] + (1,) * (len(shape) - 2))
        return np.broadcast_to(g, shape).copy()


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        self.name = name
        self._shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        shape = self._need_cache(self._shape, self.name)
        return grad.reshape(shape)


class Softmax(Layer):
    """Softmax over the last axis."""

    def __init__(self, name: str = "softmax"):
        self.name = name
        self._y = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._y = e / e.sum(axis=-1, keepdims=True)
        return self._y

    def backward(self, grad: np.ndarray) -> np.ndarray:
        y = self._need_cache(self._y, self.name)
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


class Sequential(Layer):
    def __init__(self, layers: list[Layer], name: str = "seq"):
        self.layers = list(layers)
        self.name = name

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def noisy_layers(self) -> list[NoisyDense]:
        out = []
        for layer in self.layers:
            if isinstance(layer, NoisyDense):
                out.append(layer)
            elif isinstance(layer, Sequential):
                out.extend(layer.noisy_layers())
        return out
