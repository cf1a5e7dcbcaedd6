"""Minimal numpy layers with hand-written backprop, plus an Adam optimizer.

Just enough machinery for the denoising network: 2-D convolution (im2col),
linear layers, SiLU, 2x average pooling, 2x nearest upsampling and channel
concatenation. Every layer caches what its backward pass needs during
``forward`` and releases it after ``backward``; gradients accumulate into
``Param.grad`` so shared use would compose correctly.

All math runs in the dtype the layers were built with; float64 is used by
the gradient-checking tests, float32 for training speed.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Param:
    """A learnable array plus its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def zero_grad(self):
        self.grad.fill(0.0)


class Layer:
    def params(self) -> list[Param]:
        return []


class Conv2d(Layer):
    """Convolution via im2col. Weight layout (cout, cin, k, k)."""

    def __init__(self, name, cin, cout, ksize=3, stride=1, pad=1,
                 rng=None, dtype=np.float64, zero_init=False):
        self.cin, self.cout, self.k = cin, cout, ksize
        self.stride, self.pad = stride, pad
        if zero_init:
            w = np.zeros((cout, cin, ksize, ksize), dtype=dtype)
        else:
            fan_in = cin * ksize * ksize
            w = rng.standard_normal((cout, cin, ksize, ksize)) * np.sqrt(2.0 / fan_in)
            w = w.astype(dtype)
        self.W = Param(f"{name}.W", w)
        self.b = Param(f"{name}.b", np.zeros(cout, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        n, c, h, w = x.shape
        k, s, p = self.k, self.stride, self.pad
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        oh, ow = win.shape[2], win.shape[3]
        # (N, C, OH, OW, k, k) -> (N, OH*OW, C*k*k)
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
        cols = cols.reshape(n, oh * ow, c * k * k)
        wmat = self.W.value.reshape(self.cout, -1)
        y = cols @ wmat.T + self.b.value
        self._cache = (cols, (n, c, h, w), (oh, ow))
        return np.ascontiguousarray(y.reshape(n, oh, ow, self.cout).transpose(0, 3, 1, 2))

    def backward(self, dout):
        cols, (n, c, h, w), (oh, ow) = self._cache
        self._cache = None
        k, s, p = self.k, self.stride, self.pad
        dmat = dout.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.cout)
        self.W.grad += (dmat.T @ cols.reshape(n * oh * ow, -1)).reshape(self.W.value.shape)
        self.b.grad += dmat.sum(axis=0)
        dcols = (dmat @ self.W.value.reshape(self.cout, -1)).reshape(n, oh, ow, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        for ki in range(k):
            for kj in range(k):
                dxp[:, :, ki:ki + s * oh:s, kj:kj + s * ow:s] += \
                    dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        if p:
            return dxp[:, :, p:-p, p:-p]
        return dxp


class Linear(Layer):
    def __init__(self, name, nin, nout, rng=None, dtype=np.float64, zero_init=False):
        if zero_init:
            w = np.zeros((nout, nin), dtype=dtype)
        else:
            w = (rng.standard_normal((nout, nin)) * np.sqrt(2.0 / nin)).astype(dtype)
        self.W = Param(f"{name}.W", w)
        self.b = Param(f"{name}.b", np.zeros(nout, dtype=dtype))
        self._x = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        self._x = x
        return x @ self.W.value.T + self.b.value

    def backward(self, dout):
        x, self._x = self._x, None
        self.W.grad += dout.T @ x
        self.b.grad += dout.sum(axis=0)
        return dout @ self.W.value


class SiLU(Layer):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        # clip keeps exp() in range; sigmoid saturates well before +/-60
        sig = 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))
        self._cache = (x, sig)
        return x * sig

    def backward(self, dout):
        x, sig = self._cache
        self._cache = None
        return dout * sig * (1.0 + x * (1.0 - sig))


class GroupNorm(Layer):
    """Group normalization over (channels//groups, H, W) slices."""

    def __init__(self, name, channels, groups=8, eps=1e-5, dtype=np.float64):
        if channels % groups:
            groups = math.gcd(channels, groups)
        self.groups = groups
        self.eps = eps
        self.gamma = Param(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Param(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        n, c, h, w = x.shape
        g = self.groups
        xg = x.reshape(n, g, -1)
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = ((xg - mu) * inv).reshape(n, c, h, w)
        self._cache = (xhat, inv, (n, c, h, w))
        return xhat * self.gamma.value[:, None, None] + self.beta.value[:, None, None]

    def backward(self, dout):
        xhat, inv, (n, c, h, w) = self._cache
        self._cache = None
        g = self.groups
        self.beta.grad += dout.sum(axis=(0, 2, 3))
        self.gamma.grad += (dout * xhat).sum(axis=(0, 2, 3))
        dxhat = (dout * self.gamma.value[:, None, None]).reshape(n, g, -1)
        xhat_g = xhat.reshape(n, g, -1)
        mean_d = dxhat.mean(axis=2, keepdims=True)
        mean_dx = (dxhat * xhat_g).mean(axis=2, keepdims=True)
        dx = inv * (dxhat - mean_d - xhat_g * mean_dx)
        return dx.reshape(n, c, h, w)


class AvgPool2(Layer):
    """2x2 average pooling, stride 2. H and W must be even."""

    def forward(self, x):
        n, c, h, w = x.shape
        return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(self, dout):
        return np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) * 0.25


class UpsampleNearest2(Layer):
    def forward(self, x):
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)

    def backward(self, dout):
        n, c, h, w = dout.shape
        return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def concat_channels(a, b):
    return np.concatenate([a, b], axis=1)


def split_channels(dout, c_first):
    return dout[:, :c_first], dout[:, c_first:]


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params: list[Param], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> dict:
        out = {"t": self.t, "lr": self.lr, "beta1": self.beta1,
               "beta2": self.beta2, "eps": self.eps}
        for p, m, v in zip(self.params, self.m, self.v):
            out[f"m/{p.name}"] = m
            out[f"v/{p.name}"] = v
        return out

    def load_state_dict(self, state: dict):
        self.t = int(state["t"])
        for i, p in enumerate(self.params):
            self.m[i] = np.array(state[f"m/{p.name}"])
            self.v[i] = np.array(state[f"v/{p.name}"])
