"""Conditional U-Net denoiser: predicts injected noise from (condition, y_t, gamma).

The 4-channel condition tensor is concatenated with the 3-channel noisy
image at the input, so the network sees 7 channels. The cumulative
signal-retention level ``gamma`` (a real in (0, 1]) enters through a
sinusoidal feature vector and a small MLP whose output adds a per-channel
bias inside every residual block (FiLM-style).

Reference configuration: 3 resolution levels, base width 32, channel width
doubling per level, group-normalized residual blocks that start as the
identity. The architecture descriptor (depth / base_width / emb_dim) plus
the init seed fully determine the parameter shapes, which is what
checkpoints store.
"""

from __future__ import annotations

import numpy as np

from .errors import ImageShapeError, ParameterError
from .nn import (
    Adam,
    AvgPool2,
    Conv2d,
    GroupNorm,
    Layer,
    Linear,
    Param,
    SiLU,
    UpsampleNearest2,
    concat_channels,
    split_channels,
)


class Denoiser:
    """Abstract noise predictor: predict(x, y_t, gamma) -> estimated noise."""

    def predict(self, x, y_t, gamma):
        raise NotImplementedError


def gamma_features(gamma, emb_dim: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal features of the noise level, shape (N, emb_dim).

    Frequencies are pi * 2**i, matched to gamma living in (0, 1].
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    half = emb_dim // 2
    freqs = np.pi * (2.0 ** np.arange(half))
    ang = gamma[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)


class ResBlock(Layer):
    """norm -> SiLU -> conv -> (+ gamma bias) -> norm -> SiLU -> conv, residual.

    The second conv starts at zero so every block is the identity at init,
    which keeps early training stable.
    """

    def __init__(self, name, cin, cout, emb_hidden, rng, dtype):
        self.gn1 = GroupNorm(f"{name}.gn1", cin, dtype=dtype)
        self.act1 = SiLU()
        self.conv1 = Conv2d(f"{name}.conv1", cin, cout, 3, pad=1, rng=rng, dtype=dtype)
        self.film = Linear(f"{name}.film", emb_hidden, cout, rng=rng, dtype=dtype)
        self.gn2 = GroupNorm(f"{name}.gn2", cout, dtype=dtype)
        self.act2 = SiLU()
        self.conv2 = Conv2d(f"{name}.conv2", cout, cout, 3, pad=1, rng=rng,
                            dtype=dtype, zero_init=True)
        self.proj = None
        if cin != cout:
            self.proj = Conv2d(f"{name}.proj", cin, cout, 1, pad=0, rng=rng, dtype=dtype)

    def params(self):
        out = (self.gn1.params() + self.conv1.params() + self.film.params()
               + self.gn2.params() + self.conv2.params())
        if self.proj is not None:
            out += self.proj.params()
        return out

    def forward(self, x, emb):
        h = self.conv1.forward(self.act1.forward(self.gn1.forward(x)))
        bias = self.film.forward(emb)
        h = h + bias[:, :, None, None]
        h = self.conv2.forward(self.act2.forward(self.gn2.forward(h)))
        skip = x if self.proj is None else self.proj.forward(x)
        return skip + h

    def backward(self, dout):
        """Returns (dx, demb)."""
        dh = self.gn2.backward(self.act2.backward(self.conv2.backward(dout)))
        demb = self.film.backward(dh.sum(axis=(2, 3)))
        dx = self.gn1.backward(self.act1.backward(self.conv1.backward(dh)))
        if self.proj is None:
            dx = dx + dout
        else:
            dx = dx + self.proj.backward(dout)
        return dx, demb


class ConditionalUNet(Denoiser):
    def __init__(self, depth=3, base_width=32, emb_dim=16,
                 in_channels=7, out_channels=3, dtype=np.float64, seed=0):
        if depth < 1:
            raise ParameterError(f"depth must be >= 1, got {depth}")
        if emb_dim % 2 or emb_dim < 2:
            raise ParameterError(f"emb_dim must be a positive even number, got {emb_dim}")
        self.depth = depth
        self.base_width = base_width
        self.emb_dim = emb_dim
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.dtype = np.dtype(dtype)
        self.seed = seed

        rng = np.random.default_rng(seed)
        widths = [base_width * (2 ** i) for i in range(depth)]
        emb_hidden = 2 * emb_dim
        self.emb_lin = Linear("emb", emb_dim, emb_hidden, rng=rng, dtype=dtype)
        self.emb_act = SiLU()
        self.in_conv = Conv2d("in_conv", in_channels, widths[0], 3, pad=1,
                              rng=rng, dtype=dtype)
        self.enc = [ResBlock(f"enc{i}", widths[i], widths[i], emb_hidden, rng, dtype)
                    for i in range(depth)]
        self.pools = [AvgPool2() for _ in range(depth - 1)]
        self.down = [Conv2d(f"down{i}", widths[i], widths[i + 1], 3, pad=1,
                            rng=rng, dtype=dtype) for i in range(depth - 1)]
        self.mid = ResBlock("mid", widths[-1], widths[-1], emb_hidden, rng, dtype)
        self.ups = [UpsampleNearest2() for _ in range(depth - 1)]
        self.up = [Conv2d(f"up{i}", widths[i + 1], widths[i], 3, pad=1,
                          rng=rng, dtype=dtype) for i in range(depth - 1)]
        self.dec = [ResBlock(f"dec{i}", 2 * widths[i], widths[i], emb_hidden, rng, dtype)
                    for i in range(depth - 1)]
        self.out_conv = Conv2d("out_conv", widths[0], out_channels, 3, pad=1,
                               rng=rng, dtype=dtype, zero_init=True)
        self._widths = widths

    # -- parameter plumbing ------------------------------------------------

    def params(self) -> list[Param]:
        out = self.emb_lin.params() + self.in_conv.params()
        for blk in self.enc:
            out += blk.params()
        for conv in self.down:
            out += conv.params()
        out += self.mid.params()
        for conv in self.up:
            out += conv.params()
        for blk in self.dec:
            out += blk.params()
        out += self.out_conv.params()
        return out

    def param_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.params()}

    def load_param_dict(self, values: dict[str, np.ndarray]) -> None:
        for p in self.params():
            if p.name not in values:
                raise KeyError(f"missing parameter {p.name!r}")
            arr = np.asarray(values[p.name], dtype=self.dtype)
            if arr.shape != p.value.shape:
                raise ValueError(
                    f"parameter {p.name!r} has shape {arr.shape}, expected {p.value.shape}"
                )
            p.value = arr.copy()
        # fresh grad buffers matching the new arrays
        for p in self.params():
            p.grad = np.zeros_like(p.value)

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def descriptor(self) -> dict:
        return {
            "depth": self.depth,
            "base_width": self.base_width,
            "emb_dim": self.emb_dim,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "dtype": self.dtype.name,
            "seed": self.seed,
        }

    @classmethod
    def from_descriptor(cls, desc: dict) -> "ConditionalUNet":
        return cls(depth=int(desc["depth"]), base_width=int(desc["base_width"]),
                   emb_dim=int(desc["emb_dim"]), in_channels=int(desc["in_channels"]),
                   out_channels=int(desc["out_channels"]), dtype=desc["dtype"],
                   seed=int(desc.get("seed", 0)))

    def make_optimizer(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> Adam:
        return Adam(self.params(), lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    # -- forward / backward -------------------------------------------------

    def forward(self, inp, gamma):
        n, c, h, w = inp.shape
        if c != self.in_channels:
            raise ImageShapeError(f"expected {self.in_channels} input channels, got {c}")
        div = 2 ** (self.depth - 1)
        if h % div or w % div:
            raise ImageShapeError(
                f"image size {h}x{w} not divisible by 2**(depth-1) = {div}"
            )
        feats = gamma_features(gamma, self.emb_dim, self.dtype)
        emb = self.emb_act.forward(self.emb_lin.forward(feats))

        x = self.in_conv.forward(inp.astype(self.dtype, copy=False))
        skips = []
        for i in range(self.depth):
            x = self.enc[i].forward(x, emb)
            if i < self.depth - 1:
                skips.append(x)
                x = self.down[i].forward(self.pools[i].forward(x))
        x = self.mid.forward(x, emb)
        for i in reversed(range(self.depth - 1)):
            x = self.up[i].forward(self.ups[i].forward(x))
            x = concat_channels(x, skips[i])
            x = self.dec[i].forward(x, emb)
        self._skip_widths = [s.shape[1] for s in skips]
        return self.out_conv.forward(x)

    def backward(self, dout):
        """Backprop from d(output); accumulates parameter grads, returns d(input)."""
        demb_total = None

        def add_emb(demb):
            nonlocal demb_total
            demb_total = demb if demb_total is None else demb_total + demb

        dx = self.out_conv.backward(dout)
        dskips = [None] * (self.depth - 1)
        for i in range(self.depth - 1):
            dx, demb = self.dec[i].backward(dx)
            add_emb(demb)
            dup, dskip = split_channels(dx, dx.shape[1] - self._skip_widths[i])
            dskips[i] = dskip
            dx = self.ups[i].backward(self.up[i].backward(dup))
        dx, demb = self.mid.backward(dx)
        add_emb(demb)
        for i in reversed(range(self.depth)):
            if i < self.depth - 1:
                dx = self.pools[i].backward(self.down[i].backward(dx))
                dx = dx + dskips[i]
            dx, demb = self.enc[i].backward(dx)
            add_emb(demb)
        dinp = self.in_conv.backward(dx)
        dfeats = self.emb_lin.backward(self.emb_act.backward(demb_total))
        del dfeats  # gamma features carry no learnable parameters upstream
        return dinp

    # -- public prediction interface ----------------------------------------

    def predict(self, x, y_t, gamma):
        """Estimate the injected noise; shapes follow y_t.

        Accepts single images (C, H, W) or batches (N, C, H, W); ``gamma``
        is a scalar or per-element array in (0, 1].
        """
        single = (np.ndim(y_t) == 3)
        xb = np.asarray(x, dtype=self.dtype)
        yb = np.asarray(y_t, dtype=self.dtype)
        if single:
            xb, yb = xb[None], yb[None]
        if xb.shape[0] != yb.shape[0] or xb.shape[2:] != yb.shape[2:]:
            raise ImageShapeError(
                f"condition {xb.shape} and noisy image {yb.shape} disagree"
            )
        gm = np.broadcast_to(np.atleast_1d(np.asarray(gamma, dtype=np.float64)),
                             (yb.shape[0],))
        out = self.forward(concat_channels(xb, yb), gm)
        return out[0] if single else out
