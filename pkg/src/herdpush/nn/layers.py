"""Layers with explicit forward/backward passes on numpy arrays.

Each layer keeps the cache it needs from its most recent forward; backward
consumes that cache and accumulates parameter gradients into Param.grad.
Arrays follow the input dtype so a float64 pass (used by the gradient
checker) stays float64 end to end; parameters are float32.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    def __init__(self, op: str, msg: str):
        super().__init__(f"{op}: {msg}")


class Param:
    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape


class Module:
    def params(self) -> list[tuple[str, Param]]:
        out = []
        for name, val in vars(self).items():
            if isinstance(val, Param):
                out.append((name, val))
            elif isinstance(val, Module):
                out.extend((f"{name}.{n}", p) for n, p in val.params())
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend((f"{name}.{i}.{n}", p) for n, p in item.params())
        return out


class Linear(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(c_in)
        self.w = Param(rng.uniform(-bound, bound, size=(c_out, c_in)))
        self.b = Param(rng.uniform(-bound, bound, size=c_out)) if bias else None
        self._x = None

    def forward(self, x):
        if x.shape[-1] != self.w.shape[1]:
            raise ShapeError("linear", f"got {x.shape}, want last dim {self.w.shape[1]}")
        self._x = x
        y = x @ self.w.data.T
        if self.b is not None:
            y = y + self.b.data
        return y

    def backward(self, gy):
        x = self._x
        x2 = x.reshape(-1, x.shape[-1])
        g2 = gy.reshape(-1, gy.shape[-1])
        self.w.grad += (g2.T @ x2).astype(self.w.grad.dtype)
        if self.b is not None:
            self.b.grad += g2.sum(axis=0).astype(self.b.grad.dtype)
        return gy @ self.w.data


def _conv_out_len(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, pad=0, rng=None, bias=True):
        bound = 1.0 / math.sqrt(c_in * kernel * kernel)
        self.w = Param(rng.uniform(-bound, bound, size=(c_out, c_in, kernel, kernel)))
        self.b = Param(rng.uniform(-bound, bound, size=c_out)) if bias else None
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self._cache = None

    def forward(self, x):
        c_out, c_in, k, _ = self.w.shape
        if x.ndim != 4 or x.shape[1] != c_in:
            raise ShapeError("conv2d", f"got {x.shape}, want (B, {c_in}, H, W)")
        B, _, H, W = x.shape
        s, p = self.stride, self.pad
        oh, ow = _conv_out_len(H, k, s, p), _conv_out_len(W, k, s, p)
        if oh <= 0 or ow <= 0:
            raise ShapeError("conv2d", f"kernel {k} too large for input {x.shape}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((B, c_in, k, k, oh, ow), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                cols[:, :, ki, kj] = xp[:, :, ki : ki + s * oh : s, kj : kj + s * ow : s]
        cols2 = cols.reshape(B, c_in * k * k, oh * ow)
        w2 = self.w.data.reshape(c_out, -1)
        y = np.matmul(w2[None], cols2).reshape(B, c_out, oh, ow)
        if self.b is not None:
            y = y + self.b.data[None, :, None, None]
        self._cache = (x.shape, xp.shape, cols2)
        return y

    def backward(self, gy):
        x_shape, xp_shape, cols2 = self._cache
        B, c_in, H, W = x_shape
        c_out, _, k, _ = self.w.shape
        s, p = self.stride, self.pad
        oh, ow = gy.shape[2], gy.shape[3]
        g2 = gy.reshape(B, c_out, oh * ow)
        self.w.grad += (
            np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape).astype(self.w.grad.dtype)
        )
        if self.b is not None:
            self.b.grad += gy.sum(axis=(0, 2, 3)).astype(self.b.grad.dtype)
        gcols = np.matmul(self.w.data.reshape(c_out, -1).T[None], g2)
        gcols = gcols.reshape(B, c_in, k, k, oh, ow)
        gxp = np.zeros(xp_shape, dtype=gy.dtype)
        for ki in range(k):
            for kj in range(k):
                gxp[:, :, ki : ki + s * oh : s, kj : kj + s * ow : s] += gcols[:, :, ki, kj]
        return gxp[:, :, p : p + H, p : p + W] if p else gxp


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, pad=0, rng=None, bias=True):
        bound = 1.0 / math.sqrt(c_in * kernel * kernel)
        self.w = Param(rng.uniform(-bound, bound, size=(c_in, c_out, kernel, kernel)))
        self.b = Param(rng.uniform(-bound, bound, size=c_out)) if bias else None
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self._x = None

    def forward(self, x):
        c_in, c_out, k, _ = self.w.shape
        if x.ndim != 4 or x.shape[1] != c_in:
            raise ShapeError("conv_transpose2d", f"got {x.shape}, want (B, {c_in}, H, W)")
        B, _, H, W = x.shape
        s, p = self.stride, self.pad
        oh = (H - 1) * s + k - 2 * p
        ow = (W - 1) * s + k - 2 * p
        if oh <= 0 or ow <= 0:
            raise ShapeError("conv_transpose2d", f"degenerate output for input {x.shape}")
        x2 = x.reshape(B, c_in, H * W)
        cols = np.matmul(self.w.data.reshape(c_in, -1).T[None], x2)
        cols = cols.reshape(B, c_out, k, k, H, W)
        ypad = np.zeros((B, c_out, oh + 2 * p, ow + 2 * p), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                ypad[:, :, ki : ki + s * H : s, kj : kj + s * W : s] += cols[:, :, ki, kj]
        y = ypad[:, :, p : p + oh, p : p + ow] if p else ypad
        if self.b is not None:
            y = y + self.b.data[None, :, None, None]
        self._x = x
        return y

    def backward(self, gy):
        x = self._x
        B, c_in, H, W = x.shape
        _, c_out, k, _ = self.w.shape
        s, p = self.stride, self.pad
        gypad = np.pad(gy, ((0, 0), (0, 0), (p, p), (p, p))) if p else gy
        gcols = np.empty((B, c_out, k, k, H, W), dtype=gy.dtype)
        for ki in range(k):
            for kj in range(k):
                gcols[:, :, ki, kj] = gypad[:, :, ki : ki + s * H : s, kj : kj + s * W : s]
        gcols2 = gcols.reshape(B, c_out * k * k, H * W)
        x2 = x.reshape(B, c_in, H * W)
        self.w.grad += (
            np.matmul(x2, gcols2.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape).astype(self.w.grad.dtype)
        )
        if self.b is not None:
            self.b.grad += gy.sum(axis=(0, 2, 3)).astype(self.b.grad.dtype)
        gx = np.matmul(self.w.data.reshape(c_in, -1)[None], gcols2)
        return gx.reshape(B, c_in, H, W)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, pad=0, rng=None, bias=True):
        bound = 1.0 / math.sqrt(c_in * kernel)
        self.w = Param(rng.uniform(-bound, bound, size=(c_out, c_in, kernel)))
        self.b = Param(rng.uniform(-bound, bound, size=c_out)) if bias else None
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self._cache = None

    def forward(self, x):
        c_out, c_in, k = self.w.shape
        if x.ndim != 3 or x.shape[1] != c_in:
            raise ShapeError("conv1d", f"got {x.shape}, want (B, {c_in}, L)")
        B, _, L = x.shape
        s, p = self.stride, self.pad
        ol = _conv_out_len(L, k, s, p)
        if ol <= 0:
            raise ShapeError("conv1d", f"kernel {k} too large for input {x.shape}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        cols = np.empty((B, c_in, k, ol), dtype=x.dtype)
        for ki in range(k):
            cols[:, :, ki] = xp[:, :, ki : ki + s * ol : s]
        cols2 = cols.reshape(B, c_in * k, ol)
        y = np.matmul(self.w.data.reshape(c_out, -1)[None], cols2)
        if self.b is not None:
            y = y + self.b.data[None, :, None]
        self._cache = (x.shape, xp.shape, cols2)
        return y

    def backward(self, gy):
        x_shape, xp_shape, cols2 = self._cache
        B, c_in, L = x_shape
        c_out, _, k = self.w.shape
        s, p = self.stride, self.pad
        ol = gy.shape[2]
        self.w.grad += (
            np.matmul(gy, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape).astype(self.w.grad.dtype)
        )
        if self.b is not None:
            self.b.grad += gy.sum(axis=(0, 2)).astype(self.b.grad.dtype)
        gcols = np.matmul(self.w.data.reshape(c_out, -1).T[None], gy)
        gcols = gcols.reshape(B, c_in, k, ol)
        gxp = np.zeros(xp_shape, dtype=gy.dtype)
        for ki in range(k):
            gxp[:, :, ki : ki + s * ol : s] += gcols[:, :, ki]
        return gxp[:, :, p : p + L] if p else gxp


class ConvTranspose1d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, pad=0, rng=None, bias=True):
        bound = 1.0 / math.sqrt(c_in * kernel)
        self.w = Param(rng.uniform(-bound, bound, size=(c_in, c_out, kernel)))
        self.b = Param(rng.uniform(-bound, bound, size=c_out)) if bias else None
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self._x = None

    def forward(self, x):
        c_in, c_out, k = self.w.shape
        if x.ndim != 3 or x.shape[1] != c_in:
            raise ShapeError("conv_transpose1d", f"got {x.shape}, want (B, {c_in}, L)")
        B, _, L = x.shape
        s, p = self.stride, self.pad
        ol = (L - 1) * s + k - 2 * p
        if ol <= 0:
            raise ShapeError("conv_transpose1d", f"degenerate output for input {x.shape}")
        cols = np.matmul(self.w.data.reshape(c_in, -1).T[None], x)
        cols = cols.reshape(B, c_out, k, L)
        ypad = np.zeros((B, c_out, ol + 2 * p), dtype=x.dtype)
        for ki in range(k):
            ypad[:, :, ki : ki + s * L : s] += cols[:, :, ki]
        y = ypad[:, :, p : p + ol] if p else ypad
        if self.b is not None:
            y = y + self.b.data[None, :, None]
        self._x = x
        return y

    def backward(self, gy):
        x = self._x
        B, c_in, L = x.shape
        _, c_out, k = self.w.shape
        s, p = self.stride, self.pad
        gypad = np.pad(gy, ((0, 0), (0, 0), (p, p))) if p else gy
        gcols = np.empty((B, c_out, k, L), dtype=gy.dtype)
        for ki in range(k):
            gcols[:, :, ki] = gypad[:, :, ki : ki + s * L : s]
        gcols2 = gcols.reshape(B, c_out * k, L)
        self.w.grad += (
            np.matmul(x, gcols2.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape).astype(self.w.grad.dtype)
        )
        if self.b is not None:
            self.b.grad += gy.sum(axis=(0, 2)).astype(self.b.grad.dtype)
        gx = np.matmul(self.w.data.reshape(c_in, -1)[None], gcols2)
        return gx


class GroupNorm(Module):
    def __init__(self, groups: int, channels: int, eps: float = 1e-5):
        if channels % groups:
            raise ShapeError("group_norm", f"{channels} channels not divisible by {groups} groups")
        self.gamma = Param(np.ones(channels))
        self.beta = Param(np.zeros(channels))
        self.groups, self.channels, self.eps = groups, channels, eps
        self._cache = None

    def _chan_shape(self, ndim):
        return (1, self.channels) + (1,) * (ndim - 2)

    def forward(self, x):
        if x.ndim < 2 or x.shape[1] != self.channels:
            raise ShapeError("group_norm", f"got {x.shape}, want (B, {self.channels}, ...)")
        B = x.shape[0]
        xg = x.reshape(B, self.groups, -1)
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (xg - mu) * inv
        self._cache = (x.shape, xhat, inv)
        cs = self._chan_shape(x.ndim)
        return xhat.reshape(x.shape) * self.gamma.data.reshape(cs) + self.beta.data.reshape(cs)

    def backward(self, gy):
        x_shape, xhat, inv = self._cache
        B = x_shape[0]
        axes = (0,) + tuple(range(2, len(x_shape)))
        xhat_full = xhat.reshape(x_shape)
        self.gamma.grad += (gy * xhat_full).sum(axis=axes).astype(self.gamma.grad.dtype)
        self.beta.grad += gy.sum(axis=axes).astype(self.beta.grad.dtype)
        g = (gy * self.gamma.data.reshape(self._chan_shape(len(x_shape)))).reshape(B, self.groups, -1)
        gx = inv * (g - g.mean(axis=2, keepdims=True) - xhat * (g * xhat).mean(axis=2, keepdims=True))
        return gx.reshape(x_shape)


class ReLU(Module):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, gy):
        return gy * self._mask


class SiLU(Module):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        sig = 1.0 / (1.0 + np.exp(-x))
        self._cache = (x, sig)
        return x * sig

    def backward(self, gy):
        x, sig = self._cache
        return gy * sig * (1.0 + x * (1.0 - sig))


class FiLM(Module):
    """Per-channel affine modulation: y = x * scale + shift, with scale and
    shift of shape (B, C) broadcast over the spatial axes."""

    def __init__(self):
        self._cache = None

    def _expand(self, v, ndim):
        return v.reshape(v.shape + (1,) * (ndim - 2))

    def forward(self, x, scale, shift):
        if scale.shape != x.shape[:2] or shift.shape != x.shape[:2]:
            raise ShapeError("film", f"scale/shift {scale.shape} do not match input {x.shape}")
        self._cache = (x, scale)
        return x * self._expand(scale, x.ndim) + self._expand(shift, x.ndim)

    def backward(self, gy):
        x, scale = self._cache
        axes = tuple(range(2, x.ndim))
        gscale = (gy * x).sum(axis=axes)
        gshift = gy.sum(axis=axes)
        gx = gy * self._expand(scale, x.ndim)
        return gx, gscale, gshift


class SinusoidalEmbedding(Module):
    """Transformer-style timestep embedding of a scalar per batch element."""

    def __init__(self, dim: int):
        if dim % 2:
            raise ShapeError("sinusoidal_embedding", f"dim {dim} must be even")
        half = dim // 2
        self.freqs = np.exp(-math.log(10000.0) * np.arange(half) / (half - 1)).astype(np.float32)
        self.dim = dim
        self._cache = None

    def forward(self, t):
        if t.ndim != 1:
            raise ShapeError("sinusoidal_embedding", f"got {t.shape}, want (B,)")
        ang = t[:, None] * self.freqs[None, :]
        self._cache = ang
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def backward(self, gy):
        ang = self._cache
        half = self.dim // 2
        g_sin, g_cos = gy[:, :half], gy[:, half:]
        return ((g_sin * np.cos(ang) - g_cos * np.sin(ang)) * self.freqs[None, :]).sum(axis=1)
