"""Optimizers over named parameter lists, matching the usual conventions:
SGD folds weight decay into the gradient, AdamW decouples it."""

from __future__ import annotations

import math

import numpy as np


def zero_grads(params) -> None:
    for _name, p in params:
        p.grad[...] = 0.0


def clip_gradients(params, max_norm: float) -> float:
    """Rescale so the global L2 norm is <= max_norm; returns the pre-clip
    norm. Accumulates in float64 in fixed parameter order."""
    total = 0.0
    for _name, p in params:
        g = p.grad.astype(np.float64, copy=False)
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = np.float32(max_norm / norm)
        for _name, p in params:
            p.grad *= scale
    return norm


class SGD:
    def __init__(self, params, lr=0.01, momentum=0.9, weight_decay=1e-4):
        self.params = list(params)
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay
        self.velocity = [np.zeros_like(p.grad) for _n, p in self.params]

    def step(self) -> None:
        for (_name, p), v in zip(self.params, self.velocity):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= self.lr * v


class AdamW:
    def __init__(self, params, lr=1e-4, betas=(0.95, 0.999), eps=1e-8, weight_decay=1e-6):
        self.params = list(params)
        self.lr, self.eps, self.weight_decay = lr, eps, weight_decay
        self.beta1, self.beta2 = betas
        self.m = [np.zeros_like(p.grad) for _n, p in self.params]
        self.v = [np.zeros_like(p.grad) for _n, p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for (_name, p), m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
