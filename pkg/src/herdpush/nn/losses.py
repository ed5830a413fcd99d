"""Scalar losses returning (value, gradient-wrt-prediction)."""

from __future__ import annotations

import numpy as np

from .layers import ShapeError


def _check(op, pred, target):
    if pred.shape != target.shape:
        raise ShapeError(op, f"pred {pred.shape} vs target {target.shape}")


def smooth_l1(pred: np.ndarray, target: np.ndarray):
    """Huber loss with transition point 1.0, averaged over all elements."""
    _check("smooth_l1", pred, target)
    delta = pred - target
    a = np.abs(delta)
    quad = a <= 1.0
    loss = float(np.mean(np.where(quad, 0.5 * delta * delta, a - 0.5)))
    grad = np.where(quad, delta, np.sign(delta)) / delta.size
    return loss, grad.astype(pred.dtype)


def mse(pred: np.ndarray, target: np.ndarray):
    _check("mse", pred, target)
    delta = pred - target
    loss = float(np.mean(delta * delta))
    grad = (2.0 / delta.size) * delta
    return loss, grad.astype(pred.dtype)
