"""Binary cross-entropy and mean-squared-error losses."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError

BCE_EPS = 1e-7


def bce_loss(p, y):
    """Elementwise binary cross-entropy with probability clamping.

    p is clamped to [eps, 1-eps] so the loss stays finite for saturated
    sigmoids. Returns (loss, dLoss/dp), both shaped like the broadcast of
    the inputs.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p))
    return loss, grad


def mse_loss(xhat, x):
    """Mean squared error over all elements; grad is w.r.t. xhat."""
    xhat = np.asarray(xhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if xhat.shape != x.shape:
        raise ShapeMismatchError(f"mse shapes differ: {xhat.shape} vs {x.shape}")
    d = xhat - x
    loss = float(np.mean(d * d))
    grad = 2.0 * d / d.size
    return loss, grad
