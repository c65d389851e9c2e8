"""Minimal hand-rolled neural-network toolkit on NumPy.

Every layer exposes an explicit forward and backward; losses return the
analytic gradient alongside the value.  Convolutions go through im2col and a
BLAS matmul, which is the fast path for grids this small.  All activations
are smooth (tanh/sigmoid) so central-difference gradient checks are sharp.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalFailureError


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, scale, size=shape)


def tanh_forward(x):
    return np.tanh(x)


def tanh_backward(y, dy):
    """Gradient through tanh given its output ``y``."""
    return dy * (1.0 - y * y)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def affine_forward(x, w, b):
    return x @ w + b


def affine_backward(x, w, dy):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def im2col3x3(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B*H*W, 9*C) patches for a same-padded 3x3 kernel."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((b, h, w, 9 * c), dtype=x.dtype)
    k = 0
    for dv in (0, 1, 2):
        for du in (0, 1, 2):
            cols[..., k * c : (k + 1) * c] = xp[:, dv : dv + h, du : du + w, :]
            k += 1
    return cols.reshape(b * h * w, 9 * c)


def col2im3x3(dcols: np.ndarray, shape) -> np.ndarray:
    """Adjoint of :func:`im2col3x3`."""
    b, h, w, c = shape
    dc = dcols.reshape(b, h, w, 9 * c)
    dxp = np.zeros((b, h + 2, w + 2, c), dtype=dcols.dtype)
    k = 0
    for dv in (0, 1, 2):
        for du in (0, 1, 2):
            dxp[:, dv : dv + h, du : du + w, :] += dc[..., k * c : (k + 1) * c]
            k += 1
    return dxp[:, 1 : 1 + h, 1 : 1 + w, :]


def conv3x3_forward(x, w, b):
    """x (B,H,W,Cin), w (9*Cin, Cout), b (Cout,) -> ((B,H,W,Cout), cols).

    The patch matrix is returned so the backward pass can reuse it.
    """
    bsz, h, wd, _ = x.shape
    cols = im2col3x3(x)
    y = cols @ w + b
    return y.reshape(bsz, h, wd, -1), cols


def conv3x3_backward(cols, x_shape, w, dy):
    bsz, h, wd, c = x_shape
    dy_flat = dy.reshape(bsz * h * wd, -1)
    dw = cols.T @ dy_flat
    db = dy_flat.sum(axis=0)
    dx = col2im3x3(dy_flat @ w.T, x_shape)
    return dx, dw, db


def conv1x1_forward(x, w, b):
    return x @ w + b


def conv1x1_backward(x, w, dy):
    dx = dy @ w.T
    dw = np.tensordot(x, dy, axes=((0, 1, 2), (0, 1, 2)))
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


def avgpool2_forward(x):
    b, h, w, c = x.shape
    return x.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


def avgpool2_backward(dy, in_shape):
    b, h, w, c = in_shape
    up = np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2)
    return up * 0.25


def upsample2_forward(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(dy):
    b, h, w, c = dy.shape
    return dy.reshape(b, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy; returns (loss, dloss/dlogits)."""
    z = logits
    # log(1 + exp(-|z|)) is the stable softplus core
    loss_map = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    loss = float(loss_map.sum() / n)
    grad = (sigmoid(z) - targets) / n
    if not np.isfinite(loss):
        raise NumericalFailureError("non-finite loss")
    return loss, grad


class Adam:
    """Adaptive-moment gradient descent over a dict of parameter arrays."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def gradient_check(
    loss_fn,
    params: dict[str, np.ndarray],
    samples_per_block: int = 3,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` returns (loss, grads) at the current parameter values;
    a few entries of every parameter block are perturbed in place.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_fn()
    worst = 0.0
    for name, block in params.items():
        flat = block.reshape(-1)
        count = min(samples_per_block, flat.size)
        for idx in rng.choice(flat.size, size=count, replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            up, _ = loss_fn()
            flat[idx] = orig - h
            down, _ = loss_fn()
            flat[idx] = orig
            numeric = (up - down) / (2.0 * h)
            analytic = grads[name].reshape(-1)[idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst
