"""Training loss: weighted residual MSE plus a gradient-field proxy term.

The perceptual term is a declared stand-in for a learned perceptual
distance: the mean squared difference of horizontal and vertical
finite-difference fields between the original image and the enhanced
reconstruction. Because ``x_hat - x == pred - r0``, both loss terms are
functions of the same error field, which keeps the backward pass simple.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import denoiser


@dataclass
class TrainBatch:
    """One training step's inputs; arrays are (B, 3, H, W), t and w are (B,)."""

    r0: np.ndarray
    r_t: np.ndarray
    x_tilde: np.ndarray
    t: np.ndarray
    w: np.ndarray


def _diff_h(x):
    return x[..., :, 1:] - x[..., :, :-1]


def _diff_v(x):
    return x[..., 1:, :] - x[..., :-1, :]


def perceptual_proxy(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Gradient-field MSE between two images (or batches)."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return float(
        np.mean((_diff_h(x) - _diff_h(x_hat)) ** 2)
        + np.mean((_diff_v(x) - _diff_v(x_hat)) ** 2)
    )


def _proxy_terms_and_grad(err: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-example proxy values and d(proxy)/d(err) for err = pred - r0."""
    b = err.shape[0]
    eh = _diff_h(err)
    ev = _diff_v(err)
    nh = eh[0].size
    nv = ev[0].size
    vals = np.zeros(b, dtype=np.float64)
    grad = np.zeros_like(err)
    if nh:
        vals += eh.reshape(b, -1).astype(np.float64).__pow__(2).mean(axis=1)
        g = (2.0 / nh) * eh
        grad[..., :, 1:] += g
        grad[..., :, :-1] -= g
    if nv:
        vals += ev.reshape(b, -1).astype(np.float64).__pow__(2).mean(axis=1)
        g = (2.0 / nv) * ev
        grad[..., 1:, :] += g
        grad[..., :-1, :] -= g
    return vals, grad


def loss_and_grads(
    params,
    config: denoiser.DenoiserConfig,
    batch: TrainBatch,
    lam_perceptual: float = 0.001,
):
    """Loss, parameter gradients and the per-term breakdown for one batch."""
    loss, parts, err, cache = _loss_forward(params, config, batch, lam_perceptual)
    b = err.shape[0]
    n = err[0].size
    w_col = batch.w.astype(err.dtype)[:, None, None, None]
    dpred = (2.0 / (b * n)) * w_col * err
    if lam_perceptual != 0.0:
        _, dproxy = _proxy_terms_and_grad(err)
        dpred = dpred + (lam_perceptual / b) * dproxy
    grads = denoiser.backward(params, config, cache, dpred.astype(err.dtype))
    return loss, grads, parts


def loss_value(
    params,
    config: denoiser.DenoiserConfig,
    batch: TrainBatch,
    lam_perceptual: float = 0.001,
) -> float:
    """Forward-only loss (used by the finite-difference gradient check)."""
    loss, _, _, _ = _loss_forward(params, config, batch, lam_perceptual)
    return loss


def _loss_forward(params, config, batch, lam_perceptual):
    pred, cache = denoiser.forward(
        params, config, batch.r_t, batch.x_tilde, batch.t
    )
    err = pred - batch.r0.astype(pred.dtype, copy=False)
    b = err.shape[0]
    mse = err.reshape(b, -1).astype(np.float64).__pow__(2).mean(axis=1)
    mse_term = float(np.mean(batch.w * mse))
    if lam_perceptual != 0.0:
        proxy_vals, _ = _proxy_terms_and_grad(err)
        proxy_term = float(lam_perceptual * np.mean(proxy_vals))
    else:
        proxy_term = 0.0
    loss = mse_term + proxy_term
    parts = {"mse": mse_term, "proxy": proxy_term}
    return loss, parts, err, cache
