"""Differentiable layer primitives (numpy, manual backward passes).

Layers use channels-last (B, H, W, C) arrays internally: im2col and its
adjoint then copy contiguous channel runs and the convolution GEMM needs
no transposes. Every forward returns ``(out, cache)``; the matching
backward consumes the cache and the upstream gradient. Weight matrices
are stored (fan_in, fan_out).
"""
from __future__ import annotations

import numpy as np

GN_EPS = 1e-5


def im2col3(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B*H*W, 9*C) rows of 3x3 neighborhoods (pad 1)."""
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1 : h + 1, 1 : w + 1] = x
    cols = np.empty((b, h, w, 9 * c), dtype=x.dtype)
    k = 0
    for i in range(3):
        for j in range(3):
            cols[..., k * c : (k + 1) * c] = xp[:, i : i + h, j : j + w]
            k += 1
    return cols.reshape(b * h * w, 9 * c)


def col2im3(dcols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    """Adjoint of :func:`im2col3`: scatter-add rows back to image layout."""
    b, h, w, c = shape
    dxp = np.zeros((b, h + 2, w + 2, c), dtype=dcols.dtype)
    dc = dcols.reshape(b, h, w, 9 * c)
    k = 0
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + w] += dc[..., k * c : (k + 1) * c]
            k += 1
    return dxp[:, 1 : h + 1, 1 : w + 1]


def conv3x3_forward(x, w, bias):
    """x (B, H, W, Cin); w (9*Cin, Cout); bias (Cout,)."""
    b, h, wd, _ = x.shape
    cols = im2col3(x)
    y = cols @ w
    y += bias
    return y.reshape(b, h, wd, -1), (cols, w, x.shape)


def conv3x3_backward(dout, cache):
    cols, w, xshape = cache
    dy = dout.reshape(-1, dout.shape[-1])
    dw = cols.T @ dy
    dbias = dy.sum(axis=0)
    dx = col2im3(dy @ w.T, xshape)
    return dx, dw, dbias


def conv1x1_forward(x, w, bias):
    """w (Cin, Cout)."""
    y = x.reshape(-1, x.shape[-1]) @ w
    y += bias
    return y.reshape(*x.shape[:3], -1), (x, w)


def conv1x1_backward(dout, cache):
    x, w = cache
    dy = dout.reshape(-1, dout.shape[-1])
    xm = x.reshape(-1, x.shape[-1])
    dw = xm.T @ dy
    dbias = dy.sum(axis=0)
    dx = (dy @ w.T).reshape(x.shape)
    return dx, dw, dbias


def _group_expand(stat_g, cg):
    """(B, groups) group statistics -> (B, 1, 1, C) broadcastable."""
    return np.repeat(stat_g, cg, axis=1)[:, None, None, :]


def groupnorm_forward(x, gamma, beta, groups):
    # group statistics via per-channel sums: reductions stay contiguous
    b, h, w, c = x.shape
    cg = c // groups
    n = h * w * cg
    flat = x.reshape(b, h * w, c)
    s1 = flat.sum(axis=1).reshape(b, groups, cg).sum(axis=2)
    s2 = np.square(flat).sum(axis=1).reshape(b, groups, cg).sum(axis=2)
    mu = s1 / n
    var = s2 / n - np.square(mu)
    inv = 1.0 / np.sqrt(var + GN_EPS)
    xhat = (x - _group_expand(mu, cg)) * _group_expand(inv, cg)
    out = gamma * xhat + beta
    return out, (xhat, inv, gamma, x.shape, groups)


def groupnorm_backward(dout, cache):
    xhat, inv, gamma, xshape, groups = cache
    b, h, w, c = xshape
    cg = c // groups
    n = h * w * cg
    dgamma = (dout * xhat).sum(axis=(0, 1, 2))
    dbeta = dout.sum(axis=(0, 1, 2))
    dxhat = dout * gamma
    flat = dxhat.reshape(b, h * w, c)
    m1 = flat.sum(axis=1).reshape(b, groups, cg).sum(axis=2) / n
    m2 = (dxhat * xhat).reshape(b, h * w, c).sum(axis=1).reshape(
        b, groups, cg
    ).sum(axis=2) / n
    dx = _group_expand(inv, cg) * (
        dxhat - _group_expand(m1, cg) - xhat * _group_expand(m2, cg)
    )
    return dx, dgamma, dbeta


def silu_forward(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, (x, s)


def silu_backward(dout, cache):
    x, s = cache
    return dout * (s * (1.0 + x * (1.0 - s)))


def avgpool2_forward(x):
    b, h, w, c = x.shape
    out = x.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))
    return out, x.shape


def avgpool2_backward(dout, xshape):
    scaled = dout * 0.25
    return scaled.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_forward(x):
    return x.repeat(2, axis=1).repeat(2, axis=2), x.shape


def upsample2_backward(dout, xshape):
    b, h, w, c = xshape
    return dout.reshape(b, h, 2, w, 2, c).sum(axis=(2, 4))


def linear_forward(x, w, bias):
    """x (B, D_in); w (D_in, D_out)."""
    return x @ w + bias, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def time_features(t: np.ndarray, dim: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal features of integer timesteps; (B,) -> (B, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    ang = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)
