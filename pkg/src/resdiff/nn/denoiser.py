"""Conditional residual predictor: a small two-level U-Net.

The network sees the noisy residual and the base reconstruction
concatenated channelwise, plus a sinusoidal embedding of the timestep
projected into every block. The output head is zero-initialized, so an
untrained model predicts the zero residual and enhancement starts exactly
from the base reconstruction.

Parameters live in a flat ``name -> array`` dict. The public interface is
channels-first ``(B, 3, H, W)``; internally everything runs channels-last
for contiguous convolution GEMMs. ``forward`` returns the prediction plus
the cache consumed by ``backward``; :func:`predict` is pure and
thread-safe on a shared parameter dict.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers

BLOCKS = ("enc1", "enc2", "mid", "dec2", "dec1")


@dataclass(frozen=True)
class DenoiserConfig:
    width: int = 32
    temb_dim: int = 64
    sin_dim: int = 32
    groups: int = 8
    cond_channels: int = 3
    data_channels: int = 3

    def __post_init__(self):
        if self.width % self.groups != 0:
            raise ValueError("width must be a multiple of the group count")
        if self.sin_dim % 2 != 0:
            raise ValueError("sinusoidal feature dim must be even")

    def block_channels(self, name: str) -> tuple[int, int]:
        w = self.width
        cin = self.data_channels + self.cond_channels
        return {
            "enc1": (cin, w),
            "enc2": (w, 2 * w),
            "mid": (2 * w, 2 * w),
            "dec2": (4 * w, w),
            "dec1": (2 * w, w),
        }[name]

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "temb_dim": self.temb_dim,
            "sin_dim": self.sin_dim,
            "groups": self.groups,
            "cond_channels": self.cond_channels,
            "data_channels": self.data_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**{k: int(v) for k, v in d.items()})


def init_model(
    config: DenoiserConfig, seed: int = 0, dtype=np.float32
) -> dict[str, np.ndarray]:
    """He-normal convolutions, unit norms, zero output head."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}

    def normal(shape, fan_in):
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)

    d = config.temb_dim
    params["time.w1"] = normal((config.sin_dim, d), config.sin_dim)
    params["time.b1"] = np.zeros(d, dtype=dtype)
    params["time.w2"] = normal((d, d), d)
    params["time.b2"] = np.zeros(d, dtype=dtype)

    for name in BLOCKS:
        cin, cout = config.block_channels(name)
        params[f"{name}.conv1.w"] = normal((cin * 9, cout), cin * 9)
        params[f"{name}.conv1.b"] = np.zeros(cout, dtype=dtype)
        params[f"{name}.tproj.w"] = normal((d, cout), d)
        params[f"{name}.tproj.b"] = np.zeros(cout, dtype=dtype)
        params[f"{name}.gn1.g"] = np.ones(cout, dtype=dtype)
        params[f"{name}.gn1.b"] = np.zeros(cout, dtype=dtype)
        params[f"{name}.conv2.w"] = normal((cout * 9, cout), cout * 9)
        params[f"{name}.conv2.b"] = np.zeros(cout, dtype=dtype)
        params[f"{name}.gn2.g"] = np.ones(cout, dtype=dtype)
        params[f"{name}.gn2.b"] = np.zeros(cout, dtype=dtype)

    params["head.w"] = np.zeros((config.width, config.data_channels), dtype=dtype)
    params["head.b"] = np.zeros(config.data_channels, dtype=dtype)
    return params


def _block_forward(params, name, x, temb, groups):
    h, c_conv1 = layers.conv3x3_forward(
        x, params[f"{name}.conv1.w"], params[f"{name}.conv1.b"]
    )
    h, c_gn1 = layers.groupnorm_forward(
        h, params[f"{name}.gn1.g"], params[f"{name}.gn1.b"], groups
    )
    # timestep bias lands after normalization so it is not washed out
    tb, c_tproj = layers.linear_forward(
        temb, params[f"{name}.tproj.w"], params[f"{name}.tproj.b"]
    )
    h += tb[:, None, None, :]
    h, c_s1 = layers.silu_forward(h)
    h, c_conv2 = layers.conv3x3_forward(
        h, params[f"{name}.conv2.w"], params[f"{name}.conv2.b"]
    )
    h, c_gn2 = layers.groupnorm_forward(
        h, params[f"{name}.gn2.g"], params[f"{name}.gn2.b"], groups
    )
    h, c_s2 = layers.silu_forward(h)
    return h, (c_conv1, c_tproj, c_gn1, c_s1, c_conv2, c_gn2, c_s2)


def _block_backward(params, name, cache, dout, grads):
    c_conv1, c_tproj, c_gn1, c_s1, c_conv2, c_gn2, c_s2 = cache
    dh = layers.silu_backward(dout, c_s2)
    dh, dg, db = layers.groupnorm_backward(dh, c_gn2)
    grads[f"{name}.gn2.g"] += dg
    grads[f"{name}.gn2.b"] += db
    dh, dw, db = layers.conv3x3_backward(dh, c_conv2)
    grads[f"{name}.conv2.w"] += dw
    grads[f"{name}.conv2.b"] += db
    dh = layers.silu_backward(dh, c_s1)
    dtb = dh.sum(axis=(1, 2))
    dtemb, dw, db = layers.linear_backward(dtb, c_tproj)
    grads[f"{name}.tproj.w"] += dw
    grads[f"{name}.tproj.b"] += db
    dh, dg, db = layers.groupnorm_backward(dh, c_gn1)
    grads[f"{name}.gn1.g"] += dg
    grads[f"{name}.gn1.b"] += db
    dx, dw, db = layers.conv3x3_backward(dh, c_conv1)
    grads[f"{name}.conv1.w"] += dw
    grads[f"{name}.conv1.b"] += db
    return dx, dtemb


def forward(params, config: DenoiserConfig, r_t, x_tilde, t):
    """Batched prediction with cache: (B,3,H,W) x2 + (B,) -> (B,3,H,W)."""
    if r_t.shape != x_tilde.shape:
        raise ValueError(f"shape mismatch {r_t.shape} vs {x_tilde.shape}")
    if r_t.shape[-1] % 4 or r_t.shape[-2] % 4:
        raise ValueError("spatial dims must be multiples of 4 (two downsamplings)")
    dtype = params["head.w"].dtype
    g = config.groups

    feats = layers.time_features(t, config.sin_dim, dtype=dtype)
    h, c_l1 = layers.linear_forward(feats, params["time.w1"], params["time.b1"])
    h, c_s = layers.silu_forward(h)
    temb, c_l2 = layers.linear_forward(h, params["time.w2"], params["time.b2"])

    # to channels-last
    x = np.concatenate(
        [
            np.moveaxis(r_t, 1, -1).astype(dtype, copy=False),
            np.moveaxis(x_tilde, 1, -1).astype(dtype, copy=False),
        ],
        axis=-1,
    )
    e1, c_e1 = _block_forward(params, "enc1", x, temb, g)
    p1, s_p1 = layers.avgpool2_forward(e1)
    e2, c_e2 = _block_forward(params, "enc2", p1, temb, g)
    p2, s_p2 = layers.avgpool2_forward(e2)
    m, c_m = _block_forward(params, "mid", p2, temb, g)
    u2, s_u2 = layers.upsample2_forward(m)
    d2, c_d2 = _block_forward(
        params, "dec2", np.concatenate([u2, e2], axis=-1), temb, g
    )
    u1, s_u1 = layers.upsample2_forward(d2)
    d1, c_d1 = _block_forward(
        params, "dec1", np.concatenate([u1, e1], axis=-1), temb, g
    )
    out, c_head = layers.conv1x1_forward(d1, params["head.w"], params["head.b"])

    cache = (
        c_l1, c_s, c_l2, c_e1, s_p1, c_e2, s_p2, c_m, s_u2, c_d2, s_u1, c_d1, c_head,
        e1.shape[-1], e2.shape[-1],
    )
    return np.moveaxis(out, -1, 1), cache


def backward(params, config: DenoiserConfig, cache, dout):
    """Gradient of every parameter given d(loss)/d(prediction), (B,3,H,W)."""
    (
        c_l1, c_s, c_l2, c_e1, s_p1, c_e2, s_p2, c_m, s_u2, c_d2, s_u1, c_d1, c_head,
        ch_e1, ch_e2,
    ) = cache
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dout = np.ascontiguousarray(np.moveaxis(dout, 1, -1))

    dd1, dw, db = layers.conv1x1_backward(dout, c_head)
    grads["head.w"] += dw
    grads["head.b"] += db

    dcat1, dtemb = _block_backward(params, "dec1", c_d1, dd1, grads)
    du1, de1_skip = dcat1[..., :-ch_e1], dcat1[..., -ch_e1:]
    dd2 = layers.upsample2_backward(du1, s_u1)
    dcat2, dt = _block_backward(params, "dec2", c_d2, dd2, grads)
    dtemb += dt
    du2, de2_skip = dcat2[..., :-ch_e2], dcat2[..., -ch_e2:]
    dm = layers.upsample2_backward(du2, s_u2)
    dp2, dt = _block_backward(params, "mid", c_m, dm, grads)
    dtemb += dt
    de2 = layers.avgpool2_backward(dp2, s_p2) + de2_skip
    dp1, dt = _block_backward(params, "enc2", c_e2, de2, grads)
    dtemb += dt
    de1 = layers.avgpool2_backward(dp1, s_p1) + de1_skip
    _, dt = _block_backward(params, "enc1", c_e1, de1, grads)
    dtemb += dt

    dh, dw, db = layers.linear_backward(dtemb, c_l2)
    grads["time.w2"] += dw
    grads["time.b2"] += db
    dh = layers.silu_backward(dh, c_s)
    _, dw, db = layers.linear_backward(dh, c_l1)
    grads["time.w1"] += dw
    grads["time.b1"] += db
    return grads


def predict(params, config: DenoiserConfig, r_t, x_tilde, t):
    """Pure inference; accepts a single (3, H, W) field or a batch."""
    r_t = np.asarray(r_t)
    x_tilde = np.asarray(x_tilde)
    single = r_t.ndim == 3
    if single:
        r_t = r_t[None]
        x_tilde = x_tilde[None]
        t = np.array([t])
    out, _ = forward(params, config, r_t, x_tilde, np.asarray(t))
    return out[0] if single else out


def parameter_count(params) -> int:
    return int(sum(v.size for v in params.values()))
