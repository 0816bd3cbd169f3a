"""Core diffusion-process math over residual fields.

All functions are pure: they take a schedule plus arrays and return new
arrays, preserving the input dtype (coefficients are applied as Python
floats so float32 fields stay float32). Residual fields are
``(channels, height, width)`` arrays; batched leading dimensions work
unchanged since everything is elementwise.
"""
from __future__ import annotations

import math

import numpy as np

from .schedule import NoiseSchedule, posterior_coefficients


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def forward_sample(
    schedule: NoiseSchedule, r0: np.ndarray, t: int, eps: np.ndarray
) -> np.ndarray:
    """Sample the forward marginal: ``sqrt(ab_t) r0 + sqrt(1 - ab_t) eps``."""
    _check_shapes(r0, eps, "forward_sample")
    ab = schedule.alpha_bar_at(schedule._check_t(t))
    return math.sqrt(ab) * r0 + math.sqrt(1.0 - ab) * eps


def posterior_mean(
    schedule: NoiseSchedule, r_t: np.ndarray, r0: np.ndarray, t: int
) -> np.ndarray:
    """Mean of q(r_{t-1} | r_t, r0): ``eta_t r0 + xi_t r_t``."""
    _check_shapes(r_t, r0, "posterior_mean")
    eta, xi = posterior_coefficients(schedule, t)
    return eta * r0 + xi * r_t


def implied_noise(
    schedule: NoiseSchedule, r_t: np.ndarray, r0_pred: np.ndarray, t: int
) -> np.ndarray:
    """Noise that would have produced ``r_t`` from ``r0_pred`` at step t.

    Inverts the forward marginal: ``(r_t - sqrt(ab_t) r0') / sqrt(1 - ab_t)``.
    """
    _check_shapes(r_t, r0_pred, "implied_noise")
    t = int(t)
    if t < 1:
        raise ValueError("implied noise is undefined at t=0")
    ab = schedule.alpha_bar_at(schedule._check_t(t))
    return (r_t - math.sqrt(ab) * r0_pred) / math.sqrt(1.0 - ab)


def ddim_sigma(schedule: NoiseSchedule, t: int, t_prev: int, eta_ddim: float) -> float:
    """Stochasticity scale of the DDIM update from t to t_prev."""
    ab_t = schedule.alpha_bar_at(t)
    ab_prev = schedule.alpha_bar_at(t_prev)
    if ab_prev <= ab_t:
        raise ValueError("ddim step requires alpha_bar to increase toward t_prev")
    return (
        eta_ddim
        * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
        * math.sqrt(1.0 - ab_t / ab_prev)
    )


def ddim_step(
    schedule: NoiseSchedule,
    r_t: np.ndarray,
    r0_pred: np.ndarray,
    t: int,
    t_prev: int,
    eta_ddim: float = 0.0,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """One (possibly strided) DDIM update from timestep t to t_prev.

    ``r_{t_prev} = sqrt(ab_prev) r0' + sqrt(1 - ab_prev - sigma^2) eps' + sigma z``
    with ``eps'`` the implied noise and ``sigma`` scaled by ``eta_ddim``
    (0 = deterministic). ``t_prev = 0`` returns ``r0'`` exactly.
    """
    _check_shapes(r_t, r0_pred, "ddim_step")
    t = schedule._check_t(t)
    t_prev = int(t_prev)
    if not 0 <= t_prev < t:
        raise ValueError(f"t_prev must lie in [0, {t - 1}], got {t_prev}")
    if not 0.0 <= eta_ddim <= 1.0:
        raise ValueError("eta_ddim must lie in [0, 1]")

    ab_prev = schedule.alpha_bar_at(t_prev)
    sigma = ddim_sigma(schedule, t, t_prev, eta_ddim)
    eps = implied_noise(schedule, r_t, r0_pred, t)
    # guards rounding at large strides where 1 - ab_prev - sigma^2 ~ 0
    dir_coef = math.sqrt(max(1.0 - ab_prev - sigma * sigma, 0.0))
    out = math.sqrt(ab_prev) * r0_pred + dir_coef * eps
    if eta_ddim > 0.0:
        if z is None:
            raise ValueError("eta_ddim > 0 requires a noise sample z")
        _check_shapes(r_t, z, "ddim_step noise")
        out = out + sigma * z
    return out
