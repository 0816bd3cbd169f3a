"""Noise schedules and derived per-timestep quantities.

A schedule holds ``beta[t]``, ``alpha[t] = 1 - beta[t]`` and the running
product ``alpha_bar[t]`` for timesteps ``t = 1..T`` (``alpha_bar`` at t=0 is
1 by convention and never stored). All arrays are float64; schedules are
immutable after construction and safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError

BETA_CLAMP_LO = 1e-8
BETA_CLAMP_HI = 0.999
COSINE_OFFSET = 0.008

# The three named shapes of the parameterized sigmoid family.
SIGMOID_VARIANTS = {
    "early_decay": (5.0, 0.3),
    "late_decay": (1.0, 3.0),
    "smooth_late_decay": (6.0, 3.0),
}


@dataclass(frozen=True)
class ScheduleSpec:
    """Serializable description of a noise schedule.

    ``beta1``/``betaT`` apply to the linear kind, ``L``/``p`` to the
    sigmoid family; the cosine kind has no parameters.
    """

    kind: str
    T: int
    beta1: float = 1e-4
    betaT: float = 0.02
    L: float = 1.0
    p: float = 3.0

    def __post_init__(self):
        if self.kind not in ("linear", "cosine", "sigmoid_family"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.T < 2:
            raise ValueError("schedule needs T >= 2")
        if self.kind == "linear" and not (0.0 < self.beta1 <= self.betaT < 1.0):
            raise ValueError("linear schedule requires 0 < beta1 <= betaT < 1")
        if self.kind == "sigmoid_family" and (self.L <= 0.0 or self.p <= 0.0):
            raise ValueError("sigmoid family requires L > 0 and p > 0")

    def build(self) -> "NoiseSchedule":
        if self.kind == "linear":
            return make_linear(self.T, self.beta1, self.betaT)
        if self.kind == "cosine":
            return make_cosine(self.T)
        return make_sigmoid_family(self.T, self.L, self.p)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.T,
            "beta1": self.beta1,
            "betaT": self.betaT,
            "L": self.L,
            "p": self.p,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSpec":
        return cls(
            kind=d["kind"],
            T=int(d["T"]),
            beta1=float(d.get("beta1", 1e-4)),
            betaT=float(d.get("betaT", 0.02)),
            L=float(d.get("L", 1.0)),
            p=float(d.get("p", 3.0)),
        )


class NoiseSchedule:
    """Per-timestep diffusion quantities for ``t = 1..T``."""

    __slots__ = ("T", "beta", "alpha", "alpha_bar", "spec")

    def __init__(self, beta: np.ndarray, spec: ScheduleSpec | None = None):
        beta = np.asarray(beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 2:
            raise ConstructionError("beta must be a 1-D array with T >= 2")
        if not np.all((beta > 0.0) & (beta < 1.0)):
            raise ConstructionError("every beta must lie in (0, 1)")
        self.T = int(beta.size)
        self.beta = beta
        self.alpha = 1.0 - beta
        self.alpha_bar = np.cumprod(self.alpha)
        self.spec = spec
        # cumprod of values in (0,1) is strictly decreasing by construction
        self.beta.flags.writeable = False
        self.alpha.flags.writeable = False
        self.alpha_bar.flags.writeable = False

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return t

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check_t(t) - 1])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._check_t(t) - 1])

    def alpha_bar_at(self, t: int) -> float:
        """``alpha_bar`` with the t=0 convention: alpha_bar_at(0) == 1."""
        t = int(t)
        if t == 0:
            return 1.0
        return float(self.alpha_bar[self._check_t(t) - 1])


def make_linear(T: int, beta1: float = 1e-4, betaT: float = 0.02) -> NoiseSchedule:
    """Linear interpolation of beta between ``beta1`` (t=1) and ``betaT`` (t=T)."""
    if T < 2:
        raise ValueError("linear schedule needs T >= 2")
    if not (0.0 < beta1 <= betaT < 1.0):
        raise ValueError("linear schedule requires 0 < beta1 <= betaT < 1")
    t = np.arange(1, T + 1, dtype=np.float64)
    beta = (T - t) / (T - 1) * beta1 + (t - 1) / (T - 1) * betaT
    # the interpolation reproduces the endpoints up to rounding; force them
    beta[0] = beta1
    beta[-1] = betaT
    return NoiseSchedule(beta, ScheduleSpec("linear", T, beta1=beta1, betaT=betaT))


def make_cosine(T: int) -> NoiseSchedule:
    """Squared-cosine ``alpha_bar`` with offset 0.008 and beta capped at 0.999."""
    if T < 2:
        raise ValueError("cosine schedule needs T >= 2")
    i = np.arange(T + 1, dtype=np.float64)
    f = np.cos((i / T + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * math.pi / 2.0) ** 2
    abar = f / f[0]
    beta = np.clip(1.0 - abar[1:] / abar[:-1], BETA_CLAMP_LO, BETA_CLAMP_HI)
    return NoiseSchedule(beta, ScheduleSpec("cosine", T))


def sigmoid_family_alpha_bar(t: np.ndarray | float, L: float, p: float):
    """Continuous ``alpha_bar`` of the (L, p) sigmoid family on t in [0, 1].

    A logistic decay ``1 / (1 + exp(2L t^p - L))`` rescaled so the endpoints
    are exactly 1 at t=0 and 0 at t=1.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("generalized time must lie in [0, 1]")

    def raw(u):
        z = 2.0 * L * np.power(u, p) - L
        # numerically stable logistic
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
        out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
        return out

    f = raw(np.atleast_1d(t))
    f0 = raw(np.array([0.0]))[0]
    f1 = raw(np.array([1.0]))[0]
    res = (f - f1) / (f0 - f1)
    return res if res.size > 1 else float(res[0])


def make_sigmoid_family(T: int, L: float, p: float) -> NoiseSchedule:
    """Discretize the (L, p) sigmoid-family ``alpha_bar`` onto T steps.

    ``alpha_bar`` is evaluated on the grid ``i/T`` for ``i = 0..T``, betas are
    recovered as ``1 - abar[i]/abar[i-1]`` and clamped into
    ``[BETA_CLAMP_LO, BETA_CLAMP_HI]`` to avoid blow-ups where alpha_bar
    reaches 0. The stored ``alpha_bar`` is the cumprod of the clamped betas.
    """
    if T < 2:
        raise ValueError("sigmoid family needs T >= 2")
    if L <= 0.0 or p <= 0.0:
        raise ValueError("sigmoid family requires L > 0 and p > 0")
    grid = np.arange(T + 1, dtype=np.float64) / T
    abar = np.asarray(sigmoid_family_alpha_bar(grid, L, p))
    ratios = np.divide(
        abar[1:], abar[:-1], out=np.zeros(T, dtype=np.float64), where=abar[:-1] > 0.0
    )
    beta = 1.0 - ratios
    if np.any(beta < 0.0):
        raise ConstructionError(
            f"sigmoid family (L={L}, p={p}) is not monotone after discretization"
        )
    beta = np.clip(beta, BETA_CLAMP_LO, BETA_CLAMP_HI)
    return NoiseSchedule(beta, ScheduleSpec("sigmoid_family", T, L=L, p=p))


def make_schedule(spec: ScheduleSpec) -> NoiseSchedule:
    return spec.build()


def posterior_coefficients(schedule: NoiseSchedule, t: int) -> tuple[float, float]:
    """Coefficients (eta_t, xi_t) of the forward-posterior mean.

    The mean of q(r_{t-1} | r_t, r_0) is ``eta_t * r_0 + xi_t * r_t`` with

        eta_t = sqrt(alpha_bar_{t-1}) * beta_t / (1 - alpha_bar_t)
        xi_t  = sqrt(alpha_t) * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
    """
    t = int(t)
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside [1, {schedule.T}]")
    ab_t = schedule.alpha_bar_at(t)
    ab_prev = schedule.alpha_bar_at(t - 1)
    beta_t = schedule.beta_at(t)
    alpha_t = schedule.alpha_at(t)
    denom = 1.0 - ab_t
    eta = math.sqrt(ab_prev) * beta_t / denom
    xi = math.sqrt(alpha_t) * (1.0 - ab_prev) / denom
    return eta, xi


def posterior_variance(schedule: NoiseSchedule, t: int) -> float:
    """Variance of q(r_{t-1} | r_t, r_0): ``(1 - ab_{t-1}) / (1 - ab_t) * beta_t``."""
    t = int(t)
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside [1, {schedule.T}]")
    ab_t = schedule.alpha_bar_at(t)
    ab_prev = schedule.alpha_bar_at(t - 1)
    return (1.0 - ab_prev) / (1.0 - ab_t) * schedule.beta_at(t)


def loss_weight(schedule: NoiseSchedule, t: int, mode: str = "unit") -> float:
    """Per-timestep training-loss weight.

    ``unit`` returns 1 (the reweighting actually used for training);
    ``theoretical`` returns ``eta_t^2 / (2 sigma_t^2)`` with ``sigma_t^2``
    the forward-posterior variance. That variance is 0 at t=1, so there it
    is replaced by the t=2 value to keep the weight finite.
    """
    if mode == "unit":
        schedule._check_t(t)
        return 1.0
    if mode != "theoretical":
        raise ValueError(f"unknown weight mode {mode!r}")
    eta, _ = posterior_coefficients(schedule, t)
    var = posterior_variance(schedule, max(int(t), 2))
    return eta * eta / (2.0 * var)


@dataclass(frozen=True)
class TimestepPlan:
    """Strictly decreasing timesteps used for (possibly respaced) sampling.

    ``prev(i)`` is the destination timestep of the update taken at plan
    position ``i``; the last position maps to 0, i.e. data.
    """

    steps: tuple[int, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("empty timestep plan")
        if any(s2 >= s1 for s1, s2 in zip(self.steps, self.steps[1:])):
            raise ValueError("plan timesteps must be strictly decreasing")
        if self.steps[-1] < 1:
            raise ValueError("plan must end at a timestep >= 1")

    def __len__(self) -> int:
        return len(self.steps)

    def prev(self, i: int) -> int:
        return self.steps[i + 1] if i + 1 < len(self.steps) else 0


def respace(T: int, n_steps: int) -> TimestepPlan:
    """Select ``n_steps`` evenly spaced timesteps out of ``1..T``.

    Uses the floating stride ``T / n_steps``; index k (1-based) maps to
    ``round(k * stride)``, so the plan always contains T and ends at a step
    whose predecessor is 0.
    """
    if n_steps < 1 or n_steps > T:
        raise ValueError(f"n_steps must lie in [1, {T}], got {n_steps}")
    stride = T / n_steps
    idx = np.rint((np.arange(1, n_steps + 1, dtype=np.float64)) * stride).astype(int)
    idx = np.unique(np.clip(idx, 1, T))
    return TimestepPlan(tuple(int(i) for i in idx[::-1]))
