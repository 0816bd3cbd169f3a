"""Denoiser training over codec residuals.

Each step samples one rate parameter for the whole batch, crops/flips
training images, runs the base codec's quantization round trip on the
crops to obtain conditioning reconstructions, and regresses the clean
residual from its noised version. The model is never conditioned on the
rate parameter itself; it must cope with the whole rate range.

All randomness flows from one generator seeded by the config, with a
fixed draw order per step (rate, image indices, crop offsets, flips,
timesteps, noise), so single-threaded runs are bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..codec import RateControl, quantize_scale, reconstruct, sample_lambda
from ..errors import TrainingError
from ..schedule import NoiseSchedule, loss_weight
from .checkpoint import Checkpoint
from .denoiser import DenoiserConfig, init_model
from .loss import TrainBatch, loss_and_grads
from .optim import AdamState, adam_step

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 1000


@dataclass
class TrainConfig:
    steps: int = 20000
    batch_size: int = 8
    learning_rate: float = 1e-4
    crop: int = 32
    lambda_perceptual: float = 0.001
    weight_mode: str = "unit"  # or "theoretical"
    seed: int = 0
    lam_min: float = 0.0004
    lam_max: float = 0.016

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.crop % 8 != 0:
            raise ValueError("crop size must be a multiple of 8")
        if self.weight_mode not in ("unit", "theoretical"):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "crop": self.crop,
            "lambda_perceptual": self.lambda_perceptual,
            "weight_mode": self.weight_mode,
            "seed": self.seed,
            "lam_min": self.lam_min,
            "lam_max": self.lam_max,
        }


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: list[float] = field(default_factory=list)


def _sample_batch(images, schedule, cfg, rng, dtype):
    crop = cfg.crop
    lam = sample_lambda(float(rng.uniform()), cfg.lam_min, cfg.lam_max)
    lam = min(max(lam, cfg.lam_min), cfg.lam_max)
    _, s_q = quantize_scale(RateControl(lam, cfg.lam_min, cfg.lam_max).scale)

    idx = rng.integers(0, len(images), size=cfg.batch_size)
    x = np.empty((cfg.batch_size, 3, crop, crop))
    for row, i in enumerate(idx):
        img = images[int(i)]
        h, w = img.shape[-2:]
        if h < crop or w < crop:
            raise ValueError(f"image {i} smaller than the {crop}px training crop")
        oy = int(rng.integers(0, h - crop + 1))
        ox = int(rng.integers(0, w - crop + 1))
        patch = img[:, oy : oy + crop, ox : ox + crop]
        if rng.random() < 0.5:
            patch = patch[:, :, ::-1]
        x[row] = patch

    x_tilde = np.stack([reconstruct(xi, s_q) for xi in x])
    r0 = x - x_tilde
    t = rng.integers(1, schedule.T + 1, size=cfg.batch_size)
    eps = rng.standard_normal(x.shape)
    ab = schedule.alpha_bar[t - 1][:, None, None, None]
    r_t = np.sqrt(ab) * r0 + np.sqrt(1.0 - ab) * eps

    if cfg.weight_mode == "unit":
        w = np.ones(cfg.batch_size)
    else:
        w = np.array([loss_weight(schedule, int(ti), "theoretical") for ti in t])

    return TrainBatch(
        r0=r0.astype(dtype),
        r_t=r_t.astype(dtype),
        x_tilde=x_tilde.astype(dtype),
        t=t,
        w=w,
    )


def train(
    images: list[np.ndarray],
    schedule: NoiseSchedule,
    cfg: TrainConfig,
    model_config: DenoiserConfig | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Train from scratch; returns the checkpoint plus the loss trace."""
    if not images:
        raise ValueError("empty training corpus")
    model_config = model_config or DenoiserConfig()
    params = init_model(model_config, seed=cfg.seed)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    dtype = params["head.w"].dtype

    losses: list[float] = []
    initial_loss = None
    high_streak = 0
    for step in range(cfg.steps):
        batch = _sample_batch(images, schedule, cfg, rng, dtype)
        loss, grads, _ = loss_and_grads(
            params, model_config, batch, cfg.lambda_perceptual
        )
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}")
        adam_step(params, grads, state, lr=cfg.learning_rate)
        losses.append(loss)
        if initial_loss is None:
            initial_loss = loss
        if loss > DIVERGENCE_FACTOR * initial_loss:
            high_streak += 1
            if high_streak >= DIVERGENCE_PATIENCE:
                raise TrainingError(
                    f"diverged: loss above {DIVERGENCE_FACTOR}x the initial value "
                    f"for {DIVERGENCE_PATIENCE} consecutive steps (step {step})"
                )
        else:
            high_streak = 0
        if log_every and (step + 1) % log_every == 0:
            recent = float(np.mean(losses[-log_every:]))
            print(f"step {step + 1}/{cfg.steps}  loss {recent:.6f}")

    ckpt = Checkpoint(
        params=params,
        config=model_config,
        schedule_spec=schedule.spec,
        train_config=cfg.to_dict(),
        seed=cfg.seed,
        steps=cfg.steps,
        final_loss=losses[-1] if losses else float("nan"),
    )
    return TrainResult(checkpoint=ckpt, losses=losses)
