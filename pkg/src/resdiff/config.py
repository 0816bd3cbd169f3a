"""Flat ``key = value`` toolkit configuration.

One diff-able text file drives every command; unknown keys are rejected
so experiment records stay trustworthy. Values keep their defaults when
a key is absent.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .codec.rate import DEFAULT_ALPHA_S, DEFAULT_BETA_S, LAMBDA_MAX, LAMBDA_MIN
from .errors import ConfigError
from .nn.denoiser import DenoiserConfig
from .nn.train import TrainConfig
from .schedule import ScheduleSpec


@dataclass
class ToolkitConfig:
    # noise schedule
    schedule_kind: str = "linear"
    schedule_T: int = 1000
    schedule_beta1: float = 1e-4
    schedule_betaT: float = 0.02
    schedule_L: float = 1.0
    schedule_p: float = 3.0
    # codec rate map
    codec_lambda_min: float = LAMBDA_MIN
    codec_lambda_max: float = LAMBDA_MAX
    codec_alpha_s: float = DEFAULT_ALPHA_S
    codec_beta_s: float = DEFAULT_BETA_S
    # training
    train_steps: int = 20000
    train_batch_size: int = 8
    train_learning_rate: float = 1e-4
    train_crop: int = 32
    train_lambda_perceptual: float = 0.001
    train_weight_mode: str = "unit"
    train_seed: int = 0
    # model
    model_width: int = 32
    model_temb_dim: int = 64
    model_sin_dim: int = 32
    model_groups: int = 8
    # sampler defaults
    sampler_steps: int = 100
    sampler_eta: float = 0.0
    sampler_seed: int = 0

    def schedule_spec(self) -> ScheduleSpec:
        return ScheduleSpec(
            kind=self.schedule_kind,
            T=self.schedule_T,
            beta1=self.schedule_beta1,
            betaT=self.schedule_betaT,
            L=self.schedule_L,
            p=self.schedule_p,
        )

    def train_config(self, **overrides) -> TrainConfig:
        kw = dict(
            steps=self.train_steps,
            batch_size=self.train_batch_size,
            learning_rate=self.train_learning_rate,
            crop=self.train_crop,
            lambda_perceptual=self.train_lambda_perceptual,
            weight_mode=self.train_weight_mode,
            seed=self.train_seed,
            lam_min=self.codec_lambda_min,
            lam_max=self.codec_lambda_max,
        )
        kw.update(overrides)
        return TrainConfig(**kw)

    def model_config(self, **overrides) -> DenoiserConfig:
        kw = dict(
            width=self.model_width,
            temb_dim=self.model_temb_dim,
            sin_dim=self.model_sin_dim,
            groups=self.model_groups,
        )
        kw.update(overrides)
        return DenoiserConfig(**kw)


# config-file key -> dataclass field (dots keep the file readable)
_KEY_MAP = {f.name.replace("_", ".", 1): f for f in fields(ToolkitConfig)}


def load_config(path) -> ToolkitConfig:
    """Parse a config file, rejecting unknown keys and bad values."""
    cfg = ToolkitConfig()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        f = _KEY_MAP.get(key)
        if f is None:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if f.type == "int":
                parsed = int(value)
            elif f.type == "float":
                parsed = float(value)
            else:
                parsed = value
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {err}") from None
        setattr(cfg, f.name, parsed)
    _validate(cfg)
    return cfg


def _validate(cfg: ToolkitConfig) -> None:
    try:
        cfg.schedule_spec()
        cfg.train_config()
        cfg.model_config()
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if not 0 < cfg.codec_lambda_min <= cfg.codec_lambda_max:
        raise ConfigError("need 0 < codec.lambda_min <= codec.lambda_max")
    if cfg.codec_alpha_s <= 0:
        raise ConfigError("codec.alpha_s must be positive")
    if cfg.sampler_steps < 1 or cfg.sampler_steps > cfg.schedule_T:
        raise ConfigError("sampler.steps must lie in [1, schedule.T]")
    if not 0.0 <= cfg.sampler_eta <= 1.0:
        raise ConfigError("sampler.eta must lie in [0, 1]")


def dump_config(cfg: ToolkitConfig) -> str:
    lines = []
    for key, f in _KEY_MAP.items():
        lines.append(f"{key} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"
