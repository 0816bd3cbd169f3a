"""Rate control: the normalized-rate sampler and the exponential rate-to-scale map.

The quantization scale ``s`` is derived from the rate parameter as
``s = alpha_s * lambda^beta_s``. The default constants map the supported
lambda range ``[LAMBDA_MIN, LAMBDA_MAX]`` onto scales ``[0.25, 4]``; they
are fixed (not learned) so all rate-indexed tables produced by this
toolkit are self-referential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

LAMBDA_MIN = 0.0004
LAMBDA_MAX = 0.016

SCALE_AT_LAMBDA_MIN = 0.25
SCALE_AT_LAMBDA_MAX = 4.0

DEFAULT_BETA_S = math.log(SCALE_AT_LAMBDA_MAX / SCALE_AT_LAMBDA_MIN) / math.log(
    LAMBDA_MAX / LAMBDA_MIN
)
DEFAULT_ALPHA_S = SCALE_AT_LAMBDA_MIN * math.exp(-DEFAULT_BETA_S * math.log(LAMBDA_MIN))

# fixed-point step of the 16-bit scale code carried in the bitstream header
SCALE_FIXED_POINT = 1024


def sample_lambda(
    lam_norm: float, lam_min: float = LAMBDA_MIN, lam_max: float = LAMBDA_MAX
) -> float:
    """Map a normalized rate in [0, 1] to lambda by log2-space interpolation."""
    if not 0.0 <= lam_norm <= 1.0:
        raise ValueError(f"normalized rate must lie in [0, 1], got {lam_norm}")
    log_lam = (math.log2(lam_max) - math.log2(lam_min)) * lam_norm + math.log2(lam_min)
    return 2.0**log_lam


def rate_to_scale(
    lam: float, alpha_s: float = DEFAULT_ALPHA_S, beta_s: float = DEFAULT_BETA_S
) -> float:
    """Exponential map from the rate parameter to the quantization scale."""
    if lam <= 0.0:
        raise ValueError(f"rate parameter must be positive, got {lam}")
    return alpha_s * math.exp(beta_s * math.log(lam))


def scale_to_rate(
    s: float, alpha_s: float = DEFAULT_ALPHA_S, beta_s: float = DEFAULT_BETA_S
) -> float:
    """Inverse of :func:`rate_to_scale`."""
    if s <= 0.0:
        raise ValueError(f"scale must be positive, got {s}")
    return math.exp(math.log(s / alpha_s) / beta_s)


def quantize_scale(s: float) -> tuple[int, float]:
    """Round ``s`` to the 16-bit fixed-point grid used in the header.

    Returns ``(scale_code, s_quantized)``; both sides of the codec use the
    quantized value so reconstruction is exactly reproducible.
    """
    if s <= 0.0:
        raise ValueError(f"scale must be positive, got {s}")
    code = int(round(s * SCALE_FIXED_POINT))
    code = max(1, min(code, 0xFFFF))
    return code, code / SCALE_FIXED_POINT


@dataclass
class RateControl:
    """Rate parameter plus the constants of the scale map."""

    lam: float
    lam_min: float = LAMBDA_MIN
    lam_max: float = LAMBDA_MAX
    alpha_s: float = DEFAULT_ALPHA_S
    beta_s: float = DEFAULT_BETA_S

    def __post_init__(self):
        if not self.lam_min <= self.lam <= self.lam_max:
            raise ValueError(
                f"lambda {self.lam} outside [{self.lam_min}, {self.lam_max}]"
            )
        if self.alpha_s <= 0.0:
            raise ValueError("alpha_s must be positive")

    @classmethod
    def from_normalized(cls, lam_norm: float, **kwargs) -> "RateControl":
        lam_min = kwargs.get("lam_min", LAMBDA_MIN)
        lam_max = kwargs.get("lam_max", LAMBDA_MAX)
        lam = sample_lambda(lam_norm, lam_min, lam_max)
        # clamp endpoint rounding back into the valid interval
        lam = min(max(lam, lam_min), lam_max)
        return cls(lam=lam, **kwargs)

    @property
    def scale(self) -> float:
        return rate_to_scale(self.lam, self.alpha_s, self.beta_s)
