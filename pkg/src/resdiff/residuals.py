"""Residual extraction, per-rate statistics and rate-dependent thresholding.

The clipping range for a rate is the symmetric interval covering a target
quantile (default 95%) of absolute residual values observed on a fitting
corpus coded at that rate. Higher rates give smaller residuals, so the
threshold curve is non-increasing in lambda; violations from sampling
noise are repaired by isotonic correction and flagged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import RateControl, quantize_scale, reconstruct

DEFAULT_COVERAGE = 0.95
TAU_MIN = 1e-3  # floor against degenerate zero-width clipping
MIN_SAMPLES = 10_000


def compute_residual(x: np.ndarray, x_tilde: np.ndarray) -> np.ndarray:
    """Residual ``x - x_tilde``; the data space of the enhancement model."""
    x = np.asarray(x)
    x_tilde = np.asarray(x_tilde)
    if x.shape != x_tilde.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_tilde.shape}")
    return x - x_tilde


@dataclass
class ThresholdTable:
    """Per-rate symmetric clipping bounds, strictly increasing in lambda."""

    lambdas: np.ndarray
    taus: np.ndarray
    coverage: float = DEFAULT_COVERAGE
    corrected: bool = False  # isotonic repair was needed during fitting

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=np.float64)
        self.taus = np.asarray(self.taus, dtype=np.float64)
        if self.lambdas.ndim != 1 or self.lambdas.shape != self.taus.shape:
            raise ValueError("lambdas and taus must be matching 1-D arrays")
        if self.lambdas.size == 0:
            raise ValueError("threshold table must not be empty")
        if np.any(np.diff(self.lambdas) <= 0):
            raise ValueError("lambda entries must be strictly increasing")
        if np.any(np.diff(self.taus) > 0):
            raise ValueError("tau entries must be non-increasing in lambda")
        if np.any(self.taus <= 0) or np.any(self.taus > 1.0):
            raise ValueError("tau entries must lie in (0, 1]")
        if not 0.0 < self.coverage < 1.0:
            raise ValueError("coverage must lie in (0, 1)")

    def lookup(self, lam: float) -> float:
        """Tau of the nearest lambda entry; ties break toward the smaller one."""
        dist = np.abs(self.lambdas - lam)
        return float(self.taus[int(np.argmin(dist))])

    def save(self, path) -> None:
        lines = [f"# coverage {float(self.coverage)!r}\n"]
        for lam, tau in zip(self.lambdas, self.taus):
            lines.append(f"{float(lam)!r} {float(tau)!r}\n")
        Path(path).write_text("".join(lines), encoding="ascii")

    @classmethod
    def load(cls, path) -> "ThresholdTable":
        coverage = DEFAULT_COVERAGE
        lams, taus = [], []
        for line in Path(path).read_text(encoding="ascii").splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "coverage":
                    coverage = float(parts[1])
                continue
            lam_s, tau_s = line.split()
            lams.append(float(lam_s))
            taus.append(float(tau_s))
        return cls(np.array(lams), np.array(taus), coverage=coverage)


def symmetric_quantile_threshold(samples: np.ndarray, coverage: float) -> float:
    """Smallest tau with ``fraction(|r| <= tau) >= coverage``."""
    magnitudes = np.sort(np.abs(np.asarray(samples).ravel()))
    n = magnitudes.size
    if n == 0:
        raise ValueError("no residual samples")
    k = max(1, math.ceil(coverage * n))
    return float(magnitudes[k - 1])


def _isotonic_non_increasing(values: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit for a non-increasing sequence."""
    blocks = [[v, 1.0] for v in values]  # (mean, weight)
    merged: list[list[float]] = []
    for blk in blocks:
        merged.append(blk)
        while len(merged) >= 2 and merged[-2][0] < merged[-1][0]:
            m2, w2 = merged.pop()
            m1, w1 = merged.pop()
            merged.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2])
    out = []
    for mean, weight in merged:
        out.extend([mean] * int(weight))
    return np.asarray(out)


def fit_threshold_table(
    samples_by_lambda: dict[float, np.ndarray],
    coverage: float = DEFAULT_COVERAGE,
    min_samples: int = MIN_SAMPLES,
) -> ThresholdTable:
    """Fit per-rate symmetric thresholds from pooled residual samples.

    ``samples_by_lambda`` maps each rate parameter to residual values from
    reconstructions at that rate (all channels pooled). Each entry needs at
    least ``min_samples`` values.
    """
    if not samples_by_lambda:
        raise ValueError("no rates to fit")
    lams = np.array(sorted(samples_by_lambda))
    taus = []
    for lam in lams:
        samples = np.asarray(samples_by_lambda[float(lam)]).ravel()
        if samples.size < min_samples:
            raise ValueError(
                f"lambda {lam}: {samples.size} residual samples, need {min_samples}"
            )
        tau = symmetric_quantile_threshold(samples, coverage)
        taus.append(min(max(tau, TAU_MIN), 1.0))
    taus = np.asarray(taus)
    corrected = bool(np.any(np.diff(taus) > 0))
    if corrected:
        taus = np.minimum(_isotonic_non_increasing(taus), 1.0)
        taus = np.maximum(taus, TAU_MIN)
    return ThresholdTable(lams, taus, coverage=coverage, corrected=corrected)


def collect_residual_samples(
    images: list[np.ndarray], lam_grid: np.ndarray
) -> dict[float, np.ndarray]:
    """Residuals of the base codec over a corpus at each rate in the grid."""
    out: dict[float, np.ndarray] = {}
    for lam in lam_grid:
        rc = RateControl(lam=float(lam))
        _, s_q = quantize_scale(rc.scale)
        chunks = [
            compute_residual(img, reconstruct(img, s_q)).ravel() for img in images
        ]
        out[float(lam)] = np.concatenate(chunks)
    return out


def clip_prediction(
    r0_pred: np.ndarray,
    lam: float | None = None,
    table: ThresholdTable | None = None,
) -> np.ndarray:
    """Clamp a residual prediction to its rate's range (no rescaling).

    With a table, the bound is the nearest entry's tau; without one the
    fixed [-1, 1] range applies. Values already inside the range pass
    through bitwise unchanged.
    """
    if table is not None:
        if lam is None:
            raise ValueError("table thresholding needs the rate parameter")
        tau = table.lookup(lam)
    else:
        tau = 1.0
    return np.clip(r0_pred, -tau, tau)


@dataclass
class ResidualHistogram:
    """Per-channel histogram of residual values over [-1, 1]."""

    bin_edges: np.ndarray
    counts: np.ndarray  # (channels, bins)
    excess_kurtosis: np.ndarray  # per channel, descriptive only

    @classmethod
    def from_residuals(cls, residuals: np.ndarray, bins: int = 101) -> "ResidualHistogram":
        residuals = np.asarray(residuals)
        if residuals.ndim != 3:
            raise ValueError("expected (channels, H, W) residuals")
        edges = np.linspace(-1.0, 1.0, bins + 1)
        counts = []
        kurt = []
        for c in range(residuals.shape[0]):
            vals = np.clip(residuals[c].ravel(), -1.0, 1.0)
            counts.append(np.histogram(vals, bins=edges)[0])
            mu = vals.mean()
            sig2 = vals.var()
            kurt.append(np.mean((vals - mu) ** 4) / sig2**2 - 3.0 if sig2 > 0 else 0.0)
        return cls(edges, np.stack(counts), np.asarray(kurt))
