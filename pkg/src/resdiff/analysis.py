"""Metrics and diagnostics for the fidelity/realism traversal.

PSNR uses MAX = 2 because images live in [-1, 1]; values are capped at
100 dB (the sentinel for identical inputs). The patch statistics distance
is a handcrafted stand-in for learned-feature Frechet metrics: 12
_statistics per half-overlapping crop (per-channel mean, variance,
gradient energy, Laplacian energy), Gaussian-fitted per image set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import RateControl, quantize_scale, reconstruct
from .nn.checkpoint import Checkpoint
from .residuals import ThresholdTable
from .sampler import SamplerConfig, Trajectory, enhance
from .schedule import NoiseSchedule, TimestepPlan

PSNR_CAP_DB = 100.0
PATCH = 32
MIN_CROPS = 30


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [-1, 1] data (MAX = 2)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(4.0 / mse), PSNR_CAP_DB)


@dataclass
class CurvatureResult:
    angles: np.ndarray  # radians, one per consecutive update pair
    zero_norm_flags: np.ndarray  # True where a zero-norm update forced angle 0


def curvature(trajectory: Trajectory) -> CurvatureResult:
    """Angles between consecutive sampling update vectors.

    The update at step t points from the latent to the current prediction;
    zero-norm updates (possible with a freshly initialized model) yield an
    angle of 0 with a flag instead of NaN.
    """
    if len(trajectory) < 2:
        raise ValueError("curvature needs at least two recorded steps")
    updates = trajectory.update_vectors()
    angles = np.zeros(len(updates) - 1)
    flags = np.zeros(len(updates) - 1, dtype=bool)
    for i in range(len(updates) - 1):
        u, v = updates[i].ravel(), updates[i + 1].ravel()
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            flags[i] = True
            continue
        cos = float(np.dot(u, v) / (nu * nv))
        angles[i] = math.acos(min(1.0, max(-1.0, cos)))
    return CurvatureResult(angles=angles, zero_norm_flags=flags)


def _crop_features(img: np.ndarray) -> np.ndarray:
    """Half-overlapping crops -> (n_crops, 12) handcrafted statistics."""
    c, h, w = img.shape
    if h < PATCH or w < PATCH:
        raise ValueError(f"image {h}x{w} smaller than the {PATCH}px crop")
    feats = []
    for y in range(0, h - PATCH + 1, PATCH // 2):
        for x in range(0, w - PATCH + 1, PATCH // 2):
            crop = img[:, y : y + PATCH, x : x + PATCH]
            gh = np.diff(crop, axis=2)
            gv = np.diff(crop, axis=1)
            lap = (
                4.0 * crop[:, 1:-1, 1:-1]
                - crop[:, :-2, 1:-1]
                - crop[:, 2:, 1:-1]
                - crop[:, 1:-1, :-2]
                - crop[:, 1:-1, 2:]
            )
            feats.append(
                np.concatenate(
                    [
                        crop.mean(axis=(1, 2)),
                        crop.var(axis=(1, 2)),
                        (gh**2).mean(axis=(1, 2)) + (gv**2).mean(axis=(1, 2)),
                        (lap**2).mean(axis=(1, 2)),
                    ]
                )
            )
    return np.stack(feats)


def image_set_features(images: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([_crop_features(img) for img in images])


@dataclass
class PatchFrechetResult:
    distance: float
    regularized: bool


def patch_frechet(
    set_a: list[np.ndarray] | np.ndarray, set_b: list[np.ndarray] | np.ndarray
) -> PatchFrechetResult:
    """Frechet distance between Gaussian fits of patch statistics.

    Inputs are image lists or precomputed (n, 12) feature arrays. Singular
    covariances are regularized with 1e-6 I and flagged.
    """
    fa = set_a if isinstance(set_a, np.ndarray) else image_set_features(set_a)
    fb = set_b if isinstance(set_b, np.ndarray) else image_set_features(set_b)
    if fa.shape[0] < MIN_CROPS or fb.shape[0] < MIN_CROPS:
        raise ValueError(f"need at least {MIN_CROPS} crops per set")
    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    cov_a = np.cov(fa, rowvar=False)
    cov_b = np.cov(fb, rowvar=False)

    regularized = False
    for cov in (cov_a, cov_b):
        if np.linalg.matrix_rank(cov) < cov.shape[0]:
            regularized = True
    if regularized:
        cov_a = cov_a + 1e-6 * np.eye(cov_a.shape[0])
        cov_b = cov_b + 1e-6 * np.eye(cov_b.shape[0])

    # trace of sqrtm(cov_a cov_b) via the symmetric product's eigenvalues
    sqrt_a = _psd_sqrt(cov_a)
    middle = sqrt_a @ cov_b @ sqrt_a
    eig = np.linalg.eigvalsh((middle + middle.T) / 2.0)
    tr_sqrt = float(np.sqrt(np.clip(eig, 0.0, None)).sum())
    d2 = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return PatchFrechetResult(distance=max(d2, 0.0), regularized=regularized)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass
class TraversalRow:
    step: int
    t: int
    psnr_table: float
    proxy_table: float
    mean_abs_pred_table: float
    psnr_fixed: float
    proxy_fixed: float
    mean_abs_pred_fixed: float


@dataclass
class TraversalReport:
    """Corpus-average traversal: one row per executed sampler step."""

    rows: list[TraversalRow] = field(default_factory=list)

    CSV_HEADER = (
        "step,t,psnr_table,proxy_table,mean_abs_pred_table,"
        "psnr_fixed,proxy_fixed,mean_abs_pred_fixed"
    )

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.step},{r.t},{r.psnr_table:.6f},{r.proxy_table:.8f},"
                f"{r.mean_abs_pred_table:.8f},{r.psnr_fixed:.6f},"
                f"{r.proxy_fixed:.8f},{r.mean_abs_pred_fixed:.8f}"
            )
        return "\n".join(lines) + "\n"


def traversal_report(
    checkpoint: Checkpoint,
    schedule: NoiseSchedule,
    images: list[np.ndarray],
    plan: TimestepPlan,
    lam: float,
    table: ThresholdTable,
    seed: int = 0,
) -> TraversalReport:
    """Average per-step fidelity/realism metrics over an eval corpus.

    Runs each image once with rate-dependent thresholding and once with
    plain [-1, 1] clipping (same seeds, so eta=0 trajectories differ only
    through the clipping).
    """
    _, s_q = quantize_scale(RateControl(lam=lam).scale)
    recons = [reconstruct(img, s_q) for img in images]

    preds = {"table": [], "fixed": []}
    for mode in ("table", "fixed"):
        for img, recon in zip(images, recons):
            cfg = SamplerConfig(
                plan=plan,
                clip_mode=mode,
                table=table if mode == "table" else None,
                record_trajectory=True,
                seed=seed,
            )
            res = enhance(checkpoint, schedule, recon, cfg, lam=lam)
            preds[mode].append(res.trajectory)

    orig_feats = image_set_features(images)
    n_steps = len(plan)
    rows = []
    for k in range(n_steps):
        stats = {}
        for mode in ("table", "fixed"):
            outs = []
            mean_abs = 0.0
            for img, recon, traj in zip(images, recons, preds[mode]):
                h, w = img.shape[-2:]
                pred = traj.predictions[k][:, :h, :w]
                outs.append(np.clip(recon + pred, -1.0, 1.0))
                mean_abs += float(np.abs(traj.predictions[k]).mean())
            mean_abs /= len(images)
            quality = float(np.mean([psnr(i, o) for i, o in zip(images, outs)]))
            proxy = patch_frechet(orig_feats, image_set_features(outs)).distance
            stats[mode] = (quality, proxy, mean_abs)
        rows.append(
            TraversalRow(
                step=k + 1,
                t=plan.steps[k],
                psnr_table=stats["table"][0],
                proxy_table=stats["table"][1],
                mean_abs_pred_table=stats["table"][2],
                psnr_fixed=stats["fixed"][0],
                proxy_fixed=stats["fixed"][1],
                mean_abs_pred_fixed=stats["fixed"][2],
            )
        )
    return TraversalReport(rows=rows)
