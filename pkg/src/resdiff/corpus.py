"""Procedural desk-scale image corpus.

Generates small RGB images mixing gradients, smooth blobs, band-filtered
noise textures, hard-edged shapes and periodic patterns. Everything is
derived from a single seed so the corpus is bit-reproducible; images are
written as binary PPM files.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import ppm

DEFAULT_COUNT = 32
DEFAULT_SIZE = 64
DEFAULT_SEED = 7


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    lin = np.linspace(-1.0, 1.0, size)
    return np.meshgrid(lin, lin, indexing="ij")


def _gradient(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    img = np.empty((3, size, size))
    for c in range(3):
        a, b = rng.uniform(-1, 1, size=2)
        img[c] = a * yy + b * xx + rng.uniform(-0.3, 0.3)
    return img


def _blobs(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    img = np.zeros((3, size, size))
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(-1, 1, size=2)
        sig = rng.uniform(0.15, 0.6)
        amp = rng.uniform(-1.0, 1.0, size=3)
        g = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
        img += amp[:, None, None] * g
    return img


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    # white noise band-filtered in the Fourier domain
    noise = rng.standard_normal((3, size, size))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    rad = np.sqrt(fy**2 + fx**2)
    lo = rng.uniform(0.02, 0.15)
    hi = lo + rng.uniform(0.05, 0.3)
    band = ((rad >= lo) & (rad <= hi)).astype(float)
    out = np.real(np.fft.ifft2(np.fft.fft2(noise) * band[None]))
    out /= max(np.abs(out).max(), 1e-9)
    base = rng.uniform(-0.4, 0.4, size=3)[:, None, None]
    return base + out * rng.uniform(0.5, 1.0)


def _shapes(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    img = np.tile(rng.uniform(-0.8, 0.8, size=3)[:, None, None], (1, size, size))
    for _ in range(rng.integers(3, 8)):
        color = rng.uniform(-1, 1, size=3)[:, None, None]
        if rng.random() < 0.5:
            cy, cx = rng.uniform(-0.8, 0.8, size=2)
            r = rng.uniform(0.1, 0.5)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
        else:
            y0, x0 = rng.uniform(-1, 0.5, size=2)
            h, w = rng.uniform(0.2, 0.8, size=2)
            mask = (yy >= y0) & (yy <= y0 + h) & (xx >= x0) & (xx <= x0 + w)
        img = np.where(mask[None], color, img)
    return img


def _stripes(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(3, 14)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(freq * (np.cos(theta) * yy + np.sin(theta) * xx) * np.pi + phase)
    if rng.random() < 0.4:
        wave = np.sign(wave)
    amp = rng.uniform(0.3, 0.9, size=3)[:, None, None]
    base = rng.uniform(-0.3, 0.3, size=3)[:, None, None]
    return base + amp * wave


_KINDS = (_texture, _gradient, _blobs, _shapes, _stripes)


def generate_image(seed: int, index: int, size: int = DEFAULT_SIZE) -> np.ndarray:
    """One corpus image in [-1, 1]; independent of the total corpus size."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    kind = _KINDS[index % len(_KINDS)]
    img = kind(rng, size)
    # mild sensor-style noise keeps residual statistics continuous
    img = img + 0.02 * rng.standard_normal((3, size, size))
    return np.clip(img, -1.0, 1.0)


def generate_corpus(
    count: int = DEFAULT_COUNT, size: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED
) -> list[np.ndarray]:
    return [generate_image(seed, i, size) for i in range(count)]


def write_corpus(
    out_dir,
    count: int = DEFAULT_COUNT,
    size: int = DEFAULT_SIZE,
    seed: int = DEFAULT_SEED,
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(generate_corpus(count, size, seed)):
        path = out_dir / f"img_{i:03d}.ppm"
        ppm.write_ppm(path, img)
        paths.append(path)
    return paths


def load_corpus(corpus_dir) -> list[np.ndarray]:
    """Read every .ppm in a directory, sorted by name."""
    corpus_dir = Path(corpus_dir)
    paths = sorted(corpus_dir.glob("*.ppm"))
    if not paths:
        raise FileNotFoundError(f"no .ppm images in {corpus_dir}")
    return [ppm.read_ppm(p) for p in paths]
