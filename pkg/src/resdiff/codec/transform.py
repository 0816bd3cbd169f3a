"""Block transform: replicate padding, 8x8 orthonormal DCT, zigzag scan."""
from __future__ import annotations

import numpy as np

BLOCK = 8


def _dct_matrix() -> np.ndarray:
    # orthonormal DCT-II: C[k, n] = c_k cos(pi (2n + 1) k / 16)
    k = np.arange(BLOCK, dtype=np.float64)[:, None]
    n = np.arange(BLOCK, dtype=np.float64)[None, :]
    c = np.cos(np.pi * (2.0 * n + 1.0) * k / (2.0 * BLOCK))
    c *= np.sqrt(2.0 / BLOCK)
    c[0] /= np.sqrt(2.0)
    return c


DCT_MAT = _dct_matrix()
DCT_MAT.flags.writeable = False


def _zigzag_order() -> np.ndarray:
    # scan position -> flat (row * 8 + col) index, antidiagonals alternating
    coords = []
    for s in range(2 * BLOCK - 1):
        diag = [(i, s - i) for i in range(max(0, s - BLOCK + 1), min(s, BLOCK - 1) + 1)]
        if s % 2 == 0:
            diag = diag[::-1]
        coords.extend(diag)
    return np.array([i * BLOCK + j for i, j in coords], dtype=np.int64)


ZIGZAG = _zigzag_order()
ZIGZAG.flags.writeable = False

# zigzag position -> frequency-band class for entropy-coding contexts
ZIGZAG_CLASS = np.zeros(BLOCK * BLOCK, dtype=np.uint8)
ZIGZAG_CLASS[1:6] = 1
ZIGZAG_CLASS[6:21] = 2
ZIGZAG_CLASS[21:] = 3
ZIGZAG_CLASS.flags.writeable = False
NUM_CLASSES = 4


def pad_to_blocks(plane: np.ndarray) -> np.ndarray:
    """Replicate-pad the last two axes up to multiples of the block size."""
    h, w = plane.shape[-2:]
    ph = (-h) % BLOCK
    pw = (-w) % BLOCK
    if ph == 0 and pw == 0:
        return plane
    pad = [(0, 0)] * (plane.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(plane, pad, mode="edge")


def to_blocks(plane: np.ndarray) -> np.ndarray:
    """(H, W) with H, W multiples of 8 -> (H//8 * W//8, 8, 8), raster order."""
    h, w = plane.shape
    b = plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
    return b.transpose(0, 2, 1, 3).reshape(-1, BLOCK, BLOCK)


def from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    nby, nbx = h // BLOCK, w // BLOCK
    b = blocks.reshape(nby, nbx, BLOCK, BLOCK).transpose(0, 2, 1, 3)
    return b.reshape(h, w)


def dct2(blocks: np.ndarray) -> np.ndarray:
    """Forward 2-D DCT over a stack of 8x8 blocks."""
    return DCT_MAT @ blocks @ DCT_MAT.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    return DCT_MAT.T @ coeffs @ DCT_MAT


def zigzag_scan(coeffs: np.ndarray) -> np.ndarray:
    """(n, 8, 8) -> (n, 64) in zigzag order."""
    # advanced indexing may return a transposed memory layout; force C order
    # so downstream BLAS calls round identically on every code path
    return np.ascontiguousarray(coeffs.reshape(-1, BLOCK * BLOCK)[:, ZIGZAG])


def zigzag_unscan(scanned: np.ndarray) -> np.ndarray:
    out = np.empty(scanned.shape, dtype=scanned.dtype)
    out[:, ZIGZAG] = scanned
    return out.reshape(-1, BLOCK, BLOCK)
