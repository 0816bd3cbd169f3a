"""Binary PPM (P6, 8-bit) image I/O.

Pixels map between the byte range and the signed working range by the
affine pair ``x = px / 255 * 2 - 1`` and ``px = round((x + 1) / 2 * 255)``
(clipped); this is the only place the [0, 255] <-> [-1, 1] convention
lives.
"""
from __future__ import annotations

import numpy as np

from .errors import DecodeError


def to_unit_range(pixels: np.ndarray) -> np.ndarray:
    """uint8 (3, H, W) -> float (3, H, W) in [-1, 1]."""
    return pixels.astype(np.float64) / 255.0 * 2.0 - 1.0


def to_bytes_range(image: np.ndarray) -> np.ndarray:
    """float (3, H, W) in [-1, 1] -> uint8 (3, H, W)."""
    px = np.rint((np.clip(image, -1.0, 1.0) + 1.0) / 2.0 * 255.0)
    return px.astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    """Write a (3, H, W) image in [-1, 1] as binary PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got shape {image.shape}")
    px = to_bytes_range(image)
    h, w = px.shape[1], px.shape[2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(px.transpose(1, 2, 0).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a (3, H, W) float image in [-1, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise DecodeError("not a binary PPM (P6) file", 0)
    # header: magic, width, height, maxval, single whitespace, then raster
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DecodeError("truncated PPM header", pos)
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(v) for v in fields)
    if maxval != 255:
        raise DecodeError(f"unsupported PPM maxval {maxval}", pos)
    need = w * h * 3
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise DecodeError("truncated PPM raster", len(data))
    px = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return to_unit_range(px)
