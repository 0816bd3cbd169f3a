"""Encoder/decoder orchestration for the block-transform codec.

Images are ``(3, H, W)`` float arrays in [-1, 1]. Each channel plane is
replicate-padded to 8x8 blocks, transformed with the orthonormal DCT,
quantized with a flat binwidth ``BASE_BINWIDTH / s`` (larger scale s =
finer quantization), zigzag-scanned, DC-differenced in raster order and
entropy-coded. Decoding inverts every step exactly and crops back to the
header dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DecodeError
from . import entropy, transform
from .bitstream import Bitstream, pack_header, unpack_header
from .rate import RateControl, quantize_scale, scale_to_rate

# quantization binwidth at scale 1; flat across all 64 coefficients
BASE_BINWIDTH = 0.5


@dataclass(frozen=True)
class CodingStats:
    """Accounting from one encode call."""

    payload_bytes: int
    ideal_bits: float
    header_bytes: int

    @property
    def payload_bits(self) -> int:
        return 8 * self.payload_bytes


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    return image


def _quantize_planes(image: np.ndarray, s_q: float) -> tuple[np.ndarray, int, int]:
    """Transform and quantize; returns (values (3, nblocks, 64) int32, ph, pw)."""
    padded = transform.pad_to_blocks(image)
    ph, pw = padded.shape[-2:]
    binwidth = BASE_BINWIDTH / s_q
    per_plane = []
    for c in range(3):
        blocks = transform.to_blocks(padded[c])
        coeffs = transform.dct2(blocks)
        scanned = transform.zigzag_scan(coeffs)
        per_plane.append(np.rint(scanned / binwidth).astype(np.int32))
    return np.stack(per_plane), ph, pw


def _dequantize_planes(
    values: np.ndarray, s_q: float, ph: int, pw: int, h: int, w: int
) -> np.ndarray:
    binwidth = BASE_BINWIDTH / s_q
    planes = []
    for c in range(3):
        coeffs = transform.zigzag_unscan(values[c].astype(np.float64) * binwidth)
        blocks = transform.idct2(coeffs)
        planes.append(transform.from_blocks(blocks, ph, pw))
    out = np.stack(planes)[:, :h, :w]
    return np.clip(out, -1.0, 1.0)


def _dc_diff(values: np.ndarray) -> None:
    # in place, per plane: raster-order DC prediction by the previous block
    dc = values[:, :, 0].copy()
    values[:, 1:, 0] = dc[:, 1:] - dc[:, :-1]


def _dc_undiff(values: np.ndarray) -> None:
    values[:, :, 0] = np.cumsum(values[:, :, 0], axis=1)


def _token_layout(n_blocks: int) -> np.ndarray:
    per_block = transform.ZIGZAG_CLASS
    return np.tile(per_block, 3 * n_blocks)


def reconstruct(image: np.ndarray, s_q: float) -> np.ndarray:
    """Quantize/dequantize round trip without entropy coding.

    Produces exactly the pixels that ``decode(encode(image, ...))`` would,
    which makes residual generation during training cheap.
    """
    image = _check_image(image)
    h, w = image.shape[-2:]
    values, ph, pw = _quantize_planes(image, s_q)
    return _dequantize_planes(values, s_q, ph, pw, h, w)


def encode_at_scale(image: np.ndarray, s: float) -> bytes:
    """Encode at an explicit quantization scale (testing/quality escape hatch)."""
    stream, _ = _encode_quantized(image, s)
    return stream


def encode(image: np.ndarray, rate_control: RateControl) -> bytes:
    """Encode an image at the rate given by ``rate_control``."""
    stream, _ = _encode_quantized(image, rate_control.scale)
    return stream


def encode_with_stats(
    image: np.ndarray, rate_control: RateControl
) -> tuple[bytes, CodingStats]:
    return _encode_quantized(image, rate_control.scale)


def _encode_quantized(image: np.ndarray, s: float) -> tuple[bytes, CodingStats]:
    image = _check_image(image)
    h, w = image.shape[-2:]
    scale_code, s_q = quantize_scale(s)
    values, _, _ = _quantize_planes(image, s_q)
    _dc_diff(values)
    n_blocks = values.shape[1]
    class_ids = _token_layout(n_blocks)
    payload, bits = entropy.encode_tokens(
        values.reshape(-1), class_ids, transform.NUM_CLASSES
    )
    stream = pack_header(w, h, scale_code, payload)
    stats = CodingStats(
        payload_bytes=len(payload),
        ideal_bits=bits,
        header_bytes=len(stream) - len(payload),
    )
    return stream, stats


def decode(data: bytes) -> tuple[np.ndarray, float, float]:
    """Decode a bitstream; returns ``(image, scale, lambda_rate)``.

    The rate parameter is recovered from the header scale code through the
    inverse of the rate-to-scale map (with its default constants).
    """
    bs = unpack_header(data)
    return decode_bitstream(bs)


def decode_bitstream(bs: Bitstream) -> tuple[np.ndarray, float, float]:
    if bs.scale_code == 0:
        raise DecodeError("header carries no quantization scale", 9)
    s_q = bs.scale_code / 1024.0
    h, w = bs.height, bs.width
    ph = h + ((-h) % transform.BLOCK)
    pw = w + ((-w) % transform.BLOCK)
    n_blocks = (ph // transform.BLOCK) * (pw // transform.BLOCK)
    class_ids = _token_layout(n_blocks)
    flat = entropy.decode_tokens(bs.payload, class_ids, transform.NUM_CLASSES)
    values = flat.reshape(3, n_blocks, 64).astype(np.int32)
    _dc_undiff(values)
    image = _dequantize_planes(values, s_q, ph, pw, h, w)
    return image, s_q, scale_to_rate(s_q)


def quantized_values(image: np.ndarray, s_q: float) -> np.ndarray:
    """Quantized (DC-differenced) coefficients, exposed for round-trip tests."""
    image = _check_image(image)
    values, _, _ = _quantize_planes(image, s_q)
    _dc_diff(values)
    return values
