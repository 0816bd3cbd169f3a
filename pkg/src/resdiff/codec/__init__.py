"""Self-contained multi-rate lossy image codec.

Pipeline: replicate-pad to 8x8 blocks, orthonormal block DCT, uniform
scalar quantization with a rate-controlled binwidth, zigzag scan and an
adaptive binary range coder. The bitstream format is bit-exact and
little-endian; see ``bitstream.py`` for the layout.
"""
from .bitstream import Bitstream, pack_header, unpack_header
from .codec import decode, encode, encode_at_scale, encode_with_stats, reconstruct
from .rate import (
    DEFAULT_ALPHA_S,
    DEFAULT_BETA_S,
    LAMBDA_MAX,
    LAMBDA_MIN,
    RateControl,
    quantize_scale,
    rate_to_scale,
    sample_lambda,
    scale_to_rate,
)

__all__ = [
    "Bitstream",
    "RateControl",
    "decode",
    "encode",
    "encode_at_scale",
    "encode_with_stats",
    "reconstruct",
    "sample_lambda",
    "rate_to_scale",
    "scale_to_rate",
    "quantize_scale",
    "pack_header",
    "unpack_header",
    "LAMBDA_MIN",
    "LAMBDA_MAX",
    "DEFAULT_ALPHA_S",
    "DEFAULT_BETA_S",
]
