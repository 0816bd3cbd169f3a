"""Bit-exact bitstream container.

Layout (all integers little-endian):

    offset  size  field
    0       4     magic  b"RDCF"
    4       1     version (currently 1)
    5       2     width   (original, unpadded)
    7       2     height
    9       2     scale_code (quantization scale * 1024, fixed point)
    11      4     payload length in bytes
    15      4     CRC-32 of the payload
    19      ...   entropy-coded payload
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from ..errors import DecodeError, UnsupportedSizeError

MAGIC = b"RDCF"
VERSION = 1
HEADER = struct.Struct("<4sBHHHII")
HEADER_SIZE = HEADER.size


@dataclass(frozen=True)
class Bitstream:
    width: int
    height: int
    scale_code: int
    payload: bytes

    def to_bytes(self) -> bytes:
        return pack_header(self.width, self.height, self.scale_code, self.payload)


def pack_header(width: int, height: int, scale_code: int, payload: bytes) -> bytes:
    if not (1 <= width < 1 << 16 and 1 <= height < 1 << 16):
        raise UnsupportedSizeError(
            f"dimensions {width}x{height} outside the 16-bit header range"
        )
    if not 0 <= scale_code < 1 << 16:
        raise ValueError(f"scale code {scale_code} outside 16-bit range")
    head = HEADER.pack(
        MAGIC, VERSION, width, height, scale_code, len(payload), zlib.crc32(payload)
    )
    return head + payload


def unpack_header(data: bytes) -> Bitstream:
    if len(data) < HEADER_SIZE:
        raise DecodeError("truncated header", len(data))
    magic, version, width, height, scale_code, plen, crc = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}", 4)
    if width == 0 or height == 0:
        raise DecodeError("zero image dimension", 5)
    if len(data) < HEADER_SIZE + plen:
        raise DecodeError("truncated payload", len(data))
    payload = data[HEADER_SIZE : HEADER_SIZE + plen]
    if zlib.crc32(payload) != crc:
        raise DecodeError("payload CRC mismatch", HEADER_SIZE)
    return Bitstream(width=width, height=height, scale_code=scale_code, payload=payload)
