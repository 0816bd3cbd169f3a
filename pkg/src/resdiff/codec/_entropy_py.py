"""Pure-Python entropy-coding core.

This is the reference implementation of the coder contract; the compiled
twin in ``_entropy_cy.pyx`` must produce byte-identical streams. The coder
is a 32-bit carry-less range coder (Subbotin style): the encoder keeps a
``[low, low + rng)`` window, shrinks it per symbol and emits the top byte
whenever it is pinned down; a forced-truncation branch handles the
underflow case where the window straddles a byte boundary.

Frequency totals must not exceed ``BOT`` (2^16). When a symbol's interval
touches the top of the range (``cum + freq == tot``) the integer-division
remainder is absorbed into it, which keeps the coding overhead well under
0.5% plus a 4-byte flush.
"""
from __future__ import annotations

import math

MASK = 0xFFFFFFFF
TOP = 1 << 24
BOT = 1 << 16

# adaptive binary context: two counts, increment / halving cap
CTX_INIT = 1
CTX_INC = 32
CTX_CAP = 4096

# magnitude coding: number of adaptive prefix contexts per class
NUM_PREFIX_CTX = 8


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.rng = MASK
        self.out = bytearray()

    def encode(self, cum: int, freq: int, tot: int) -> None:
        r = self.rng // tot
        self.low += r * cum
        if cum + freq == tot:
            self.rng -= r * cum
        else:
            self.rng = r * freq
        self._normalize()

    def _normalize(self) -> None:
        low, rng, out = self.low, self.rng, self.out
        while True:
            if (low ^ (low + rng)) < TOP:
                pass
            elif rng < BOT:
                rng = (MASK + 1 - low) & (BOT - 1)
            else:
                break
            out.append((low >> 24) & 0xFF)
            low = (low << 8) & MASK
            rng = rng << 8
        self.low, self.rng = low, rng

    def finish(self) -> bytes:
        # emit the smallest 2^16-aligned value inside [low, low + rng); its
        # bottom two bytes are zero, which is exactly what a decoder reads
        # past the end of the stream, so two flush bytes suffice
        code = (self.low + BOT - 1) & ~(BOT - 1)
        self.out.append((code >> 24) & 0xFF)
        self.out.append((code >> 16) & 0xFF)
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.low = 0
        self.rng = MASK
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()
        self._r = 0

    def _next_byte(self) -> int:
        # reads past the end return 0, mirroring the encoder flush
        if self.pos < len(self.data):
            b = self.data[self.pos]
            self.pos += 1
            return b
        self.pos += 1
        return 0

    def decode_cum(self, tot: int) -> int:
        self._r = self.rng // tot
        dv = (self.code - self.low) // self._r
        return dv if dv < tot else tot - 1

    def update(self, cum: int, freq: int, tot: int) -> None:
        r = self._r
        self.low += r * cum
        if cum + freq == tot:
            self.rng -= r * cum
        else:
            self.rng = r * freq
        low, rng, code = self.low, self.rng, self.code
        while True:
            if (low ^ (low + rng)) < TOP:
                pass
            elif rng < BOT:
                rng = (MASK + 1 - low) & (BOT - 1)
            else:
                break
            code = ((code << 8) | self._next_byte()) & MASK
            low = (low << 8) & MASK
            rng = rng << 8
        self.low, self.rng, self.code = low, rng, code


class BitContext:
    """Adaptive binary model: counts for 0/1 with periodic halving."""

    __slots__ = ("c0", "c1")

    def __init__(self):
        self.c0 = CTX_INIT
        self.c1 = CTX_INIT

    def encode(self, enc: RangeEncoder, bit: int) -> float:
        c0, c1 = self.c0, self.c1
        tot = c0 + c1
        if bit:
            enc.encode(c0, c1, tot)
            cost = math.log2(tot / c1)
            self.c1 = c1 + CTX_INC
        else:
            enc.encode(0, c0, tot)
            cost = math.log2(tot / c0)
            self.c0 = c0 + CTX_INC
        if self.c0 + self.c1 > CTX_CAP:
            self.c0 = (self.c0 + 1) >> 1
            self.c1 = (self.c1 + 1) >> 1
        return cost

    def decode(self, dec: RangeDecoder) -> int:
        c0, c1 = self.c0, self.c1
        tot = c0 + c1
        bit = 1 if dec.decode_cum(tot) >= c0 else 0
        if bit:
            dec.update(c0, c1, tot)
            self.c1 = c1 + CTX_INC
        else:
            dec.update(0, c0, tot)
            self.c0 = c0 + CTX_INC
        if self.c0 + self.c1 > CTX_CAP:
            self.c0 = (self.c0 + 1) >> 1
            self.c1 = (self.c1 + 1) >> 1
        return bit


def _encode_bypass(enc: RangeEncoder, bit: int) -> None:
    enc.encode(bit, 1, 2)


def _decode_bypass(dec: RangeDecoder) -> int:
    bit = dec.decode_cum(2)
    dec.update(bit, 1, 2)
    return bit


def encode_tokens(values, class_ids, n_classes: int) -> tuple[bytes, float]:
    """Entropy-code signed integer coefficients.

    ``class_ids`` assigns each value to a context class (same array on the
    decoder side). Per value: an adaptive significance bit, then for nonzero
    values a bypass sign bit and the magnitude minus one in an adaptive
    Elias-gamma code (contexted unary prefix, bypass suffix bits).

    Returns the payload and the model's information content in bits
    (bypass bits count as exactly 1).
    """
    enc = RangeEncoder()
    sig = [BitContext() for _ in range(n_classes)]
    pref = [[BitContext() for _ in range(NUM_PREFIX_CTX)] for _ in range(n_classes)]
    bits = 0.0
    n = len(values)
    for i in range(n):
        v = int(values[i])
        c = class_ids[i]
        if v == 0:
            bits += sig[c].encode(enc, 0)
            continue
        bits += sig[c].encode(enc, 1)
        _encode_bypass(enc, 1 if v < 0 else 0)
        bits += 1.0
        m = (-v if v < 0 else v) - 1
        k = 0
        ctxs = pref[c]
        while m >= (1 << k):
            bits += ctxs[k if k < NUM_PREFIX_CTX else NUM_PREFIX_CTX - 1].encode(enc, 1)
            m -= 1 << k
            k += 1
        bits += ctxs[k if k < NUM_PREFIX_CTX else NUM_PREFIX_CTX - 1].encode(enc, 0)
        for j in range(k - 1, -1, -1):
            _encode_bypass(enc, (m >> j) & 1)
            bits += 1.0
    return enc.finish(), bits


def decode_tokens(payload: bytes, class_ids, n: int, n_classes: int) -> list[int]:
    """Inverse of :func:`encode_tokens`; returns ``n`` signed integers."""
    dec = RangeDecoder(payload)
    sig = [BitContext() for _ in range(n_classes)]
    pref = [[BitContext() for _ in range(NUM_PREFIX_CTX)] for _ in range(n_classes)]
    out = [0] * n
    for i in range(n):
        c = class_ids[i]
        if sig[c].decode(dec) == 0:
            continue
        negative = _decode_bypass(dec)
        k = 0
        m = 0
        ctxs = pref[c]
        while ctxs[k if k < NUM_PREFIX_CTX else NUM_PREFIX_CTX - 1].decode(dec) == 1:
            m += 1 << k
            k += 1
        raw = 0
        for _ in range(k):
            raw = (raw << 1) | _decode_bypass(dec)
        mag = m + raw + 1
        out[i] = -mag if negative else mag
    return out
