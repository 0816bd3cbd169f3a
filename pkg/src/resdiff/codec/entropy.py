"""Entropy coding front end with compiled/pure lane selection.

The hot coefficient-token loops live in a small Cython extension
(``_entropy_cy``); importing this module falls back to the pure-Python
twin (``_entropy_py``) when the extension is not built. Both lanes emit
byte-identical streams, so bitstreams are portable across installs.

Also provides a generic adaptive multi-symbol range-coding surface
(:func:`range_code` / :func:`range_decode`) used for testing and
side data; that path always runs in Python.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import DecodeError
from . import _entropy_py

try:  # pragma: no cover - exercised only when the extension is built
    from . import _entropy_cy  # type: ignore[attr-defined]

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover
    _entropy_cy = None
    HAVE_COMPILED = False

BACKEND = "compiled" if HAVE_COMPILED else "python"

# end-of-stream sentinel for the generic symbol coder
_END_MARKER = 0xA55A


def encode_tokens(
    values: np.ndarray, class_ids: np.ndarray, n_classes: int
) -> tuple[bytes, float]:
    """Entropy-code an int32 coefficient array; returns (payload, model bits)."""
    values = np.ascontiguousarray(values, dtype=np.int32)
    class_ids = np.ascontiguousarray(class_ids, dtype=np.uint8)
    if values.shape != class_ids.shape:
        raise ValueError("values and class ids must have matching shapes")
    if HAVE_COMPILED:
        return _entropy_cy.encode_tokens(values, class_ids, n_classes)
    return _entropy_py.encode_tokens(values, class_ids, n_classes)


def decode_tokens(
    payload: bytes, class_ids: np.ndarray, n_classes: int
) -> np.ndarray:
    """Inverse of :func:`encode_tokens`."""
    class_ids = np.ascontiguousarray(class_ids, dtype=np.uint8)
    n = int(class_ids.size)
    if HAVE_COMPILED:
        out = np.empty(n, dtype=np.int32)
        _entropy_cy.decode_tokens_into(payload, class_ids, out, n_classes)
        return out
    return np.array(
        _entropy_py.decode_tokens(payload, class_ids, n, n_classes), dtype=np.int32
    )


class AdaptiveSymbolModel:
    """Adaptive frequency model over a fixed alphabet.

    Starts uniform and learns counts as symbols are coded; encoder and
    decoder must walk through identical update sequences. The small
    default increment keeps the steady-state estimation noise low.
    """

    def __init__(self, num_symbols: int, increment: int = 2, cap: int = 1 << 15):
        if not 2 <= num_symbols <= 1 << 15:
            raise ValueError("alphabet size must lie in [2, 32768]")
        self.freq = [1] * num_symbols
        self.total = num_symbols
        self.increment = increment
        self.cap = cap

    def lookup(self, symbol: int) -> tuple[int, int, int]:
        cum = 0
        for s in range(symbol):
            cum += self.freq[s]
        return cum, self.freq[symbol], self.total

    def find(self, cum_value: int) -> tuple[int, int, int]:
        acc = 0
        for s, f in enumerate(self.freq):
            if acc + f > cum_value:
                return s, acc, f
            acc += f
        raise DecodeError("cumulative frequency out of range", -1)

    def update(self, symbol: int) -> None:
        self.freq[symbol] += self.increment
        self.total += self.increment
        if self.total > self.cap:
            total = 0
            for s, f in enumerate(self.freq):
                f = (f + 1) >> 1
                self.freq[s] = f
                total += f
            self.total = total


def range_code(symbols, model: AdaptiveSymbolModel) -> bytes:
    """Losslessly code a symbol sequence with an adaptive model.

    The stream is self-terminating: a 16-bit end marker follows the last
    symbol so corruption and truncation are detected on decode.
    """
    enc = _entropy_py.RangeEncoder()
    for sym in symbols:
        cum, freq, tot = model.lookup(int(sym))
        enc.encode(cum, freq, tot)
        model.update(int(sym))
    enc.encode(_END_MARKER, 1, 1 << 16)
    return enc.finish()


def range_decode(data: bytes, n: int, model: AdaptiveSymbolModel) -> list[int]:
    """Decode ``n`` symbols coded by :func:`range_code` with a fresh model."""
    dec = _entropy_py.RangeDecoder(data)
    out = []
    for _ in range(n):
        cum_value = dec.decode_cum(model.total)
        sym, cum, freq = model.find(cum_value)
        dec.update(cum, freq, model.total)
        model.update(sym)
        out.append(sym)
    marker = dec.decode_cum(1 << 16)
    if marker != _END_MARKER:
        raise DecodeError("corrupt range-coded stream (end marker mismatch)", dec.pos)
    dec.update(marker, 1, 1 << 16)
    return out


def ideal_bits(symbols, num_symbols: int, increment: int = 2, cap: int = 1 << 15) -> float:
    """Information content of a sequence under the adaptive model itself."""
    model = AdaptiveSymbolModel(num_symbols, increment, cap)
    bits = 0.0
    for sym in symbols:
        _, freq, tot = model.lookup(int(sym))
        bits += math.log2(tot / freq)
        model.update(int(sym))
    return bits
