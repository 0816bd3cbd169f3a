# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_entropy_py``.

Byte-identical to the pure-Python coder; see that module for the contract.
"""
from libc.stdlib cimport free, malloc, realloc
from libc.math cimport log2

cdef extern from "Python.h":
    bytes PyBytes_FromStringAndSize(const char *s, Py_ssize_t len)

cdef unsigned long long MASK = 0xFFFFFFFFULL
cdef unsigned long long TOP = 1ULL << 24
cdef unsigned long long BOT = 1ULL << 16

cdef int CTX_INIT = 1
cdef int CTX_INC = 32
cdef int CTX_CAP = 4096
cdef int NUM_PREFIX_CTX = 8


cdef struct ByteBuf:
    unsigned char *data
    Py_ssize_t size
    Py_ssize_t cap


cdef int buf_init(ByteBuf *b, Py_ssize_t cap) except -1:
    b.data = <unsigned char *> malloc(cap)
    if b.data == NULL:
        raise MemoryError()
    b.size = 0
    b.cap = cap
    return 0


cdef inline int buf_push(ByteBuf *b, unsigned char byte) except -1:
    cdef unsigned char *grown
    if b.size == b.cap:
        grown = <unsigned char *> realloc(b.data, b.cap * 2)
        if grown == NULL:
            raise MemoryError()
        b.data = grown
        b.cap *= 2
    b.data[b.size] = byte
    b.size += 1
    return 0


cdef struct Coder:
    unsigned long long low
    unsigned long long rng
    unsigned long long code
    const unsigned char *inp
    Py_ssize_t inp_len
    Py_ssize_t pos
    unsigned long long r


cdef inline int enc_put(Coder *c, ByteBuf *out, unsigned long long cum,
                        unsigned long long freq, unsigned long long tot) except -1:
    cdef unsigned long long r = c.rng / tot
    c.low += r * cum
    if cum + freq == tot:
        c.rng -= r * cum
    else:
        c.rng = r * freq
    while True:
        if ((c.low ^ (c.low + c.rng)) < TOP):
            pass
        elif c.rng < BOT:
            c.rng = (MASK + 1 - c.low) & (BOT - 1)
        else:
            break
        buf_push(out, <unsigned char> ((c.low >> 24) & 0xFF))
        c.low = (c.low << 8) & MASK
        c.rng = c.rng << 8
    return 0


cdef inline unsigned char dec_next_byte(Coder *c):
    cdef unsigned char b = 0
    if c.pos < c.inp_len:
        b = c.inp[c.pos]
    c.pos += 1
    return b


cdef inline unsigned long long dec_cum(Coder *c, unsigned long long tot):
    c.r = c.rng / tot
    cdef unsigned long long dv = (c.code - c.low) / c.r
    return dv if dv < tot else tot - 1


cdef inline void dec_update(Coder *c, unsigned long long cum,
                            unsigned long long freq, unsigned long long tot):
    cdef unsigned long long r = c.r
    c.low += r * cum
    if cum + freq == tot:
        c.rng -= r * cum
    else:
        c.rng = r * freq
    while True:
        if ((c.low ^ (c.low + c.rng)) < TOP):
            pass
        elif c.rng < BOT:
            c.rng = (MASK + 1 - c.low) & (BOT - 1)
        else:
            break
        c.code = ((c.code << 8) | dec_next_byte(c)) & MASK
        c.low = (c.low << 8) & MASK
        c.rng = c.rng << 8


cdef inline double ctx_encode(Coder *c, ByteBuf *out, int *counts, int bit) except? -1.0:
    cdef int c0 = counts[0]
    cdef int c1 = counts[1]
    cdef int tot = c0 + c1
    cdef double cost
    if bit:
        enc_put(c, out, c0, c1, tot)
        cost = log2(<double> tot / <double> c1)
        counts[1] = c1 + CTX_INC
    else:
        enc_put(c, out, 0, c0, tot)
        cost = log2(<double> tot / <double> c0)
        counts[0] = c0 + CTX_INC
    if counts[0] + counts[1] > CTX_CAP:
        counts[0] = (counts[0] + 1) >> 1
        counts[1] = (counts[1] + 1) >> 1
    return cost


cdef inline int ctx_decode(Coder *c, int *counts):
    cdef int c0 = counts[0]
    cdef int c1 = counts[1]
    cdef int tot = c0 + c1
    cdef int bit = 1 if dec_cum(c, tot) >= <unsigned long long> c0 else 0
    if bit:
        dec_update(c, c0, c1, tot)
        counts[1] = c1 + CTX_INC
    else:
        dec_update(c, 0, c0, tot)
        counts[0] = c0 + CTX_INC
    if counts[0] + counts[1] > CTX_CAP:
        counts[0] = (counts[0] + 1) >> 1
        counts[1] = (counts[1] + 1) >> 1
    return bit


cdef int *alloc_contexts(Py_ssize_t n) except NULL:
    cdef int *ctx = <int *> malloc(n * 2 * sizeof(int))
    if ctx == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    for i in range(n * 2):
        ctx[i] = CTX_INIT
    return ctx


def encode_tokens(const int[::1] values, const unsigned char[::1] class_ids,
                  int n_classes):
    cdef Py_ssize_t n = values.shape[0]
    if class_ids.shape[0] != n:
        raise ValueError("values and class ids must have matching shapes")
    cdef ByteBuf out
    buf_init(&out, 1024 if n < 512 else n * 2)
    cdef int *sig = NULL
    cdef int *pref = NULL
    cdef Coder c
    c.low = 0
    c.rng = MASK
    cdef double bits = 0.0
    cdef Py_ssize_t i
    cdef int v, cls, k, j
    cdef long long m
    cdef bytes payload
    try:
        sig = alloc_contexts(n_classes)
        pref = alloc_contexts(n_classes * NUM_PREFIX_CTX)
        for i in range(n):
            v = values[i]
            cls = class_ids[i]
            if v == 0:
                bits += ctx_encode(&c, &out, sig + 2 * cls, 0)
                continue
            bits += ctx_encode(&c, &out, sig + 2 * cls, 1)
            enc_put(&c, &out, 1 if v < 0 else 0, 1, 2)
            bits += 1.0
            m = (-<long long> v if v < 0 else <long long> v) - 1
            k = 0
            while m >= (1LL << k):
                j = k if k < NUM_PREFIX_CTX else NUM_PREFIX_CTX - 1
                bits += ctx_encode(&c, &out, pref + 2 * (cls * NUM_PREFIX_CTX + j), 1)
                m -= 1LL << k
                k += 1
            j = k if k < NUM_PREFIX_CTX else NUM_PREFIX_CTX - 1
            bits += ctx_encode(&c, &out, pref + 2 * (cls * NUM_PREFIX_CTX + j), 0)
            for j in range(k - 1, -1, -1):
                enc_put(&c, &out, (m >> j) & 1, 1, 2)
                bits += 1.0
        # 2-byte flush: smallest 2^16-aligned value inside [low, low + rng)
        c.low = (c.low + BOT - 1) & ~(BOT - 1)
        buf_push(&out, <unsigned char> ((c.low >> 24) & 0xFF))
        buf_push(&out, <unsigned char> ((c.low >> 16) & 0xFF))
        payload = PyBytes_FromStringAndSize(<const char *> out.data, out.size)
    finally:
        free(out.data)
        free(sig)
        free(pref)
    return payload, bits


def decode_tokens_into(const unsigned char[::1] payload,
                       const unsigned char[::1] class_ids,
                       int[::1] out, int n_classes):
    cdef Py_ssize_t n = out.shape[0]
    if class_ids.shape[0] != n:
        raise ValueError("class ids and output must have matching shapes")
    cdef int *sig = NULL
    cdef int *pref = NULL
    cdef Coder c
    c.low = 0
    c.rng = MASK
    c.code = 0
    c.inp = &payload[0] if payload.shape[0] > 0 else NULL
    c.inp_len = payload.shape[0]
    c.pos = 0
    cdef Py_ssize_t i
    cdef int cls, k, j, neg
    cdef long long m, raw
    for j in range(4):
        c.code = (c.code << 8) | dec_next_byte(&c)
    try:
        sig = alloc_contexts(n_classes)
        pref = alloc_contexts(n_classes * NUM_PREFIX_CTX)
        for i in range(n):
            cls = class_ids[i]
            if ctx_decode(&c, sig + 2 * cls) == 0:
                out[i] = 0
                continue
            neg = <int> dec_cum(&c, 2)
            dec_update(&c, neg, 1, 2)
            k = 0
            m = 0
            while True:
                j = k if k < NUM_PREFIX_CTX else NUM_PREFIX_CTX - 1
                if ctx_decode(&c, pref + 2 * (cls * NUM_PREFIX_CTX + j)) == 0:
                    break
                m += 1LL << k
                k += 1
            raw = 0
            for j in range(k):
                raw = (raw << 1) | <long long> dec_cum(&c, 2)
                dec_update(&c, <unsigned long long> (raw & 1), 1, 2)
            m += raw + 1
            out[i] = <int> (-m if neg else m)
    finally:
        free(sig)
        free(pref)
