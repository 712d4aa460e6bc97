"""Two-stage lossless coder: LZ77 tokenisation followed by adaptive range coding.

Stream layout::

    u32 LE   original length
    bytes    range-coded token stream

Tokens are coded with binary adaptive models (frequency counts starting
at 64 each, +32 per hit, both halved once their total reaches 2**16):

* a literal/match flag, context = kind of the previous token;
* literal bytes as an 8-step bit tree, context = previous output byte
  (order-1 model);
* match length - 3 (0..255) as an 8-step bit tree;
* match distance - 1 (0..32767) as a 15-step bit tree.

The range coder keeps a 33-bit ``low`` and 32-bit ``range`` with
carry propagation through a cached byte plus a run of pending 0xFF bytes,
renormalising whenever ``range`` drops below 2**24. The encoder flushes
five bytes; the decoder primes itself with five.
"""

from __future__ import annotations

import struct

import numpy as np
from numba import njit

WINDOW = 32768
MIN_MATCH = 3
MAX_MATCH = 258
MAX_CHAIN = 48

_HASH_BITS = 15
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF
_INC = 32
_INIT = 64
_LIMIT = 1 << 16
# no coded bit can carry more than ~2**16 output bytes at the count cap
_MAX_RATIO = 1 << 19


class EntropyDecodeError(ValueError):
    pass


@njit(cache=True)
def _lz77_parse(data, window, min_match, max_match, max_chain):
    n = data.shape[0]
    lengths = np.zeros(n, np.int64)   # 0 marks a literal
    dists = np.zeros(n, np.int64)
    values = np.zeros(n, np.int64)
    head = np.full(1 << _HASH_BITS, -1, np.int64)
    prev = np.full(window, -1, np.int64)
    hmask = (1 << _HASH_BITS) - 1
    count = 0
    pos = 0
    while pos < n:
        best_len = 0
        best_dist = 0
        if pos + min_match <= n:
            h = ((data[pos] << 10) ^ (data[pos + 1] << 5) ^ data[pos + 2]) & hmask
            cand = head[h]
            limit = min(max_match, n - pos)
            chain = 0
            while cand >= 0 and pos - cand <= window and chain < max_chain:
                # cheap reject: a longer match must agree at index best_len
                if data[cand + best_len] == data[pos + best_len]:
                    k = 0
                    while k < limit and data[cand + k] == data[pos + k]:
                        k += 1
                    if k > best_len:
                        best_len = k
                        best_dist = pos - cand
                        if k == limit:
                            break
                cand = prev[cand % window]
                chain += 1
        if best_len >= min_match:
            lengths[count] = best_len
            dists[count] = best_dist
            advance = best_len
        else:
            values[count] = data[pos]
            advance = 1
        count += 1
        # register every covered position in the hash chains
        end = pos + advance
        while pos < end:
            if pos + min_match <= n:
                h = ((data[pos] << 10) ^ (data[pos + 1] << 5) ^ data[pos + 2]) & hmask
                prev[pos % window] = head[h]
                head[h] = pos
            pos += 1
    return lengths[:count], dists[:count], values[:count]


# offsets of each model inside the single count table
_FLAG = 0
_LIT = _FLAG + 2
_LEN = _LIT + 256 * 256
_DIST = _LEN + 256
_NMODELS = _DIST + (1 << 15)


@njit(cache=True, inline="always")
def _update(counts, idx, bit):
    counts[idx, bit] += _INC
    if counts[idx, 0] + counts[idx, 1] >= _LIMIT:
        counts[idx, 0] = (counts[idx, 0] + 1) >> 1
        counts[idx, 1] = (counts[idx, 1] + 1) >> 1


@njit(cache=True)
def _binarize(data, lengths, dists, values):
    """Flatten the token stream into (model index, bit) decisions."""
    total = 0
    for t in range(lengths.shape[0]):
        total += 9 if lengths[t] == 0 else 24
    ctxs = np.empty(total, np.int64)
    bits = np.empty(total, np.int64)
    j = 0
    prev_kind = 0
    pos = 0
    for t in range(lengths.shape[0]):
        length = lengths[t]
        ctxs[j] = _FLAG + prev_kind
        if length == 0:
            bits[j] = 0
            j += 1
            base = _LIT + (data[pos - 1] if pos > 0 else 0) * 256
            nbits, value = 8, values[t]
            pos += 1
            prev_kind = 0
        else:
            bits[j] = 1
            j += 1
            node = 1
            for i in range(7, -1, -1):
                b = ((length - 3) >> i) & 1
                ctxs[j] = _LEN + node
                bits[j] = b
                j += 1
                node = (node << 1) | b
            base, nbits, value = _DIST, 15, dists[t] - 1
            pos += length
            prev_kind = 1
        node = 1
        for i in range(nbits - 1, -1, -1):
            b = (value >> i) & 1
            ctxs[j] = base + node
            bits[j] = b
            j += 1
            node = (node << 1) | b
    return ctxs, bits


@njit(cache=True)
def _range_encode(ctxs, bits, out):
    """Code the decisions into ``out``; returns the byte count (may exceed ``out``)."""
    counts = np.full((_NMODELS, 2), _INIT, np.int64)
    low = 0
    rng = _MASK32
    cache = 0
    csize = 1
    pos = 0
    cap = out.shape[0]
    for t in range(ctxs.shape[0] + 5):
        if t < ctxs.shape[0]:
            idx = ctxs[t]
            bit = bits[t]
            c0 = counts[idx, 0]
            r = rng // (c0 + counts[idx, 1])
            if bit == 0:
                rng = r * c0
            else:
                low += r * c0
                rng -= r * c0
            _update(counts, idx, bit)
            if rng >= _TOP:
                continue
            rng <<= 8
        # shift_low: emit the cached byte once no carry can reach it
        while True:
            if low < 0xFF000000 or low > _MASK32:
                carry = low >> 32
                temp = cache
                while True:
                    if pos < cap:
                        out[pos] = (temp + carry) & 0xFF
                    pos += 1
                    temp = 0xFF
                    csize -= 1
                    if csize == 0:
                        break
                cache = (low >> 24) & 0xFF
            csize += 1
            low = (low & 0x00FFFFFF) << 8
            if t >= ctxs.shape[0] or rng >= _TOP:
                break
            rng <<= 8
    return pos


@njit(cache=True, inline="always")
def _next_byte(src, st):
    p = st[2]
    st[2] = p + 1
    if p < src.shape[0]:
        return src[p]
    st[3] = 1  # overread
    return 0


@njit(cache=True, inline="always")
def _decode_bit(src, st, counts, idx):
    c0 = counts[idx, 0]
    r = st[1] // (c0 + counts[idx, 1])
    bound = r * c0
    if st[0] < bound:
        st[1] = bound
        bit = 0
    else:
        st[0] -= bound
        st[1] -= bound
        bit = 1
    while st[1] < _TOP:
        st[1] <<= 8
        st[0] = ((st[0] << 8) | _next_byte(src, st)) & _MASK32
    _update(counts, idx, bit)
    return bit


@njit(cache=True, inline="always")
def _decode_tree(src, st, counts, base, nbits):
    node = 1
    for _ in range(nbits):
        node = (node << 1) | _decode_bit(src, st, counts, base + node)
    return node - (1 << nbits)


@njit(cache=True)
def _range_decode(src, n):
    """Returns ``(output, status)``; status 0 ok, 1 overread, 2 bad token, 3 trailing bytes."""
    out = np.zeros(n, np.uint8)
    # st: code, range, input position, overread flag
    st = np.zeros(4, np.int64)
    st[1] = _MASK32
    for _ in range(5):
        st[0] = ((st[0] << 8) | _next_byte(src, st)) & _MASK32
    counts = np.full((_NMODELS, 2), _INIT, np.int64)
    prev_kind = 0
    pos = 0
    while pos < n:
        if st[3]:
            return out, 1
        kind = _decode_bit(src, st, counts, _FLAG + prev_kind)
        if kind == 0:
            ctx = out[pos - 1] if pos > 0 else 0
            out[pos] = _decode_tree(src, st, counts, _LIT + np.int64(ctx) * 256, 8)
            pos += 1
        else:
            length = _decode_tree(src, st, counts, _LEN, 8) + 3
            d = _decode_tree(src, st, counts, _DIST, 15) + 1
            if d > pos or pos + length > n:
                return out, 2
            for k in range(length):
                out[pos + k] = out[pos + k - d]
            pos += length
        prev_kind = kind
    if st[3]:
        return out, 1
    if st[2] != src.shape[0]:
        return out, 3
    return out, 0


def entropy_encode(data: bytes) -> bytes:
    """Losslessly compress ``data``; the output starts with its 32-bit length."""
    buf = np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int64)
    n = buf.shape[0]
    if n > _MASK32:
        raise ValueError("input too large for a 32-bit length prefix")
    lengths, dists, values = _lz77_parse(buf, WINDOW, MIN_MATCH, MAX_MATCH, MAX_CHAIN)
    ctxs, bits = _binarize(buf, lengths, dists, values)
    size = n + n // 4 + 64
    while True:
        out = np.zeros(size, np.uint8)
        used = _range_encode(ctxs, bits, out)
        if used <= size:
            break
        size = used
    return struct.pack("<I", n) + out[:used].tobytes()


def entropy_decode(stream: bytes) -> bytes:
    stream = bytes(stream)
    if len(stream) < 4:
        raise EntropyDecodeError("stream shorter than its length prefix")
    (n,) = struct.unpack_from("<I", stream)
    src = np.frombuffer(stream, dtype=np.uint8, offset=4).astype(np.int64)
    if n > 0 and src.shape[0] < 5:
        raise EntropyDecodeError("length prefix mismatch: payload missing")
    if n > _MAX_RATIO * src.shape[0]:
        raise EntropyDecodeError("length prefix mismatch: implausible length for payload size")
    out, status = _range_decode(src, n)
    if status == 1:
        raise EntropyDecodeError("length prefix mismatch: payload exhausted before decoding finished")
    if status == 2:
        raise EntropyDecodeError("corrupt stream: match reaches outside the output")
    if status == 3:
        raise EntropyDecodeError("length prefix mismatch: trailing bytes after decoding finished")
    return out.tobytes()
