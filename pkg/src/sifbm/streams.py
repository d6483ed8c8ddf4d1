"""Counter-based random streams (Philox4x64-10) and the normal transform.

Every random draw in this package comes from a keyed Philox4x64-10 stream:
a stream is addressed by two 64-bit key words ``(key, index)`` and produces
64-bit words block by block, so draws are reproducible, order-independent
and safe to generate in parallel.  Standard normals are obtained from the
uniforms by the Box-Muller transform.  Both choices are fixed; changing
either would invalidate persisted golden outputs.

The generator is the Random123 philox4x64 with 10 rounds.  numpy ships the
same generator (``np.random.Philox``), which the test suite uses as a
known-answer oracle; the local implementation exists so that streams are
vectorized over many keys at once and independent of numpy's stream
stability policy.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
_MASK32 = _U64(0xFFFFFFFF)

# Random123 philox4x64 multipliers and Weyl key increments.
_M0 = _U64(0xD2E7470EE14C6C93)
_M1 = _U64(0xCA5A826395121157)
_W0 = _U64(0x9E3779B97F4A7C15)
_W1 = _U64(0xBB67AE8584CAA73B)

_ROUNDS = 10


def _mulhilo(a, b):
    """Full 64x64 -> 128 bit product as (high, low) uint64 words."""
    a_lo = a & _MASK32
    a_hi = a >> _U64(32)
    b_lo = b & _MASK32
    b_hi = b >> _U64(32)
    lo = a * b
    # Intermediate sums stay below 2**64; no carries are lost.
    t = a_lo * b_hi + ((a_lo * b_lo) >> _U64(32))
    hi = a_hi * b_hi + (t >> _U64(32)) + ((a_hi * b_lo + (t & _MASK32)) >> _U64(32))
    return hi, lo


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Run one philox4x64-10 block; all arguments broadcastable uint64 arrays.

    Returns the four output lanes.  Counter lane 0 is the block index within
    a stream; key lanes address the stream.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.broadcast_to(np.asarray(c1, dtype=np.uint64), c0.shape).copy()
    c2 = np.broadcast_to(np.asarray(c2, dtype=np.uint64), c0.shape).copy()
    c3 = np.broadcast_to(np.asarray(c3, dtype=np.uint64), c0.shape).copy()
    k0 = np.broadcast_to(np.asarray(k0, dtype=np.uint64), c0.shape).copy()
    k1 = np.broadcast_to(np.asarray(k1, dtype=np.uint64), c0.shape).copy()
    with np.errstate(over="ignore"):
        for _ in range(_ROUNDS):
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def raw_words(key, index, count):
    """First `count` 64-bit words of the stream keyed (key, index).

    `index` may be an array; the result then has shape (len(index), count)
    with each row an independent stream.
    """
    key = int(key) & 0xFFFFFFFFFFFFFFFF
    idx = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    scalar = np.isscalar(index) or np.asarray(index).ndim == 0
    blocks = (count + 3) // 4
    c0 = np.broadcast_to(np.arange(blocks, dtype=np.uint64), (idx.size, blocks))
    zero = np.zeros_like(c0)
    lanes = philox4x64(c0, zero, zero, zero, _U64(key), idx[:, None])
    out = np.stack(lanes, axis=-1).reshape(idx.size, 4 * blocks)[:, :count]
    return out[0] if scalar else out


def uniforms(key, index, count):
    """Uniform [0, 1) doubles (53-bit mantissa) from the keyed stream."""
    return (raw_words(key, index, count) >> _U64(11)).astype(np.float64) * 2.0**-53


def standard_normals(key, index, count):
    """Standard normals via Box-Muller on consecutive uniform pairs.

    Uniform 2j feeds the radius (shifted into (0, 1] so the log is finite),
    uniform 2j+1 the angle; the pair yields normals 2j and 2j+1.
    """
    pairs = (count + 1) // 2
    u = uniforms(key, index, 2 * pairs)
    u = u.reshape(-1, 2 * pairs)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0::2]))
    angle = 2.0 * np.pi * u[:, 1::2]
    z = np.empty((u.shape[0], 2 * pairs))
    z[:, 0::2] = radius * np.cos(angle)
    z[:, 1::2] = radius * np.sin(angle)
    z = z[:, :count]
    scalar = np.isscalar(index) or np.asarray(index).ndim == 0
    return z[0] if scalar else z
