"""Counter-based random numbers (Philox4x32-10).

Every random draw in the simulator is a pure function of
``(seed, pulse_index, slot, stream)``. Nothing is carried from one pulse to
the next, so a pulse train can be cut into blocks in any way and handed to
any number of workers without changing a single bit of the output.

Counter layout used throughout the package::

    c0 = pulse_index & 0xFFFFFFFF
    c1 = pulse_index >> 32
    c2 = slot
    c3 = stream id (one of the STREAM_* constants)

The 64-bit seed forms the two-word key.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = 0x9E3779B9
_PHILOX_W1 = 0xBB67AE85
ROUNDS = 10
_CHUNK = 1 << 14

# Stream ids. Keep them stable: changing one changes every simulated stream.
STREAM_PULSE = 0    # slot 0: source + background uniforms; slot 1: dark-count uniform
STREAM_THIN = 1     # attenuator survival, four photons per counter
STREAM_DETECT = 2   # detection survival + channel, two photons per counter
STREAM_DARK = 3     # per-channel ranking for dark clicks, four channels per counter
STREAM_USER = 4     # sequential draws through CounterRNG

_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_M32 = 1.0 / 4294967296.0


def _as_u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.uint64)


def philox4x32(counter, key, rounds: int = ROUNDS):
    """Vectorized Philox4x32 block function.

    Parameters
    ----------
    counter : sequence of four array_like
        The four 32-bit counter words. Broadcast against each other.
    key : tuple of two int
        The two 32-bit key words.

    Returns
    -------
    tuple of four ndarray
        Output words as ``uint64`` arrays holding 32-bit values.
    """
    words = np.broadcast_arrays(*(_as_u64(c) & _MASK32 for c in counter))
    shape = words[0].shape
    flat = [np.ascontiguousarray(w).reshape(-1) for w in words]
    keys = []
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _PHILOX_W0) & 0xFFFFFFFF
            k1 = (k1 + _PHILOX_W1) & 0xFFFFFFFF
        keys.append((np.uint64(k0), np.uint64(k1)))

    n = flat[0].size
    out = [np.empty(n, dtype=np.uint64) for _ in range(4)]
    # cache-sized chunks with in-place updates: about 4x faster than whole-array temporaries
    for a in range(0, n, _CHUNK):
        b = min(a + _CHUNK, n)
        c0, c1, c2, c3 = (f[a:b].copy() for f in flat)
        p0, p1 = np.empty_like(c0), np.empty_like(c0)
        for kk0, kk1 in keys:
            np.multiply(c0, _PHILOX_M0, out=p0)
            np.multiply(c2, _PHILOX_M1, out=p1)
            np.right_shift(p1, _SHIFT32, out=c0)
            c0 ^= c1
            c0 ^= kk0
            np.bitwise_and(p1, _MASK32, out=c1)
            np.right_shift(p0, _SHIFT32, out=c2)
            c2 ^= c3
            c2 ^= kk1
            np.bitwise_and(p0, _MASK32, out=c3)
        for o, c in zip(out, (c0, c1, c2, c3)):
            o[a:b] = c
    return tuple(o.reshape(shape) for o in out)


def split_seed(seed: int) -> tuple[int, int]:
    """Split a 64-bit seed into the two Philox key words."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def to_unit53(hi_word, lo_word) -> np.ndarray:
    """Combine two 32-bit words into a uniform double on [0, 1) with 53 bits."""
    hi = _as_u64(hi_word) >> np.uint64(5)
    lo = _as_u64(lo_word) >> np.uint64(6)
    return ((hi << np.uint64(26)) | lo).astype(np.float64) * _TWO_M53


def to_unit32(word) -> np.ndarray:
    """Map one 32-bit word to a uniform double on [0, 1)."""
    return _as_u64(word).astype(np.float64) * _TWO_M32


def bounded(word, n: int) -> np.ndarray:
    """Map 32-bit words onto ``0..n-1`` by multiply-shift."""
    return (_as_u64(word) * np.uint64(n)) >> _SHIFT32


class Philox:
    """Philox4x32-10 keyed by a 64-bit seed.

    The object is immutable and cheap; sharing one instance between threads
    is safe.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.key = split_seed(seed)

    def __repr__(self):
        return f"Philox(seed={self.seed})"

    def words(self, pulse_index, slot, stream: int):
        """Raw output words for the given pulse indices, slots and stream."""
        idx = _as_u64(pulse_index)
        return philox4x32(
            (idx & _MASK32, idx >> _SHIFT32, _as_u64(slot), np.uint64(stream)),
            self.key,
        )

    def pulse_uniforms(self, pulse_index) -> tuple[np.ndarray, np.ndarray]:
        """The two 53-bit uniforms every pulse owns (source draw, background draw)."""
        w0, w1, w2, w3 = self.words(pulse_index, 0, STREAM_PULSE)
        return to_unit53(w0, w1), to_unit53(w2, w3)

    def dark_uniform(self, pulse_index) -> np.ndarray:
        w0, w1, _, _ = self.words(pulse_index, 1, STREAM_PULSE)
        return to_unit53(w0, w1)


@dataclass(frozen=True)
class PulseKey:
    """Randomness handle for one pulse: the seed plus the pulse ordinal."""

    seed: int
    pulse_index: int

    @property
    def generator(self) -> Philox:
        return Philox(self.seed)


class CounterRNG:
    """Sequential uniforms drawn from a private Philox stream.

    Convenience for callers that want a stream of numbers rather than
    per-pulse addressing. Two instances with the same seed produce the same
    sequence; the position is just a counter.
    """

    def __init__(self, seed: int, position: int = 0):
        self._gen = Philox(seed)
        self.position = int(position)

    @property
    def seed(self) -> int:
        return self._gen.seed

    def random(self, size=None):
        """Uniform doubles on [0, 1). Returns a float when ``size`` is None."""
        n = 1 if size is None else int(np.prod(size))
        ctr = np.arange(self.position, self.position + n, dtype=np.uint64)
        self.position += n
        w0, w1, _, _ = self._gen.words(ctr, 0, STREAM_USER)
        u = to_unit53(w0, w1)
        if size is None:
            return float(u[0])
        return u.reshape(size)
