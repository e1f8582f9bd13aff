"""Multiplexed array of binary single-photon detectors.

Photon model: every photon in a pulse independently survives with
probability ``eta`` and lands on one of the ``m_channels`` channels chosen
uniformly at random. A channel clicks when at least one photon reaches it.
On top of that, each channel fires a dark click with probability
``dark_prob`` per pulse. A channel clicks at most once per pulse, so the
outcome of a pulse is a channel bitmask.

The analytic counterpart, :func:`clipping_transform`, pushes a
photon-number distribution through the same model and returns the
distribution of the number of clicks. It explains the pile-up at ``k = M``
("upturned tail") that appears when pulses carry more photons than there
are channels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .clickstream import MAX_CHANNELS, ClickStream
from .errors import DomainError
from .rng import STREAM_DARK, STREAM_DETECT, Philox, PulseKey, bounded, to_unit32
from .statmodels import PhotonNumberDistribution, from_ln_weights


@dataclass(frozen=True)
class DetectorArrayConfig:
    m_channels: int = 31
    eta: float = 0.6
    dark_prob: float = 1e-6

    def __post_init__(self):
        if isinstance(self.m_channels, bool) or int(self.m_channels) != self.m_channels:
            raise DomainError("m_channels must be an integer")
        if not 1 <= self.m_channels <= MAX_CHANNELS:
            raise DomainError(f"m_channels must be in 1..{MAX_CHANNELS}, got {self.m_channels}")
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must be in [0, 1], got {self.eta}")
        if not 0.0 <= self.dark_prob < 1.0:
            raise DomainError(f"dark_prob must be in [0, 1), got {self.dark_prob}")


@dataclass(frozen=True)
class ClickPattern:
    bitmask: int
    pulse_index: int

    @property
    def clicks(self) -> int:
        return int(self.bitmask).bit_count()

    def channels(self) -> list[int]:
        return [c for c in range(MAX_CHANNELS) if self.bitmask >> c & 1]


# --- Monte Carlo ------------------------------------------------------------

def _photon_ordinals(counts: np.ndarray) -> np.ndarray:
    """0, 1, .., c-1 for each entry of ``counts``, concatenated."""
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    return np.arange(total, dtype=np.int64) - np.repeat(starts, counts)


def _or_into(masks: np.ndarray, rows: np.ndarray, bits: np.ndarray) -> None:
    """``masks[rows] |= bits`` with repeated rows; ``rows`` must be sorted."""
    if rows.size == 0:
        return
    starts = np.concatenate([[0], np.flatnonzero(np.diff(rows)) + 1])
    masks[rows[starts]] |= np.bitwise_or.reduceat(bits, starts)


@lru_cache(maxsize=64)
def _dark_cdf(m: int, p: float) -> np.ndarray:
    # Binomial(m, p) for the number of dark clicks on an otherwise idle array
    return np.cumsum(np.exp(ln_dark_kernel(m, p)[0]))


def detect_batch(gen: Philox, pulse_index: np.ndarray, n_photons: np.ndarray, config: DetectorArrayConfig) -> np.ndarray:
    """Click bitmasks for a batch of pulses.

    Photon ``j`` of pulse ``i`` draws from counter ``(i, j // 2, STREAM_DETECT)``,
    so the result for a pulse depends only on the seed, its index and its
    photon number.
    """
    m = config.m_channels
    pulse_index = np.asarray(pulse_index, dtype=np.uint64)
    n_photons = np.asarray(n_photons, dtype=np.int64)
    masks = np.zeros(pulse_index.size, dtype=np.uint32)

    hit = np.flatnonzero(n_photons)
    if hit.size and config.eta > 0.0:
        counts = n_photons[hit]
        owner = np.repeat(hit, counts)
        j = _photon_ordinals(counts)
        w0, w1, w2, w3 = gen.words(pulse_index[owner], j >> 1, STREAM_DETECT)
        odd = (j & 1).astype(bool)
        survive = to_unit32(np.where(odd, w2, w0)) < config.eta
        chan = bounded(np.where(odd, w3, w1), m)[survive]
        _or_into(masks, owner[survive], (np.uint64(1) << chan).astype(np.uint32))

    if config.dark_prob > 0.0:
        u = gen.dark_uniform(pulse_index)
        k = np.minimum(np.searchsorted(_dark_cdf(m, config.dark_prob), u, side="right"), m)
        noisy = np.flatnonzero(k)
        if noisy.size:
            keys = np.empty((noisy.size, m), dtype=np.uint64)
            for slot in range((m + 3) // 4):
                words = gen.words(pulse_index[noisy], slot, STREAM_DARK)
                for w in range(4):
                    c = 4 * slot + w
                    if c < m:
                        keys[:, c] = words[w]
            order = np.argsort(keys, axis=1, kind="stable")
            chosen = np.arange(m)[None, :] < k[noisy][:, None]
            rows = np.broadcast_to(noisy[:, None], order.shape)[chosen]
            bits = (np.uint64(1) << order[chosen].astype(np.uint64)).astype(np.uint32)
            _or_into(masks, rows, bits)
    return masks


def detect_pulse(n_photons: int, config: DetectorArrayConfig, rng_state: PulseKey) -> ClickPattern:
    """Detect one pulse carrying ``n_photons`` photons.

    Bit-identical to what :func:`sbl.simulator.run` produces for the same
    seed, pulse index and photon number.
    """
    if n_photons < 0:
        raise DomainError("photon number must be non-negative")
    mask = detect_batch(
        rng_state.generator, np.array([rng_state.pulse_index], dtype=np.uint64), np.array([n_photons]), config
    )
    return ClickPattern(int(mask[0]), int(rng_state.pulse_index))


# --- analytic clipping transform --------------------------------------------

@lru_cache(maxsize=32)
def ln_clipping_kernel(n_max: int, m: int, eta: float) -> np.ndarray:
    """Natural-log ``P(k clicks | n photons)`` for ``n = 0..n_max``, ``k = 0..m``.

    Built photon by photon: a new photon is lost, joins an already-firing
    channel, or lights a fresh one. Every transition weight is
    non-negative, so there is no cancellation even for ``n`` in the
    thousands. Equivalent to the inclusion-exclusion sum
    ``C(m,k) sum_j (-1)^j C(k,j) (1 - eta + eta (k-j)/m)^n``.
    """
    k = np.arange(m + 1, dtype=float)
    with np.errstate(divide="ignore"):
        ln_stay = np.log((1.0 - eta) + eta * k / m)
        ln_move = np.log(eta * (m - k) / m)
    out = np.full((n_max + 1, m + 1), -np.inf)
    row = out[0]
    row[0] = 0.0
    for n in range(1, n_max + 1):
        new = row + ln_stay
        new[1:] = np.logaddexp(new[1:], row[:-1] + ln_move[:-1])
        out[n] = new
        row = new
    out.setflags(write=False)
    return out


def clipping_kernel_exact(n_max: int, m: int, eta) -> list[list[Fraction]]:
    """Same recursion as :func:`ln_clipping_kernel` in exact rational arithmetic."""
    eta = Fraction(eta)
    row = [Fraction(1)] + [Fraction(0)] * m
    table = [row]
    for _ in range(n_max):
        new = [row[k] * (1 - eta + eta * Fraction(k, m)) for k in range(m + 1)]
        for k in range(1, m + 1):
            new[k] += row[k - 1] * eta * Fraction(m - k + 1, m)
        table.append(new)
        row = new
    return table


def ln_dark_kernel(m: int, dark_prob: float) -> np.ndarray:
    """``P(k' clicks | k photon clicks)``: the ``m - k`` idle channels fire independently."""
    out = np.full((m + 1, m + 1), -np.inf)
    if dark_prob == 0.0:
        np.fill_diagonal(out, 0.0)
        return out
    lp, lq = math.log(dark_prob), math.log1p(-dark_prob)
    for k in range(m + 1):
        free = m - k
        d = np.arange(free + 1, dtype=float)
        out[k, k:] = gammaln(free + 1.0) - gammaln(d + 1.0) - gammaln(free - d + 1.0) + d * lp + (free - d) * lq
    return out


def clipping_transform(dist: PhotonNumberDistribution, config: DetectorArrayConfig) -> PhotonNumberDistribution:
    """Distribution of the click count (support ``0..m_channels``) for photons drawn from ``dist``."""
    m = config.m_channels
    kernel = ln_clipping_kernel(dist.n_max, m, float(config.eta))
    ln_clicks = logsumexp(dist.ln_weights[:, None] + kernel, axis=0)
    if config.dark_prob > 0.0:
        ln_clicks = logsumexp(ln_clicks[:, None] + ln_dark_kernel(m, config.dark_prob), axis=0)
    return from_ln_weights("composite", dist.realized_mean * config.eta, ln_clicks)


def subset_channels(stream: ClickStream, m_sub: int) -> ClickStream:
    """Keep only the first ``m_sub`` channels of every pattern."""
    if isinstance(m_sub, bool) or int(m_sub) != m_sub:
        raise DomainError("m_sub must be an integer")
    if not 1 <= m_sub <= stream.m_channels:
        raise DomainError(f"m_sub must be in 1..{stream.m_channels}, got {m_sub}")
    keep = np.uint32((1 << m_sub) - 1)
    return ClickStream(stream.masks & keep, m_sub, stream.pulse_period_ps, stream.pulse_index)
