"""Correlation estimators on click streams and on pmfs.

All stream estimators run off one integer accumulator,
:class:`ClickMoments`: per jackknife block, the histogram of clicks per
pulse and the sums of ``k_i * k_{i+lag}``. Partial accumulators from any
partition of the pulse train add up to the same integers, so estimates are
bit-identical however the work is split. Ratios are formed with
:class:`fractions.Fraction` and rounded once at the end.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .clickstream import MAX_CHANNELS, ClickStream, click_counts
from .errors import DegenerateDataError, DomainError, UndefinedRatioError
from .statmodels import PhotonNumberDistribution, from_probabilities
from .statmodels.io import format_float

N_BLOCKS = 100
NORMALIZATIONS = ("counts", "channels")
_HIST = MAX_CHANNELS + 1


@dataclass(frozen=True)
class CorrelationEstimate:
    order: int
    value: float
    std_error: float
    pulses_used: int


@dataclass(frozen=True)
class CorrelationTrace:
    """g2 at lags ``-K..K`` pulse periods."""

    lag_period: int
    lags: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray

    @property
    def zero_lag(self) -> float:
        return float(self.values[self.lags.size // 2])

    def side_peaks(self) -> np.ndarray:
        return self.values[self.lags != 0]


@dataclass(frozen=True)
class ZetaResult:
    n: int
    log10_zeta: float
    i_tag: str
    j_tag: str


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    std_error: float
    pulses: int


# --- accumulator ------------------------------------------------------------

def _block_bounds(pulses: int, n_blocks: int) -> np.ndarray:
    """Start position of each block plus the final end: block b = [b*P//B, (b+1)*P//B)."""
    b = np.arange(n_blocks + 1, dtype=np.int64)
    return b * pulses // n_blocks


def _block_of(pos: np.ndarray, pulses: int, n_blocks: int) -> np.ndarray:
    # inverse of _block_bounds: largest b with b*P//B <= pos
    return ((pos.astype(np.int64) + 1) * n_blocks - 1) // pulses


@dataclass
class ClickMoments:
    """Integer sufficient statistics of a pulse train, split into jackknife blocks."""

    pulses: int
    n_blocks: int
    max_lag: int
    hist: np.ndarray  # (n_blocks, 33): pulses with k clicks, per block
    lag_sums: np.ndarray  # (n_blocks, max_lag): sum of k_i k_{i+lag}, pair assigned to the block of i
    m_channels: int

    @classmethod
    def empty(cls, pulses: int, max_lag: int, m_channels: int, n_blocks: int = N_BLOCKS):
        nb = max(1, min(n_blocks, pulses))
        return cls(
            pulses,
            nb,
            max_lag,
            np.zeros((nb, _HIST), dtype=np.int64),
            np.zeros((nb, max_lag), dtype=np.int64),
            m_channels,
        )

    def __add__(self, other: "ClickMoments") -> "ClickMoments":
        if (self.pulses, self.n_blocks, self.max_lag) != (other.pulses, other.n_blocks, other.max_lag):
            raise ValueError("can only merge accumulators built for the same stream layout")
        return ClickMoments(
            self.pulses,
            self.n_blocks,
            self.max_lag,
            self.hist + other.hist,
            self.lag_sums + other.lag_sums,
            self.m_channels,
        )

    @property
    def total_hist(self) -> np.ndarray:
        return self.hist.sum(axis=0)

    def block_sizes(self) -> np.ndarray:
        return np.diff(_block_bounds(self.pulses, self.n_blocks))

    def pair_counts(self) -> np.ndarray:
        """(n_blocks, max_lag): pairs ``(i, i+lag)`` whose first element sits in each block."""
        bounds = _block_bounds(self.pulses, self.n_blocks)
        lags = np.arange(1, self.max_lag + 1)
        last = self.pulses - lags  # first elements must be < P - lag
        lo, hi = bounds[:-1, None], bounds[1:, None]
        return np.clip(np.minimum(hi, last[None, :]) - lo, 0, None)


def _segment_sums(values: np.ndarray, blocks: np.ndarray, n_blocks: int) -> np.ndarray:
    """Integer sums of ``values`` grouped by the (sorted) ``blocks`` ids."""
    out = np.zeros(n_blocks, dtype=np.int64)
    if values.size == 0:
        return out
    starts = np.concatenate([[0], np.flatnonzero(np.diff(blocks)) + 1])
    out[blocks[starts]] = np.add.reduceat(values, starts)
    return out


def _accumulate_range(k: np.ndarray, start: int, stop: int, acc: ClickMoments) -> ClickMoments:
    """Contributions of first-element positions ``start..stop-1``."""
    P, B = acc.pulses, acc.n_blocks
    part = ClickMoments.empty(P, acc.max_lag, acc.m_channels, B)
    nz = np.flatnonzero(k[start:stop]) + start
    kn = k[nz]
    blk = _block_of(nz, P, B)
    flat = np.bincount(blk * _HIST + kn, minlength=B * _HIST).reshape(B, _HIST)
    # zero-click pulses are whatever this range contributes to a block minus the rest
    bounds = _block_bounds(P, B)
    in_range = np.clip(np.minimum(bounds[1:], stop) - np.maximum(bounds[:-1], start), 0, None)
    flat[:, 0] = in_range - flat[:, 1:].sum(axis=1)
    part.hist[:] = flat
    for lag in range(1, acc.max_lag + 1):
        sel = nz < P - lag
        i = nz[sel]
        part.lag_sums[:, lag - 1] = _segment_sums(kn[sel] * k[i + lag], blk[sel], B)
    return part


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get("SBL_THREADS", "1") or 1)
    return max(1, int(workers))


def accumulate(
    stream: ClickStream,
    max_lag: int = 0,
    workers: int | None = None,
    chunk_size: int | None = None,
    n_blocks: int = N_BLOCKS,
) -> ClickMoments:
    """Build the accumulator, optionally splitting positions across threads."""
    P = len(stream)
    if P == 0:
        raise DegenerateDataError("empty click stream")
    if max_lag < 0:
        raise DomainError("max_lag must be >= 0")
    if max_lag >= P:
        raise DomainError(f"max_lag {max_lag} must be smaller than the stream length {P}")
    k = stream.counts()
    acc = ClickMoments.empty(P, max_lag, stream.m_channels, n_blocks)
    workers = resolve_workers(workers)
    if chunk_size is None:
        chunk_size = max(1, -(-P // workers)) if workers > 1 else P
    ranges = [(a, min(a + chunk_size, P)) for a in range(0, P, chunk_size)]
    if workers == 1 or len(ranges) == 1:
        parts = [_accumulate_range(k, a, b, acc) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda r: _accumulate_range(k, r[0], r[1], acc), ranges))
    for part in parts:
        acc = acc + part
    return acc


# --- zero-lag estimators ----------------------------------------------------

def _falling(k: int, r: int) -> int:
    out = 1
    for i in range(r):
        out *= k - i
    return out


def _factorial_moments(hist: np.ndarray, order: int) -> tuple[int, int, int]:
    """(pulses, sum of k, sum of k^(order)) as exact Python integers."""
    h = [int(x) for x in hist]
    pulses = sum(h)
    f1 = sum(k * c for k, c in enumerate(h))
    fn = sum(_falling(k, order) * c for k, c in enumerate(h) if k >= order)
    return pulses, f1, fn


def channel_factor(m_channels: int, order: int) -> Fraction:
    """``M^N (M-N)! / M!``: converts click factorial moments into distinct-channel coincidences."""
    if order > m_channels:
        raise DomainError(f"order {order} exceeds the {m_channels} available channels")
    return Fraction(m_channels**order, _falling(m_channels, order))


def _g_from_hist(hist, order: int, factor: Fraction) -> Fraction | None:
    pulses, f1, fn = _factorial_moments(hist, order)
    if f1 == 0:
        return None
    return Fraction(fn * pulses ** (order - 1), f1**order) * factor


def _jackknife(full: Fraction, replicates: Sequence[Fraction | None]) -> float:
    vals = [float(r) for r in replicates if r is not None]
    b = len(vals)
    if b < 2:
        # too few usable blocks to say anything about the spread
        return math.inf
    mean = math.fsum(vals) / b
    return math.sqrt((b - 1) / b * math.fsum((v - mean) ** 2 for v in vals))


def gN_from_moments(acc: ClickMoments, order: int, normalization: str = "counts") -> CorrelationEstimate:
    if order < 2:
        raise DomainError("correlation order must be >= 2")
    if normalization not in NORMALIZATIONS:
        raise DomainError(f"normalization must be one of {NORMALIZATIONS}")
    factor = channel_factor(acc.m_channels, order) if normalization == "channels" else Fraction(1)
    total = acc.total_hist
    g = _g_from_hist(total, order, factor)
    if g is None:
        raise DegenerateDataError("no clicks in the stream; g^(N) is undefined")
    if g == 0:
        return CorrelationEstimate(order, 0.0, 0.0, acc.pulses)
    reps = [_g_from_hist(total - acc.hist[b], order, factor) for b in range(acc.n_blocks)]
    return CorrelationEstimate(order, float(g), _jackknife(g, reps), acc.pulses)


def gN_zero_from_clicks(
    stream: ClickStream, order: int, normalization: str = "counts", workers: int | None = None
) -> CorrelationEstimate:
    """Zero-delay ``g^(N)`` from clicks per pulse.

    ``normalization="counts"`` gives ``<k^(N)> / <k>^N`` with ``k`` the
    click count and ``k^(N)`` its falling factorial. Clipping in a finite
    array is not corrected.

    ``normalization="channels"`` multiplies by ``M^N (M-N)!/M!``, i.e.
    coincidences between N distinct channels over the product of their
    singles rates. This removes the ``(M-1)/M``-type deficit that the plain
    form shows even for coherent light on a multiplexed array.

    The uncertainty is a 100-block jackknife.
    """
    return gN_from_moments(accumulate(stream, 0, workers), order, normalization)


def gN_estimates(
    stream: ClickStream,
    orders: Iterable[int] = (2, 3, 4, 5),
    normalization: str = "counts",
    workers: int | None = None,
) -> list[CorrelationEstimate]:
    acc = accumulate(stream, 0, workers)
    return [gN_from_moments(acc, o, normalization) for o in orders]


# --- lagged correlation -----------------------------------------------------

def _lag_value(s_lag: int, pairs: int, pulses: int, f1: int) -> Fraction | None:
    if pairs <= 0 or f1 == 0:
        return None
    return Fraction(s_lag * pulses * pulses, pairs * f1 * f1)


def trace_from_moments(acc: ClickMoments, lag_period: int, normalization: str = "counts") -> CorrelationTrace:
    K = acc.max_lag
    zero = gN_from_moments(acc, 2, normalization)
    pairs = acc.pair_counts()
    hist = acc.hist
    ks = np.arange(_HIST)
    f1_block = [int(x) for x in (hist * ks).sum(axis=1)]
    p_block = [int(x) for x in hist.sum(axis=1)]
    f1, P = sum(f1_block), acc.pulses
    side_vals, side_err = [], []
    for lag in range(1, K + 1):
        s = [int(x) for x in acc.lag_sums[:, lag - 1]]
        pr = [int(x) for x in pairs[:, lag - 1]]
        S, PR = sum(s), sum(pr)
        full = _lag_value(S, PR, P, f1)
        reps = [
            _lag_value(S - s[b], PR - pr[b], P - p_block[b], f1 - f1_block[b]) for b in range(acc.n_blocks)
        ]
        side_vals.append(float(full))
        side_err.append(_jackknife(full, reps))
    lags = np.arange(-K, K + 1)
    values = np.array(side_vals[::-1] + [zero.value] + side_vals)
    errors = np.array(side_err[::-1] + [zero.std_error] + side_err)
    return CorrelationTrace(int(lag_period), lags, values, errors)


def g2_tau(
    stream: ClickStream, max_lag: int, normalization: str = "counts", workers: int | None = None
) -> CorrelationTrace:
    """g2 at lags ``k T`` for ``k = -max_lag..max_lag``.

    Side peaks are ``<k_i k_{i+lag}> / <k>^2`` with ``<k>`` over the whole
    stream; they sit at 1 for any train of independent pulses. The zero-lag
    entry is the order-2 factorial-moment estimate from the same accumulator.
    """
    if max_lag >= len(stream):
        raise DomainError(f"max_lag {max_lag} must be smaller than the stream length {len(stream)}")
    acc = accumulate(stream, max_lag, workers)
    return trace_from_moments(acc, stream.pulse_period_ps, normalization)


# --- distributions and ratios -----------------------------------------------

def empirical_pmf(stream: ClickStream, m_channels: int | None = None) -> PhotonNumberDistribution:
    """Fraction of pulses with exactly k clicks, k = 0..m_channels; unseen k stay exact zeros."""
    m = stream.m_channels if m_channels is None else int(m_channels)
    if not 1 <= m <= MAX_CHANNELS:
        raise DomainError(f"m_channels must be in 1..{MAX_CHANNELS}")
    if len(stream) == 0:
        raise DegenerateDataError("empty click stream")
    if m < 32 and (stream.masks >> np.uint32(m)).any():
        raise DomainError(f"stream has clicks on channels >= {m}")
    hist = np.bincount(click_counts(stream.masks), minlength=m + 1)
    return from_probabilities(hist / hist.sum())


def click_histogram(stream: ClickStream) -> np.ndarray:
    return np.bincount(stream.counts(), minlength=stream.m_channels + 1)


def estimate_mean_photons(stream: ClickStream) -> MeanEstimate:
    """Mean clicks per pulse with its standard error (clicks stand in for photons at <n> << 1)."""
    P = len(stream)
    if P == 0:
        raise DegenerateDataError("empty click stream")
    k = stream.counts()
    total, sq = int(k.sum()), int((k * k).sum())
    mean = total / P
    var = max(sq / P - mean * mean, 0.0)
    return MeanEstimate(mean, math.sqrt(var / P), P)


def zeta_ratio(log_p_i: float, log_p_j: float, n: int, i_tag: str = "i", j_tag: str = "j") -> ZetaResult:
    """log10 of ``P_i(n) / P_j(n)``, formed as a difference of logs."""
    if not (math.isfinite(log_p_i) and math.isfinite(log_p_j)):
        raise UndefinedRatioError(f"ratio at n={n} involves a zero probability")
    return ZetaResult(int(n), float(log_p_i) - float(log_p_j), i_tag, j_tag)


def fit_log_linear(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares line through ``(N, ln g)``. Returns ``(intercept, slope)`` in natural log."""
    pts = list(points)
    if len(pts) < 2 or len({p[0] for p in pts}) < 2:
        raise DomainError("need at least two distinct orders for a line fit")
    x = np.array([float(p[0]) for p in pts])
    y = np.array([float(p[1]) for p in pts])
    if (y <= 0).any() or not np.isfinite(y).all():
        raise DomainError("correlation values must be positive and finite")
    slope, intercept = np.polyfit(x, np.log(y), 1)
    return float(intercept), float(slope)


# --- tables -----------------------------------------------------------------

def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def gn_table(estimates: Iterable[CorrelationEstimate]) -> str:
    return _csv(
        ([e.order, format_float(e.value), format_float(e.std_error), e.pulses_used] for e in estimates),
        ["order", "value", "std_error", "pulses"],
    )


def trace_table(trace: CorrelationTrace) -> str:
    return _csv(
        ([int(k), int(k) * trace.lag_period, format_float(v)] for k, v in zip(trace.lags, trace.values)),
        ["lag_index", "lag_ps", "g2"],
    )


def read_gn_table(text: str) -> list[CorrelationEstimate]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        CorrelationEstimate(int(r["order"]), float(r["value"]), float(r["std_error"]), int(r["pulses"]))
        for r in rows
    ]
