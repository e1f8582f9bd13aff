"""Pulse-train Monte Carlo: source, attenuator, background, detector.

Per pulse ``i``::

    N_sig  ~ source pmf                 (u_src of pulse i)
    N_sig' ~ Binomial(N_sig, t)         (STREAM_THIN, one word per photon)
    N_bg   ~ Poisson(background_n_bar)  (u_bg of pulse i)
    mask   = detect(N_sig' + N_bg)      (STREAM_DETECT / STREAM_DARK)

The background is added after the attenuator, so the ND filter does not
touch it. Every draw is addressed by ``(seed, pulse_index)``, so the stream
does not depend on block size or on the number of worker threads.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .clickstream import DEFAULT_PERIOD_PS, MAX_CHANNELS, ClickStream
from .correlator import (
    CorrelationEstimate,
    MeanEstimate,
    accumulate,
    estimate_mean_photons,
    empirical_pmf,
    gN_from_moments,
    resolve_workers,
)
from .detector import DetectorArrayConfig, _photon_ordinals, detect_batch
from .errors import ConfigError, SBLError
from .rng import STREAM_THIN, Philox, to_unit32
from .statmodels import (
    PhotonNumberDistribution,
    PhotonNumberSampler,
    admix_coherent,
    attenuate,
    normalize,
    point_mass,
)

SOURCE_MODELS = ("poisson", "bose_einstein", "bsv", "superbunching", "point")
CLAMP_WARNING_RATE = 1e-6
DEFAULT_BLOCK = 1 << 18
_U64 = 2**64


def _bg_n_max(c: float) -> int:
    # Poisson tail beyond this is far below double resolution of the CDF
    return int(math.ceil(c + 12.0 * math.sqrt(c) + 30.0))


@dataclass(frozen=True)
class SourceSpec:
    """Photon-number source. ``model="point"`` puts every pulse at ``n`` photons."""

    model: str = "poisson"
    n_bar: float = 0.1
    n_max: int = 200
    policy: str = "complement"
    n: int = 0

    def __post_init__(self):
        if self.model not in SOURCE_MODELS:
            raise ConfigError(f"source.model must be one of {SOURCE_MODELS}, got {self.model!r}")
        if self.model != "point" and not (isinstance(self.n_bar, (int, float)) and self.n_bar > 0):
            raise ConfigError("source.n_bar must be a positive number")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ConfigError("source.n_max must be an integer >= 1")
        if self.model == "point" and (int(self.n) != self.n or self.n < 0):
            raise ConfigError("source.n must be a non-negative integer")

    def build(self) -> PhotonNumberDistribution:
        if self.model == "point":
            return point_mass(int(self.n), int(self.n) + 1)
        return normalize(self.model, float(self.n_bar), int(self.n_max), self.policy)


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceSpec = field(default_factory=SourceSpec)
    transmittance: float = 1.0
    background_n_bar: float = 0.0
    detector: DetectorArrayConfig = field(default_factory=DetectorArrayConfig)
    pulse_count: int = 1_000_000
    pulse_period_ps: int = DEFAULT_PERIOD_PS
    seed: int = 0
    annotation: str = ""

    def __post_init__(self):
        if not 0.0 < self.transmittance <= 1.0:
            raise ConfigError(f"transmittance must be in (0, 1], got {self.transmittance}")
        if not (self.background_n_bar >= 0.0 and math.isfinite(self.background_n_bar)):
            raise ConfigError("background_n_bar must be finite and >= 0")
        if int(self.pulse_count) != self.pulse_count or not 1 <= self.pulse_count < _U64:
            raise ConfigError("pulse_count must be an integer >= 1")
        if int(self.pulse_period_ps) != self.pulse_period_ps or not 0 < self.pulse_period_ps < _U64:
            raise ConfigError("pulse_period_ps must be a positive integer")
        if int(self.seed) != self.seed or not 0 <= self.seed < _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    # --- (de)serialization ---

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = dict(d)
        try:
            if "source" in kw:
                kw["source"] = SourceSpec(**kw["source"])
            if "detector" in kw:
                kw["detector"] = DetectorArrayConfig(**kw["detector"])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, no whitespace variation."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        d = self.to_dict()
        d["seed"] = int(seed)
        return ExperimentConfig.from_dict(d)

    # --- analytic counterpart ---

    def photon_distribution(self) -> PhotonNumberDistribution:
        """Photon number reaching the detector: attenuated source plus background."""
        dist = attenuate(self.source.build(), self.transmittance)
        return admix_coherent(dist, self.background_n_bar)


@dataclass(frozen=True)
class RunSummary:
    pulses: int
    total_clicks: int
    mean_clicks_per_pulse: float
    clamp_events: int
    wall_time_ms: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        return d


# --- engine -----------------------------------------------------------------

class _Pipeline:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.gen = Philox(config.seed)
        self.source = PhotonNumberSampler(config.source.build())
        c = config.background_n_bar
        self.background = PhotonNumberSampler(normalize("poisson", c, _bg_n_max(c))) if c > 0 else None

    def thin(self, pulse_index: np.ndarray, n: np.ndarray) -> np.ndarray:
        t = self.config.transmittance
        if t >= 1.0:
            return n
        hit = np.flatnonzero(n)
        out = np.zeros_like(n)
        if hit.size == 0:
            return out
        counts = n[hit]
        owner = np.repeat(hit, counts)
        j = _photon_ordinals(counts)
        words = np.stack(self.gen.words(pulse_index[owner], j >> 2, STREAM_THIN))
        w = words[j & 3, np.arange(j.size)]
        keep = to_unit32(w) < t
        out[hit] = np.bincount(np.repeat(np.arange(hit.size), counts)[keep], minlength=hit.size)
        return out

    def block(self, start: int, stop: int) -> tuple[np.ndarray, int]:
        idx = np.arange(start, stop, dtype=np.uint64)
        u_src, u_bg = self.gen.pulse_uniforms(idx)
        n, clamps = self.source.sample_counted(u_src)
        n = self.thin(idx, n.astype(np.int64))
        if self.background is not None:
            nb, c2 = self.background.sample_counted(u_bg)
            n = n + nb
            clamps += c2
        return detect_batch(self.gen, idx, n, self.config.detector), clamps


def _blocks(total: int, block_size: int):
    return [(a, min(a + block_size, total)) for a in range(0, total, block_size)]


def run(
    config: ExperimentConfig, workers: int | None = None, block_size: int = DEFAULT_BLOCK
) -> tuple[ClickStream, RunSummary]:
    """Simulate ``config.pulse_count`` pulses.

    ``workers`` (default: ``SBL_THREADS`` or 1) and ``block_size`` only
    change the speed; the stream is bit-identical for every choice.
    """
    t0 = time.perf_counter()
    if block_size < 1:
        raise ConfigError("block_size must be >= 1")
    pipe = _Pipeline(config)
    P = int(config.pulse_count)
    masks = np.empty(P, dtype=np.uint32)
    workers = resolve_workers(workers)

    def work(r):
        a, b = r
        m, c = pipe.block(a, b)
        masks[a:b] = m
        return c

    ranges = _blocks(P, int(block_size))
    if workers == 1 or len(ranges) == 1:
        clamps = sum(work(r) for r in ranges)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            clamps = sum(pool.map(work, ranges))

    stream = ClickStream(masks, config.detector.m_channels, config.pulse_period_ps)
    total = int(stream.counts().sum())
    warnings = []
    if clamps / P > CLAMP_WARNING_RATE:
        warnings.append(
            f"sampler clamp rate {clamps / P:.3g} exceeds {CLAMP_WARNING_RATE:g}; raise source.n_max"
        )
    summary = RunSummary(P, total, total / P, int(clamps), (time.perf_counter() - t0) * 1e3, tuple(warnings))
    return stream, summary


def ideal_readout(
    dist: PhotonNumberDistribution,
    pulse_count: int,
    seed: int,
    m_channels: int = MAX_CHANNELS,
    pulse_period_ps: int = DEFAULT_PERIOD_PS,
) -> tuple[ClickStream, int]:
    """Photon-number-resolving readout of pulses drawn straight from ``dist``.

    Each pulse with ``n`` photons gets ``min(n, m_channels)`` clicks on the
    lowest channels. Returns the stream and the number of pulses that had to
    be clipped (``n > m_channels``).
    """
    gen = Philox(seed)
    sampler = PhotonNumberSampler(dist)
    n = np.empty(int(pulse_count), dtype=np.int64)
    for a, b in _blocks(int(pulse_count), DEFAULT_BLOCK):
        u, _ = gen.pulse_uniforms(np.arange(a, b, dtype=np.uint64))
        n[a:b] = sampler.sample(u)
    clipped = int((n > m_channels).sum())
    return ClickStream.from_counts(np.minimum(n, m_channels), m_channels, pulse_period_ps), clipped


# --- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    config: ExperimentConfig
    summary: RunSummary | None = None
    estimates: tuple[CorrelationEstimate, ...] = ()
    mean: MeanEstimate | None = None
    pmf: PhotonNumberDistribution | None = None
    error: SBLError | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def estimate(self, order: int) -> CorrelationEstimate:
        for e in self.estimates:
            if e.order == order:
                return e
        raise KeyError(order)


def analyze(
    config: ExperimentConfig,
    stream: ClickStream,
    summary: RunSummary,
    orders: Sequence[int] = (2, 3, 4, 5),
    normalization: str = "counts",
    workers: int | None = None,
) -> SweepResult:
    acc = accumulate(stream, 0, workers)
    ests = []
    for o in orders:
        # orders beyond the channel count have no "channels" normalization; skip them
        if normalization == "channels" and o > stream.m_channels:
            continue
        ests.append(gN_from_moments(acc, o, normalization))
    return SweepResult(
        config, summary, tuple(ests), estimate_mean_photons(stream), empirical_pmf(stream)
    )


def sweep(
    configs: Sequence[ExperimentConfig],
    orders: Sequence[int] = (2, 3, 4, 5),
    normalization: str = "counts",
    workers: int | None = None,
) -> list[SweepResult]:
    """Run every config in order and attach correlation estimates.

    A failing run (degenerate stream, bad parameters) is recorded in
    ``SweepResult.error`` and the sweep moves on.
    """
    configs = list(configs)
    if not configs:
        raise ConfigError("sweep needs at least one config")
    out = []
    for cfg in configs:
        try:
            stream, summary = run(cfg, workers)
            out.append(analyze(cfg, stream, summary, orders, normalization, workers))
        except SBLError as exc:
            out.append(SweepResult(cfg, error=exc))
    return out
