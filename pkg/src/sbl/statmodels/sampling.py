"""Inverse-CDF sampling of photon numbers."""
from __future__ import annotations

import threading

import numpy as np

from ..rng import CounterRNG
from .distribution import PhotonNumberDistribution


class PhotonNumberSampler:
    """Vectorized inverse-CDF sampler over a truncated pmf.

    Uniforms that land beyond the last tabulated CDF value (possible only
    through rounding in the cumulative sum) are clamped to ``n_max``.
    Every draw that ends at ``n_max`` counts as a truncation hit in
    :attr:`clamp_events`: the untruncated model would have had room to go
    further, so a noticeable rate of such draws means ``n_max`` is too tight.
    """

    def __init__(self, dist: PhotonNumberDistribution):
        self.dist = dist
        self.cdf = np.cumsum(dist.pmf)
        self.n_max = dist.n_max
        self.clamp_events = 0
        self._lock = threading.Lock()

    def sample(self, u) -> np.ndarray:
        """Map uniforms on [0, 1) to photon numbers."""
        return self.sample_counted(u)[0]

    def sample_counted(self, u) -> tuple[np.ndarray, int]:
        """Like :meth:`sample` but also returns this call's truncation-hit count."""
        n = np.minimum(np.searchsorted(self.cdf, u, side="right"), self.n_max)
        clamps = int(np.count_nonzero(n == self.n_max))
        if clamps:
            with self._lock:
                self.clamp_events += clamps
        return n, clamps


def sample_photon_number(dist: PhotonNumberDistribution, rng: CounterRNG, size=None):
    """Draw photon numbers from ``dist`` using the counter-based generator.

    Returns an ``int`` when ``size`` is None, else an integer array.
    """
    sampler = PhotonNumberSampler(dist)
    u = rng.random(1 if size is None else size)
    n = sampler.sample(np.atleast_1d(u))
    return int(n[0]) if size is None else n.reshape(np.shape(u))
