"""Distribution algebra: loss (binomial thinning) and independent admixture."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, logsumexp

from ..errors import DomainError
from .distribution import PhotonNumberDistribution, from_ln_weights
from .models import ln_poisson

_CLOSED_UNDER_THINNING = ("poisson", "bose_einstein")


def _ln_binom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def attenuate(dist: PhotonNumberDistribution, t: float) -> PhotonNumberDistribution:
    """Pass the light through a filter of transmittance ``t``.

    Each photon survives independently with probability ``t``::

        P'(k) = sum_{n >= k} P(n) C(n, k) t^k (1 - t)^(n - k)

    The support is unchanged. Normalized factorial-moment correlations are
    invariant under this map.
    """
    t = float(t)
    if not 0.0 < t <= 1.0:
        raise DomainError(f"transmittance must lie in (0, 1], got {t!r}")
    if t == 1.0:
        return dist
    n_max = dist.n_max
    n = np.arange(n_max + 1, dtype=float)
    nn, kk = np.meshgrid(n, n, indexing="ij")
    lower = kk <= nn
    with np.errstate(invalid="ignore"):
        terms = np.where(
            lower,
            dist.ln_weights[:, None]
            + _ln_binom(nn, kk)
            + kk * math.log(t)
            + (nn - kk) * math.log1p(-t),
            -np.inf,
        )
    ln_w = logsumexp(terms, axis=0)
    tag = dist.model_tag if dist.model_tag in _CLOSED_UNDER_THINNING else "composite"
    return from_ln_weights(tag, dist.n_bar_param * t, ln_w, dist.tail_mass, dist.policy)


def admix_coherent(dist: PhotonNumberDistribution, n_bar_gn: float) -> PhotonNumberDistribution:
    """Add an independent Poissonian field of mean ``n_bar_gn``.

    Photon numbers add, so the result is the convolution of ``dist`` with
    Poisson(``n_bar_gn``), truncated at ``n_max + ceil(10 n_bar_gn)`` and
    renormalized.
    """
    c = float(n_bar_gn)
    if not c >= 0.0 or not math.isfinite(c):
        raise DomainError(f"background mean must be >= 0, got {n_bar_gn!r}")
    if c == 0.0:
        return dist
    size = dist.n_max + math.ceil(10.0 * c) + 1
    sig = np.full(size, -np.inf)
    sig[: dist.n_max + 1] = dist.ln_weights
    bg = ln_poisson(c, np.arange(size))
    k = np.arange(size)
    idx = k[:, None] - k[None, :]  # out index k, signal index j -> background k - j
    terms = np.where(idx >= 0, sig[None, :] + bg[np.clip(idx, 0, None)], -np.inf)
    ln_w = logsumexp(terms, axis=1)
    ln_kept = float(logsumexp(ln_w))
    tail = dist.tail_mass
    dropped = -math.expm1(ln_kept)
    if dropped > 0:
        tail = float(np.logaddexp(tail * math.log(10), math.log(dropped)) / math.log(10))
    tag = "poisson" if dist.model_tag == "poisson" else "composite"
    return from_ln_weights(tag, dist.n_bar_param + c, ln_w, tail, dist.policy)


def mixture_g2(g2_signal: float, signal_mean: float, background_mean: float) -> float:
    """g2 of a signal plus an independent coherent background.

    ``(g2_s s^2 + 2 s c + c^2) / (s + c)^2``.
    """
    s, c = signal_mean, background_mean
    return (g2_signal * s * s + 2.0 * s * c + c * c) / (s + c) ** 2
