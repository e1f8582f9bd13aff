"""Closed-form photon-number models.

Four families are provided:

* coherent light (Poisson),
* thermal light (Bose-Einstein, i.e. geometric),
* bright squeezed vacuum, a continuous approximation defined for N >= 1,
* the super-bunching distribution produced by BSV-pumped parallel nonlinear
  interactions, also defined for N >= 1.

Scalar functions return base-10 logs. The ``ln_*`` array functions return
natural logs and are what :mod:`sbl.statmodels.distribution` builds tables
from. Every evaluation goes through ``gammaln``/``log`` so photon numbers in
the millions and probabilities far below the double-precision floor are fine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..errors import DomainError, SingularityError
from .logdomain import LN10, LogProb

LOG_2PI = math.log(2.0 * math.pi)


def _check_mean(n_bar: float) -> float:
    n_bar = float(n_bar)
    if not n_bar > 0 or not math.isfinite(n_bar):
        raise DomainError(f"mean photon number must be positive and finite, got {n_bar!r}")
    return n_bar


def _check_count(n, minimum: int = 0) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise DomainError(f"photon count must be an integer, got {n!r}")
    n = int(n)
    if n < minimum:
        if minimum == 1 and n == 0:
            raise SingularityError("weight formula is singular at N = 0; use a zero-mass policy")
        raise DomainError(f"photon count must be >= {minimum}, got {n}")
    return n


@dataclass(frozen=True)
class GainParam:
    """Parametric gain of the nonlinear interaction, ``G = sqrt(arcsinh <n>)``."""

    g: float

    @classmethod
    def from_mean(cls, n_bar: float) -> "GainParam":
        return cls(math.sqrt(math.asinh(_check_mean(n_bar))))


def ln_poisson(n_bar: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return n * math.log(n_bar) - n_bar - gammaln(n + 1.0)


def ln_bose_einstein(n_bar: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return n * math.log(n_bar) - (n + 1.0) * math.log1p(n_bar)


def ln_bsv(n_bar: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return -0.5 * (LOG_2PI + math.log(n_bar) + np.log(n)) - n / n_bar


def ln_superbunching(n_bar: float, n) -> np.ndarray:
    g = GainParam.from_mean(n_bar).g
    n = np.asarray(n, dtype=float)
    a = np.arcsinh(np.sqrt(n))
    # log(N(1+N)) split so that N ~ 1e12 does not lose the +1
    return -a / (2.0 * g) - 0.5 * (LOG_2PI + math.log(g) + np.log(n) + np.log1p(n) + np.log(a))


def log_pmf_poisson(n_bar: float, n: int) -> LogProb:
    """log10 of the Poisson probability ``<n>^N e^-<n> / N!``."""
    n_bar = _check_mean(n_bar)
    n = _check_count(n)
    return float(ln_poisson(n_bar, n)) / LN10


def log_pmf_bose_einstein(n_bar: float, n: int) -> LogProb:
    """log10 of the thermal probability ``<n>^N / (1+<n>)^(N+1)``."""
    n_bar = _check_mean(n_bar)
    n = _check_count(n)
    return float(ln_bose_einstein(n_bar, n)) / LN10


def log_weight_bsv(n_bar: float, n: int) -> LogProb:
    """log10 of the unnormalized BSV weight ``(2 pi <n> N)^-1/2 exp(-N/<n>)``.

    Raises :class:`~sbl.errors.SingularityError` at ``n = 0``.
    """
    n_bar = _check_mean(n_bar)
    n = _check_count(n, minimum=1)
    return float(ln_bsv(n_bar, n)) / LN10


def log_weight_superbunching(n_bar: float, n: int) -> LogProb:
    """log10 of the unnormalized super-bunching weight.

    ``exp(-asinh(sqrt N) / 2G) / sqrt(2 pi G N (1+N) asinh(sqrt N))`` with
    ``G = sqrt(asinh <n>)``. Raises :class:`~sbl.errors.SingularityError`
    at ``n = 0``.
    """
    n_bar = _check_mean(n_bar)
    n = _check_count(n, minimum=1)
    return float(ln_superbunching(n_bar, n)) / LN10


#: natural-log evaluators keyed by model tag; the first N they accept
LN_MODELS = {
    "poisson": (ln_poisson, 0),
    "bose_einstein": (ln_bose_einstein, 0),
    "bsv": (ln_bsv, 1),
    "superbunching": (ln_superbunching, 1),
}
