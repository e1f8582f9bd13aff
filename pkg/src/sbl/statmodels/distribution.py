"""Truncated photon-number distributions held in the log domain."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from ..errors import DegenerateDataError, DomainError, NormalizationError
from .logdomain import LN10, LogProb, log10_one_minus, to_log10, to_prob
from .models import LN_MODELS, _check_mean

MODEL_TAGS = ("poisson", "bose_einstein", "bsv", "superbunching", "empirical", "composite")
POLICIES = ("complement", "renormalize")

NORMALIZATION_TOL = 1e-12
#: relative tail mass above which a distribution is flagged as truncation-sensitive
TAIL_WARNING = 1e-9


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Normalized pmf over ``N = 0..n_max`` stored as base-10 log weights.

    ``realized_mean`` is recomputed from the stored weights on construction
    and is the mean every estimator should use; ``n_bar_param`` is only the
    parameter the model was built from. The two can differ by many orders
    of magnitude for the heavy-tailed models.
    """

    model_tag: str
    n_bar_param: float
    weights: np.ndarray
    tail_mass: LogProb = -math.inf
    policy: Optional[str] = None
    realized_mean: float = field(init=False)

    def __post_init__(self):
        if self.model_tag not in MODEL_TAGS:
            raise DomainError(f"unknown model tag {self.model_tag!r}")
        if self.policy is not None and self.policy not in POLICIES:
            raise DomainError(f"unknown zero-mass policy {self.policy!r}")
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise DomainError("weights need at least two support points (n_max >= 1)")
        if np.isnan(w).any() or (w == np.inf).any():
            raise DomainError("weights must be finite or -inf")
        total = float(to_prob(w).sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NormalizationError(f"weights sum to {total!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "realized_mean", float(np.dot(np.arange(w.size), to_prob(w))))

    @property
    def n_max(self) -> int:
        return self.weights.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.weights.size)

    @property
    def pmf(self) -> np.ndarray:
        return to_prob(self.weights)

    @property
    def ln_weights(self) -> np.ndarray:
        return self.weights * LN10

    @property
    def truncation_warning(self) -> bool:
        return self.tail_mass > math.log10(TAIL_WARNING)

    def log10_p(self, n: int) -> LogProb:
        """log10 P(n); ``-inf`` outside the support."""
        if 0 <= n <= self.n_max:
            return float(self.weights[n])
        return -math.inf

    def __repr__(self):
        return (
            f"PhotonNumberDistribution({self.model_tag}, n_bar_param={self.n_bar_param:g}, "
            f"n_max={self.n_max}, realized_mean={self.realized_mean:.6g})"
        )


def _renormalized(ln_w: np.ndarray) -> np.ndarray:
    """Natural-log weights shifted to sum to one, returned as log10."""
    return (ln_w - logsumexp(ln_w)) / LN10


def from_ln_weights(model_tag, n_bar_param, ln_w, tail_mass=-math.inf, policy=None):
    """Build a distribution from natural-log weights, renormalizing them."""
    return PhotonNumberDistribution(
        model_tag, float(n_bar_param), _renormalized(np.asarray(ln_w, dtype=float)), tail_mass, policy
    )


def from_probabilities(p, model_tag="empirical", n_bar_param=None) -> PhotonNumberDistribution:
    """Wrap linear-domain probabilities; zeros stay exact zeros."""
    p = np.asarray(p, dtype=float)
    if (p < 0).any():
        raise DomainError("probabilities must be non-negative")
    s = p.sum()
    if s <= 0:
        raise DegenerateDataError("probabilities sum to zero")
    w = to_log10(p / s)
    mean = float(np.dot(np.arange(p.size), p / s))
    return PhotonNumberDistribution(model_tag, mean if n_bar_param is None else n_bar_param, w)


def point_mass(n: int, n_max: Optional[int] = None) -> PhotonNumberDistribution:
    """All probability on a single photon number."""
    n = int(n)
    if n < 0:
        raise DomainError("photon number must be non-negative")
    n_max = max(n, 1) if n_max is None else int(n_max)
    if n_max < max(n, 1):
        raise DomainError("n_max must cover the point mass")
    w = np.full(n_max + 1, -np.inf)
    w[n] = 0.0
    return PhotonNumberDistribution("empirical", float(n), w)


# --- tail estimates ---------------------------------------------------------

def _ln_tail_chunked(fn, start: int, mode: float, cap: int = 10**7) -> float:
    """Sum ``exp(fn(n))`` for n >= start until the terms stop mattering."""
    total = -math.inf
    n0, chunk = start, 256
    while n0 < cap:
        t = fn(np.arange(n0, n0 + chunk))
        total = float(np.logaddexp(total, logsumexp(t)))
        if n0 + chunk > mode and t[-1] < total - 45.0:
            break
        n0 += chunk
        chunk *= 2
    return total


def _ln_tail_power_law(fn, start: int) -> float:
    """Explicit sum over a long stretch, then an integral for the remainder."""
    stop = 5 * start + 2048
    explicit = float(logsumexp(fn(np.arange(start, stop))))
    ref = float(fn(np.array([float(stop)]))[0]) + math.log(stop)
    # x = e^y turns the power-law tail into an exponential one
    rest, _ = integrate.quad(
        lambda y: math.exp(float(fn(np.array([math.exp(y)]))[0]) + y - ref),
        math.log(stop - 0.5),
        700.0,
        limit=400,
    )
    if rest <= 0:
        return explicit
    return float(np.logaddexp(explicit, ref + math.log(rest)))


def _ln_tail(model_tag: str, n_bar: float, n_max: int) -> float:
    fn = LN_MODELS[model_tag][0]
    start = n_max + 1
    if model_tag == "bose_einstein":
        return start * (math.log(n_bar) - math.log1p(n_bar))
    if model_tag == "superbunching":
        return _ln_tail_power_law(lambda n: fn(n_bar, n), start)
    return _ln_tail_chunked(lambda n: fn(n_bar, n), start, mode=n_bar)


# --- normalization ----------------------------------------------------------

def normalize(model_tag: str, n_bar: float, n_max: int, zero_mass_policy: str = "complement"):
    """Tabulate a model on ``0..n_max`` and turn it into a proper pmf.

    Poisson and Bose-Einstein are exact pmfs, truncated and renormalized.
    The BSV and super-bunching weights exist only for N >= 1; the zero bin
    is filled according to ``zero_mass_policy``:

    ``complement``
        ``P(0) = 1 - sum(weights)``, leaving the N >= 1 weights untouched.
        Fails with :class:`NormalizationError` when the weights already
        exceed one.
    ``renormalize``
        ``P(0) = 0`` and the weights are rescaled to sum to one.
    """
    if model_tag not in LN_MODELS:
        raise DomainError(f"cannot normalize model {model_tag!r}")
    if zero_mass_policy not in POLICIES:
        raise DomainError(f"zero_mass_policy must be one of {POLICIES}")
    n_bar = _check_mean(n_bar)
    n_max = int(n_max)
    if n_max < 1:
        raise DomainError("n_max must be >= 1")

    fn, first = LN_MODELS[model_tag]
    ln_tail = _ln_tail(model_tag, n_bar, n_max)
    if first == 0:
        ln_w = fn(n_bar, np.arange(n_max + 1))
        return from_ln_weights(model_tag, n_bar, ln_w, ln_tail / LN10)

    ln_w = fn(n_bar, np.arange(1, n_max + 1))
    ln_total = float(logsumexp(ln_w))
    if zero_mass_policy == "complement":
        if ln_total > 0.0:
            raise NormalizationError(
                f"{model_tag} weights for N=1..{n_max} sum to {math.exp(ln_total):.6g} > 1 at "
                f"<n>={n_bar:g}; use the 'renormalize' policy or a smaller <n>"
            )
        ln_p0 = log10_one_minus(ln_total / LN10) * LN10
        full = np.concatenate([[ln_p0], ln_w])
        return from_ln_weights(model_tag, n_bar, full, ln_tail / LN10, zero_mass_policy)

    full = np.concatenate([[-np.inf], ln_w])
    tail_rel = ln_tail - float(np.logaddexp(ln_total, ln_tail))
    return from_ln_weights(model_tag, n_bar, full, tail_rel / LN10, zero_mass_policy)


# --- moments ----------------------------------------------------------------

def ln_factorial_moment(dist: PhotonNumberDistribution, order: int) -> float:
    """Natural log of ``<n (n-1) ... (n-order+1)>``."""
    n = dist.support[order:].astype(float)
    lw = dist.ln_weights[order:]
    if n.size == 0:
        return -math.inf
    terms = lw + gammaln(n + 1.0) - gammaln(n - order + 1.0)
    return float(logsumexp(terms))


def gN_from_pmf(dist: PhotonNumberDistribution, order: int) -> float:
    """Zero-delay correlation ``g^(N) = <n^(N)> / <n>^N`` of a pmf.

    ``<n^(N)>`` is the order-N factorial moment and ``<n>`` the realized
    mean. The ratio is formed in log space, so values far above 1e8 are
    routine.
    """
    order = int(order)
    if order < 2:
        raise DomainError("correlation order must be >= 2")
    if not dist.realized_mean > 0:
        raise DegenerateDataError("distribution has zero mean")
    ln_g = ln_factorial_moment(dist, order) - order * math.log(dist.realized_mean)
    return math.exp(ln_g) if ln_g < 709.0 else math.inf


def log10_gN_from_pmf(dist: PhotonNumberDistribution, order: int) -> float:
    """Base-10 log of :func:`gN_from_pmf`; never overflows."""
    if not dist.realized_mean > 0:
        raise DegenerateDataError("distribution has zero mean")
    return (ln_factorial_moment(dist, order) - order * math.log(dist.realized_mean)) / LN10
