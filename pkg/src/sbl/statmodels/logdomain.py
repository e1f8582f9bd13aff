"""Base-10 log-domain probability arithmetic.

Probabilities in this package are carried as ``log10 p`` (a ``LogProb``).
Internally the heavy lifting is done in natural logs with
:func:`scipy.special.logsumexp`; these helpers convert at the boundary.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

LN10 = math.log(10.0)

#: base-10 logarithm of a probability; ``-inf`` encodes an exact zero
LogProb = float


def ln_to_log10(x):
    return np.asarray(x, dtype=float) / LN10 if np.ndim(x) else float(x) / LN10


def log10_to_ln(x):
    return np.asarray(x, dtype=float) * LN10 if np.ndim(x) else float(x) * LN10


def log10_sum(values) -> LogProb:
    """``log10(sum(10**v))`` without leaving the log domain."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.all(v == -np.inf):
        return -math.inf
    return float(logsumexp(v * LN10) / LN10)


def log10_add(a: LogProb, b: LogProb) -> LogProb:
    """``log10(10**a + 10**b)``."""
    return float(np.logaddexp(a * LN10, b * LN10) / LN10)


def log10_one_minus(a: LogProb) -> LogProb:
    """``log10(1 - 10**a)`` for ``a <= 0``; accurate when ``10**a`` is tiny."""
    if a > 0:
        raise ValueError("log10_one_minus needs a <= 0")
    if a == -math.inf:
        return 0.0
    x = a * LN10
    # log(1 - e^x): use log(-expm1(x)) near 0 and log1p(-e^x) for very negative x
    if x > -math.log(2.0):
        return math.log(-math.expm1(x)) / LN10
    return math.log1p(-math.exp(x)) / LN10


def to_prob(log10_p):
    """Exponentiate base-10 log probabilities back to the linear domain."""
    with np.errstate(under="ignore"):
        return np.power(10.0, log10_p)


def to_log10(p):
    """``log10`` of probabilities, mapping exact zeros to ``-inf`` silently."""
    with np.errstate(divide="ignore"):
        out = np.log10(np.asarray(p, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
