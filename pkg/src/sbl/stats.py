"""Goodness-of-fit helpers for comparing simulated counts with analytic pmfs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    bins: int


def pool_bins(observed, expected, min_expected: float = 5.0):
    """Merge adjacent bins left to right until each expects ``min_expected`` counts.

    A trailing under-filled group is folded into the previous one.
    """
    obs_out, exp_out = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if obs_out:
            obs_out[-1] += acc_o
            exp_out[-1] += acc_e
        else:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
    return np.array(obs_out), np.array(exp_out)


def chisquare_gof(observed_counts, probabilities, min_expected: float = 5.0) -> GofResult:
    """Pearson chi-square test of integer counts against a pmf on the same support.

    Counts in bins of exactly zero probability make the fit fail outright
    (p = 0).
    """
    obs = np.asarray(observed_counts, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if obs.shape != p.shape:
        raise ValueError("observed counts and probabilities must have the same shape")
    total = obs.sum()
    if ((p == 0) & (obs > 0)).any():
        return GofResult(float("inf"), 0, 0.0, int(obs.size))
    keep = p > 0
    o, e = pool_bins(obs[keep], p[keep] / p[keep].sum() * total, min_expected)
    if o.size < 2:
        return GofResult(0.0, 0, 1.0, int(o.size))
    stat = float(((o - e) ** 2 / e).sum())
    dof = o.size - 1
    return GofResult(stat, dof, float(stats.chi2.sf(stat, dof)), int(o.size))
