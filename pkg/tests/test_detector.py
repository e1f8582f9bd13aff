import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbl.clickstream import ClickStream
from sbl.detector import (
    ClickPattern,
    DetectorArrayConfig,
    clipping_kernel_exact,
    clipping_transform,
    detect_batch,
    detect_pulse,
    ln_clipping_kernel,
    ln_dark_kernel,
    subset_channels,
)
from sbl.errors import DomainError
from sbl.rng import Philox, PulseKey
from sbl.stats import chisquare_gof
from sbl.statmodels import from_probabilities, normalize, point_mass


# --- oracles ----------------------------------------------------------------

def brute_force_kernel(n_max, m, eta):
    """P(k | n) by enumerating every routing and every survival pattern."""
    eta = Fraction(eta)
    table = []
    for n in range(n_max + 1):
        row = [Fraction(0)] * (m + 1)
        for alive in itertools.product((0, 1), repeat=n):
            p_alive = Fraction(1)
            for a in alive:
                p_alive *= eta if a else 1 - eta
            if p_alive == 0:
                continue
            for route in itertools.product(range(m), repeat=n):
                lit = {c for c, a in zip(route, alive) if a}
                row[len(lit)] += p_alive / m**n
        table.append(row)
    return table


def inclusion_exclusion(n, k, m, eta):
    eta = Fraction(eta)
    s = sum((-1) ** j * math.comb(k, j) * (1 - eta + eta * Fraction(k - j, m)) ** n for j in range(k + 1))
    return math.comb(m, k) * s


GRID = [(m, n_max, eta) for m in range(1, 5) for n_max in (6,) for eta in (Fraction(1, 2), Fraction(1))]


@pytest.mark.parametrize("m,n_max,eta", GRID)
def test_kernel_matches_enumeration_exactly(m, n_max, eta):
    brute = brute_force_kernel(n_max, m, eta)
    assert clipping_kernel_exact(n_max, m, eta) == brute


@pytest.mark.parametrize("m,n_max,eta", GRID)
def test_kernel_matches_inclusion_exclusion(m, n_max, eta):
    exact = clipping_kernel_exact(n_max, m, eta)
    for n in range(n_max + 1):
        for k in range(m + 1):
            assert exact[n][k] == inclusion_exclusion(n, k, m, eta)


@pytest.mark.parametrize("m,n_max,eta", GRID)
def test_float_kernel_tracks_exact(m, n_max, eta):
    exact = np.array([[float(x) for x in row] for row in clipping_kernel_exact(n_max, m, eta)])
    approx = np.exp(ln_clipping_kernel(n_max, m, float(eta)))
    np.testing.assert_allclose(approx, exact, rtol=1e-13, atol=1e-300)


def test_kernel_rows_sum_to_one_for_large_n():
    k = np.exp(ln_clipping_kernel(3000, 31, 0.6))
    np.testing.assert_allclose(k.sum(axis=1), 1.0, rtol=1e-12)
    # far more photons than channels: everything piles up at k = M
    assert k[3000, 31] > 1 - 1e-12


def test_expected_clicks_closed_form():
    m, eta = 31, 0.6
    k = np.exp(ln_clipping_kernel(50, m, eta))
    for n in (0, 1, 5, 50):
        mean = float(np.dot(np.arange(m + 1), k[n]))
        assert mean == pytest.approx(m * (1 - (1 - eta / m) ** n), rel=1e-12)


# --- detect_pulse -------------------------------------------------------------

def test_zero_photons_no_dark_is_empty():
    cfg = DetectorArrayConfig(31, 0.6, 0.0)
    for i in range(20):
        assert detect_pulse(0, cfg, PulseKey(5, i)).bitmask == 0


def test_single_channel_perfect_efficiency_always_one_click():
    cfg = DetectorArrayConfig(1, 1.0, 0.0)
    for n in (1, 2, 7, 100):
        for i in range(10):
            p = detect_pulse(n, cfg, PulseKey(3, i))
            assert p.clicks == 1 and p.bitmask == 1


def test_two_channels_two_photons_enumeration():
    # routings (0,0),(0,1),(1,0),(1,1) give 1,2,2,1 clicks
    exact = Fraction(1 + 2 + 2 + 1, 4)
    assert float(exact) == 1.5
    cfg = DetectorArrayConfig(2, 1.0, 0.0)
    masks = detect_batch(Philox(17), np.arange(200_000), np.full(200_000, 2), cfg)
    clicks = np.bitwise_count(masks)
    assert clicks.mean() == pytest.approx(1.5, abs=4 * 0.5 / math.sqrt(200_000))


def test_detect_pulse_matches_batch():
    cfg = DetectorArrayConfig(31, 0.6, 0.05)
    gen = Philox(99)
    idx = np.arange(1000, 1300, dtype=np.uint64)
    n = (np.arange(300) * 7) % 40
    batch = detect_batch(gen, idx, n, cfg)
    single = [detect_pulse(int(n[i]), cfg, PulseKey(99, int(idx[i]))).bitmask for i in range(300)]
    assert batch.tolist() == single


def test_detect_batch_is_partition_independent():
    cfg = DetectorArrayConfig(8, 0.7, 0.01)
    gen = Philox(2024)
    idx = np.arange(5000, dtype=np.uint64)
    n = np.arange(5000) % 13
    whole = detect_batch(gen, idx, n, cfg)
    parts = np.concatenate([detect_batch(gen, idx[a : a + 777], n[a : a + 777], cfg) for a in range(0, 5000, 777)])
    assert np.array_equal(whole, parts)


@settings(max_examples=60, deadline=None)
@given(
    m=st.integers(1, 32),
    eta=st.floats(0, 1),
    dark=st.floats(0, 0.5),
    n=st.integers(0, 200),
    seed=st.integers(0, 2**64 - 1),
    idx=st.integers(0, 2**64 - 1),
)
def test_click_count_never_exceeds_channels(m, eta, dark, n, seed, idx):
    p = detect_pulse(n, DetectorArrayConfig(m, eta, dark), PulseKey(seed, idx))
    assert p.clicks <= m
    assert p.bitmask >> m == 0
    assert all(0 <= c < m for c in p.channels())


def test_config_validation():
    with pytest.raises(DomainError):
        DetectorArrayConfig(0)
    with pytest.raises(DomainError):
        DetectorArrayConfig(33)
    with pytest.raises(DomainError):
        DetectorArrayConfig(4, eta=1.5)
    with pytest.raises(DomainError):
        DetectorArrayConfig(4, dark_prob=1.0)
    with pytest.raises(DomainError):
        detect_pulse(-1, DetectorArrayConfig(), PulseKey(0, 0))


def test_click_pattern_channels():
    p = ClickPattern(0b1000000000000000000000000000001 | 1 << 30, 7)
    assert p.channels() == [0, 30]
    assert p.clicks == 2


# --- clipping transform -------------------------------------------------------

def test_transform_of_point_mass_is_kernel_row():
    cfg = DetectorArrayConfig(4, 0.5, 0.0)
    out = clipping_transform(point_mass(3), cfg)
    exact = [float(x) for x in clipping_kernel_exact(3, 4, Fraction(1, 2))[3]]
    np.testing.assert_allclose(out.pmf, exact, rtol=1e-13)
    assert out.model_tag == "composite"
    assert out.n_max == 4


@pytest.mark.parametrize("model,n_bar,n_max", [("poisson", 0.5, 60), ("bose_einstein", 2.0, 200), ("superbunching", 0.01, 200), ("bsv", 0.3, 400)])
@pytest.mark.parametrize("m,eta,dark", [(1, 0.3, 0.0), (8, 1.0, 1e-4), (31, 0.6, 1e-6)])
def test_transform_sums_to_one(model, n_bar, n_max, m, eta, dark):
    out = clipping_transform(normalize(model, n_bar, n_max), DetectorArrayConfig(m, eta, dark))
    assert abs(out.pmf.sum() - 1.0) < 1e-12


def test_dark_kernel_binomial_on_idle_channels():
    m, p = 3, 0.1
    k = np.exp(ln_dark_kernel(m, p))
    np.testing.assert_allclose(k.sum(axis=1), 1.0, rtol=1e-14)
    assert k[1, 1] == pytest.approx(0.9**2)
    assert k[1, 3] == pytest.approx(0.1**2)
    assert k[3, 3] == 1.0
    assert k[2, 1] == 0.0


def test_poisson_transform_is_binomial_per_channel():
    # Poisson photons split into independent Poisson streams per channel
    n_bar, m, eta, dark = 0.7, 5, 0.6, 0.02
    out = clipping_transform(normalize("poisson", n_bar, 80), DetectorArrayConfig(m, eta, dark))
    q = 1 - math.exp(-n_bar * eta / m) * (1 - dark)
    expect = [math.comb(m, k) * q**k * (1 - q) ** (m - k) for k in range(m + 1)]
    np.testing.assert_allclose(out.pmf, expect, rtol=1e-11)


MC_GRID = [(m, eta, dark) for m in (1, 2, 8, 31) for eta in (0.3, 1.0) for dark in (0.0, 1e-4)]


@pytest.mark.parametrize("m,eta,dark", MC_GRID)
def test_monte_carlo_matches_transform(m, eta, dark):
    # photon numbers spread over 0..39 so every part of the kernel is exercised;
    # the 10^6-pulse version of this grid lives in the acceptance suite
    pulses = 200_000
    n = (np.arange(pulses) * 2654435761 % 2**32) % 40
    p = np.bincount(n, minlength=40) / pulses
    cfg = DetectorArrayConfig(m, eta, dark)
    masks = detect_batch(Philox(1000 + m), np.arange(pulses), n, cfg)
    observed = np.bincount(np.bitwise_count(masks), minlength=m + 1)
    predicted = clipping_transform(from_probabilities(p), cfg).pmf
    assert chisquare_gof(observed, predicted).p_value > 1e-3


# --- subset_channels ----------------------------------------------------------

def test_subset_channels_drops_high_channels():
    s = ClickStream(np.array([1 | 1 << 30, 1 << 8, 0xFF], dtype=np.uint32), 31)
    sub = subset_channels(s, 8)
    assert sub.m_channels == 8
    assert sub.masks.tolist() == [1, 0, 0xFF]
    assert np.array_equal(sub.pulse_index, s.pulse_index)


def test_subset_channels_bounds():
    s = ClickStream(np.zeros(3, dtype=np.uint32), 31)
    with pytest.raises(DomainError):
        subset_channels(s, 0)
    with pytest.raises(DomainError):
        subset_channels(s, 32)
    assert subset_channels(s, 31) == s
