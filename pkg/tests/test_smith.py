import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rbrcap.model import DomainError
from rbrcap.smith import (analytic_sandwich, cached_capacity, capacity_amplitude_constrained,
                          clear_cache, information_density)

# 40-digit quadrature of I(X;Y) for X uniform on {-A, A}, which is the
# capacity-achieving law at these amplitudes.
BINARY_MI_BITS = {
    0.25: 0.043729962944309451,
    0.5: 0.16074721979641687,
    1.0: 0.48594415413293532,
}


def quad_density(support, weights, x):
    """D(N(x,1) || q_Y) in bits by adaptive quadrature."""
    support = np.asarray(support)
    weights = np.asarray(weights)

    def integrand(y):
        q = float(np.sum(weights * stats.norm.pdf(y - support)))
        f = stats.norm.pdf(y - x)
        return f * math.log(f / q) if f > 0 else 0.0

    lo, hi = min(support.min(), x) - 12, max(support.max(), x) + 12
    breaks = sorted(set(np.round(np.append(support, x), 12)))
    val, _ = integrate.quad(integrand, lo, hi, points=breaks, limit=400, epsabs=1e-13)
    return val / math.log(2)


def quad_mutual_information(support, weights):
    return sum(w * quad_density(support, weights, x) for x, w in zip(support, weights))


def test_zero_amplitude():
    sol = capacity_amplitude_constrained(0.0)
    assert sol.capacity_bits == 0.0 and sol.support == ((0.0, 1.0),)


@pytest.mark.parametrize("bad", [-1.0, math.nan, math.inf])
def test_bad_amplitude(bad):
    with pytest.raises(DomainError):
        capacity_amplitude_constrained(bad)


def test_bad_grid_and_tol():
    with pytest.raises(DomainError):
        capacity_amplitude_constrained(1.0, m=800)
    with pytest.raises(DomainError):
        capacity_amplitude_constrained(1.0, tol=0.0)


@pytest.mark.parametrize("amplitude", sorted(BINARY_MI_BITS))
def test_binary_regime_matches_quadrature(amplitude):
    sol = capacity_amplitude_constrained(amplitude)
    assert sol.capacity_bits == pytest.approx(BINARY_MI_BITS[amplitude], abs=1e-6)
    # essentially all mass sits on the two endpoints
    end_mass = sum(w for x, w in sol.support if abs(abs(x) - amplitude) < 1e-12)
    assert end_mass > 0.999


@pytest.mark.parametrize("amplitude", [1.0, 2.0, 3.0])
def test_capacity_is_mutual_information_of_returned_law(amplitude):
    sol = capacity_amplitude_constrained(amplitude)
    xs, ws = zip(*sol.support)
    assert quad_mutual_information(xs, ws) == pytest.approx(sol.capacity_bits, abs=1e-7)


@pytest.mark.parametrize("amplitude", [1.0, 2.0, 4.0, 8.0])
def test_kkt_certificate_off_grid(amplitude):
    # max_x D(x) over the whole interval bounds the true (not just grid) capacity
    sol = capacity_amplitude_constrained(amplitude)
    xs, ws = zip(*sol.support)
    probe = np.linspace(-amplitude, amplitude, 1201)
    dens = np.array([information_density(xs, ws, x) for x in probe])
    assert dens.max() >= sol.capacity_bits - 1e-9
    assert dens.max() - sol.capacity_bits <= 1e-5
    # support points sit where the density touches the rate
    for x, w in sol.support:
        if w > 1e-3:
            assert information_density(xs, ws, x) == pytest.approx(sol.capacity_bits, abs=1e-5)


def test_information_density_against_quadrature():
    xs, ws = (-1.0, 1.0), (0.5, 0.5)
    for x in (1.0, 0.0, 0.3):
        assert information_density(xs, ws, x) == pytest.approx(quad_density(xs, ws, x), abs=1e-9)
    # at a mass point the density approaches one bit from below as A grows
    for a in (2.0, 4.0, 6.0):
        d = information_density((-a, a), (0.5, 0.5), a)
        assert 0 < d < 1 and d == pytest.approx(quad_density((-a, a), (0.5, 0.5), a), abs=1e-9)


def test_information_density_validates_law():
    with pytest.raises(DomainError):
        information_density((0.0, 1.0), (0.7, 0.7), 0.0)
    with pytest.raises(DomainError):
        information_density((), (), 0.0)


@settings(max_examples=15)
@given(st.floats(min_value=0.05, max_value=12.0))
def test_sandwich(amplitude):
    sol = capacity_amplitude_constrained(amplitude)
    lower, upper = analytic_sandwich(amplitude ** 2)
    assert max(0.0, lower) <= sol.capacity_bits <= upper
    assert sol.optimality_gap_bits <= 1e-6


def test_monotone_and_support_growth():
    amps = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0]
    sols = [capacity_amplitude_constrained(a) for a in amps]
    caps = [s.capacity_bits for s in sols]
    assert all(b > a for a, b in zip(caps, caps[1:]))

    def mass_points(sol):
        # grid neighbours of one mass point merge into one cluster
        xs = [x for x, w in sol.support if w > 1e-4]
        return 1 + sum(b - a > 0.1 for a, b in zip(xs, xs[1:]))

    counts = [mass_points(s) for s in sols]
    assert counts[0] == 2 and counts[1] == 2
    assert counts[3] == 3
    assert all(b >= a for a, b in zip(counts, counts[1:]))


def test_grid_refinement_is_stable():
    coarse = capacity_amplitude_constrained(4.0, m=801)
    fine = capacity_amplitude_constrained(4.0, m=1601)
    assert abs(coarse.capacity_bits - fine.capacity_bits) <= 1e-6


def test_looser_tolerance_reports_looser_gap():
    sol = capacity_amplitude_constrained(6.0, tol=1e-3)
    assert sol.optimality_gap_bits < 1e-3
    tight = capacity_amplitude_constrained(6.0)
    assert sol.capacity_bits <= tight.capacity_bits + 1e-6


def test_callback_sees_shrinking_gap():
    seen = []
    capacity_amplitude_constrained(2.0, callback=lambda it, mi, gap: seen.append((it, mi, gap)))
    assert seen[0][0] == 0
    assert seen[-1][2] <= 1e-6
    assert all(b[1] >= a[1] - 1e-12 for a, b in zip(seen, seen[1:]))


def test_cache_returns_same_solution():
    clear_cache()
    a = cached_capacity(1.7)
    assert cached_capacity(1.7) is a
    assert cached_capacity(1.7, tol=1e-5) is not a
    clear_cache()
    assert cached_capacity(1.7) is not a
