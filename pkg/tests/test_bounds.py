import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbrcap.bounds import (GAP_BITS, bounds_report, causal_lower, causal_upper,
                           infinite_battery_upper, lattice_floor, noncausal_lower_analytic,
                           noncausal_lower_smith, noncausal_terms, noncausal_upper, sweep,
                           thread_count)
from rbrcap.model import LN2, ChannelParams, DomainError

from conftest import capacities, open_probs, recharge_probs

# full infinite series by 40-digit nsum
NONCAUSAL_UPPER = [
    (0.5, 2.0, 0.46749794943411395),
    (0.1, 10.0, 0.42934717447464609),
    (0.01, 100.0, 0.41780050326189799),
    (0.3, 0.1, 0.021107927929267283),
]


def test_gap_constant():
    assert GAP_BITS == pytest.approx(1.0470955851806411027, abs=1e-15)
    assert round(GAP_BITS, 2) == 1.05


@given(recharge_probs, capacities)
def test_causal_gap_is_exact(p, b):
    params = ChannelParams(p, b)
    assert abs(causal_upper(params) - causal_lower(params) - GAP_BITS) <= 1e-12


@pytest.mark.parametrize("p,b,expected", NONCAUSAL_UPPER)
def test_noncausal_upper_against_full_series(p, b, expected):
    tol = 1e-9
    value = noncausal_upper(ChannelParams(p, b), tol)
    # truncation drops nonnegative terms only
    assert expected - tol <= value <= expected


@pytest.mark.parametrize("b", [0.1, 1.0, 10.0, 1000.0])
def test_full_recharge_collapses_all_bounds(b):
    params = ChannelParams(1.0, b)
    exact = 0.5 * math.log2(1 + b)
    assert causal_upper(params) == pytest.approx(exact, rel=1e-14)
    assert noncausal_upper(params) == pytest.approx(exact, rel=1e-14)
    assert infinite_battery_upper(params) == pytest.approx(exact, rel=1e-14)
    assert noncausal_terms(params, 1e-9) == 1


def test_empty_battery_row():
    rep = bounds_report(ChannelParams(0.3, 0.0))
    assert rep.causal_upper == rep.noncausal_upper == rep.noncausal_lower_smith == 0.0
    assert rep.infinite_battery_upper == 0.0
    assert rep.causal_lower == rep.noncausal_lower_analytic == -GAP_BITS


@given(open_probs, st.floats(1e-3, 1e4), st.sampled_from([1e-6, 1e-9, 1e-12]))
def test_truncation_is_minimal_and_honest(p, b, tol):
    params = ChannelParams(p, b)
    k = noncausal_terms(params, tol)
    scale = p * b / (2 * LN2)
    assert scale * (1 - p) ** k < tol
    if k > 1:
        assert scale * (1 - p) ** (k - 1) >= tol
    assert noncausal_upper(params, tol) <= noncausal_upper(params, tol / 2) <= \
        noncausal_upper(params, tol) + tol


@given(open_probs, capacities)
def test_ordering_of_cheap_bounds(p, b):
    params = ChannelParams(p, b)
    cu, nu, ib = causal_upper(params), noncausal_upper(params), infinite_battery_upper(params)
    assert cu <= nu + 1e-12
    assert nu <= ib + 1e-12
    assert noncausal_lower_analytic(params) == pytest.approx(nu - GAP_BITS, abs=1e-15)


@settings(max_examples=12)
@given(st.floats(0.05, 1.0), st.floats(0.01, 20.0))
def test_smith_lower_bound_sits_between(p, b):
    params = ChannelParams(p, b)
    smith = noncausal_lower_smith(params, tol=1e-7)
    assert isinstance(smith, float)
    assert noncausal_lower_analytic(params, 1e-7) <= smith <= noncausal_upper(params, 1e-7)


def test_energy_lattice_stays_a_lower_bound():
    params = ChannelParams(0.05, 30.0)
    exact = noncausal_lower_smith(params, tol=1e-6)
    snapped = noncausal_lower_smith(params, tol=1e-6, energy_lattice=1.05)
    assert snapped <= exact + 1e-9
    assert exact - snapped < 0.05 * exact
    assert snapped >= noncausal_lower_analytic(params, 1e-6)
    with pytest.raises(DomainError):
        noncausal_lower_smith(params, energy_lattice=1.0)


@given(st.floats(1e-6, 1e6), st.sampled_from([1.01, 1.05, 1.5, 2.0, 10.0]))
def test_lattice_floor(energy, ratio):
    snapped = lattice_floor(energy, ratio)
    assert snapped <= energy < snapped * ratio * (1 + 1e-12)
    j = round(math.log(snapped) / math.log(ratio))
    assert snapped == pytest.approx(ratio ** j, rel=1e-12)


def test_bad_tolerances():
    params = ChannelParams(0.5, 1.0)
    with pytest.raises(DomainError):
        noncausal_terms(params, 0.0)
    with pytest.raises(DomainError):
        noncausal_lower_smith(params, smith_tol=0.0)


def test_sweep_keeps_grid_order_and_validates():
    grid = [0.5, 1.0, 2.0, 4.0]
    reps = sweep(0.4, grid, threads=2)
    assert [r.params.b_bar for r in reps] == grid
    assert reps == sweep(0.4, grid, threads=1)
    for bad in ([], [1.0, 1.0], [2.0, 1.0]):
        with pytest.raises(DomainError):
            sweep(0.4, bad)
    with pytest.raises(DomainError):
        sweep(1.5, [1.0])


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("RBRCAP_THREADS", "2")
    assert thread_count(8) == 2
    assert thread_count(1) == 1
    monkeypatch.setenv("RBRCAP_THREADS", "many")
    with pytest.raises(DomainError):
        thread_count(4)
    monkeypatch.delenv("RBRCAP_THREADS")
    assert thread_count(3) == 3
