import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rbrcap.model import ChannelParams, DomainError
from rbrcap.power_control import (allocation_value, closed_form_value, find_n_tilde,
                                  numeric_oracle_allocation, optimal_allocation,
                                  project_capped_simplex)

from conftest import open_probs, positive_capacities, recharge_probs

# Exact-rational threshold search and a 40-digit direct summation of the
# allocation formula, computed once and frozen here.
FROZEN = [
    # p, b_bar, n_tilde, value_bits
    (0.01, 100.0, 114, 0.33588307040807553),
    (0.1, 10.0, 11, 0.3466434417840703),
    (0.5, 2.0, 2, 0.40563906222956643),
    (0.5, 1.0, 2, 0.25),
    (0.9, 1000.0, 3, 4.7254792167874637),
    (0.3, 0.1, 1, 0.020625528562490236),
    (0.05, 1000.0, 79, 2.1992261698909515),
]


@pytest.mark.parametrize("p,b,n,value", FROZEN)
def test_frozen_values(p, b, n, value):
    params = ChannelParams(p, b)
    sol = optimal_allocation(params)
    assert sol.n_tilde == n
    assert sol.value_bits == pytest.approx(value, rel=1e-13, abs=1e-15)
    assert closed_form_value(params) == pytest.approx(value, rel=1e-12, abs=1e-15)


def test_hand_checked_point():
    sol = optimal_allocation(ChannelParams(0.5, 2.0))
    assert sol.eps == pytest.approx((5 / 3, 1 / 3), abs=1e-15)
    assert sol.lambda_tilde == pytest.approx(3 / 32, abs=1e-16)
    hand = 0.25 * math.log2(8 / 3) + 0.125 * math.log2(4 / 3)
    assert sol.value_bits == pytest.approx(hand, abs=1e-15)
    assert sol.energy(3) == 0.0 and sol.energy(0) == 0.0


def test_full_recharge_every_slot():
    # p = 1: spend everything in every slot
    sol = optimal_allocation(ChannelParams(1.0, 7.0))
    assert sol.n_tilde == 1 and sol.eps == (7.0,)
    assert sol.value_bits == pytest.approx(1.5)
    with pytest.raises(DomainError):
        closed_form_value(ChannelParams(1.0, 7.0))


def test_empty_battery():
    sol = optimal_allocation(ChannelParams(0.2, 0.0))
    assert sol.eps == () and sol.n_tilde == 0 and sol.value_bits == 0.0
    assert closed_form_value(ChannelParams(0.2, 0.0)) == 0.0


def _exact_threshold(p: Fraction, b: Fraction) -> int:
    n = 1
    while (1 - p) ** n * (1 + p * (b + n)) >= 1:
        n += 1
    return n


@given(st.integers(1, 99), st.integers(1, 5000))
def test_n_tilde_matches_exact_rational_search(p_pct, b):
    p = Fraction(p_pct, 100)
    params = ChannelParams(float(p), float(b))
    n = find_n_tilde(params)
    expected = _exact_threshold(p, Fraction(b))
    # floating rounding can only matter when the inequality is nearly tight
    if n != expected:
        margin = abs(float((1 - p) ** expected * (1 + p * (b + expected))) - 1.0)
        assert margin < 1e-12
    else:
        assert n == expected


@given(open_probs, positive_capacities)
def test_allocation_invariants(p, b):
    params = ChannelParams(p, b)
    sol = optimal_allocation(params)
    eps = np.array(sol.eps)
    assert len(eps) == sol.n_tilde
    assert eps.sum() == pytest.approx(b, rel=1e-9, abs=1e-9)
    assert np.all(eps >= -1e-9 * max(1.0, b))
    assert np.all(np.diff(eps) <= 1e-12 * max(1.0, b))
    # minimality of n_tilde
    q = 1.0 - p
    n = sol.n_tilde
    assert q ** n * (1 + p * (b + n)) < 1
    if n > 1:
        assert q ** (n - 1) * (1 + p * (b + n - 1)) >= 1
    assert sol.value_bits <= 0.5 * math.log2(1 + p * b) + 1e-12


@given(open_probs, positive_capacities)
def test_closed_form_matches_direct_sum(p, b):
    params = ChannelParams(p, b)
    assert closed_form_value(params) == pytest.approx(optimal_allocation(params).value_bits,
                                                      rel=1e-10, abs=1e-12)


@given(open_probs, positive_capacities, st.integers(0, 2**32 - 1))
def test_no_random_feasible_allocation_beats_optimum(p, b, seed):
    params = ChannelParams(p, b)
    best = optimal_allocation(params).value_bits
    rng = np.random.default_rng(seed)
    n = find_n_tilde(params) + 5
    for _ in range(5):
        eps = rng.dirichlet(np.ones(n)) * b
        assert allocation_value(p, eps) <= best + 1e-12


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0, 50))
def test_capped_simplex_projection(values, total):
    v = np.array(values)
    x = project_capped_simplex(v, total)
    assert np.all(x >= 0) and x.sum() <= total + 1e-9
    # projection optimality: no feasible random point is closer
    rng = np.random.default_rng(0)
    for _ in range(10):
        y = rng.dirichlet(np.ones(v.size)) * total * rng.random()
        assert np.linalg.norm(v - x) <= np.linalg.norm(v - y) + 1e-9


@pytest.mark.parametrize("p,b", [(0.05, 10.0), (0.3, 100.0), (0.5, 2.0), (0.9, 0.1)])
def test_oracle_agrees_with_closed_form(p, b):
    params = ChannelParams(p, b)
    sol = optimal_allocation(params)
    oracle = numeric_oracle_allocation(params, horizon=sol.n_tilde + 20)
    assert abs(oracle.value_bits - sol.value_bits) <= 1e-9
    padded = np.zeros(len(oracle.eps))
    padded[:sol.n_tilde] = sol.eps
    assert np.max(np.abs(np.array(oracle.eps) - padded)) <= 1e-6
    assert oracle.n_tilde == sol.n_tilde
    assert oracle.lambda_tilde == pytest.approx(sol.lambda_tilde, rel=1e-6)


def test_oracle_rejects_short_horizon():
    params = ChannelParams(0.1, 10.0)
    with pytest.raises(DomainError):
        numeric_oracle_allocation(params, horizon=find_n_tilde(params))
