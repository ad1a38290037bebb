"""Explicit capacity bounds for the Bernoulli-recharge AWGN channel.

Causal bounds come from the online power-control value; noncausal bounds
from per-epoch uniform energy splitting over an epoch of known length.
Series over the epoch length ``k`` are truncated with an explicit tail
bound: every term is at most ``p**2 (1-p)**(k-1) * b_bar / (2 ln 2)``, so the
neglected tail is below ``p (1-p)**K * b_bar / (2 ln 2)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import LN2, ChannelParams, DomainError, validate_params
from .power_control import find_n_tilde, optimal_allocation
from .smith import DEFAULT_GRID, cached_capacity

__all__ = [
    "GAP_BITS",
    "DEFAULT_TOL",
    "DEFAULT_SMITH_TOL",
    "BoundsReport",
    "causal_upper",
    "causal_lower",
    "infinite_battery_upper",
    "noncausal_terms",
    "noncausal_upper",
    "noncausal_lower_analytic",
    "noncausal_lower_smith",
    "lattice_floor",
    "bounds_report",
    "sweep",
    "thread_count",
]

GAP_BITS = 0.5 * math.log2(math.pi * math.e / 2.0)
DEFAULT_TOL = 1e-9
DEFAULT_SMITH_TOL = 1e-6


@dataclass(frozen=True)
class BoundsReport:
    params: ChannelParams
    causal_upper: float
    causal_lower: float
    noncausal_upper: float
    noncausal_lower_analytic: float
    noncausal_lower_smith: float
    infinite_battery_upper: float
    n_tilde: int


def causal_upper(params: ChannelParams) -> float:
    return optimal_allocation(params).value_bits


def causal_lower(params: ChannelParams) -> float:
    # reported unclamped so that the gap to the upper bound is exact
    return causal_upper(params) - GAP_BITS


def infinite_battery_upper(params: ChannelParams) -> float:
    return 0.5 * math.log1p(params.p * params.b_bar) / LN2


def noncausal_terms(params: ChannelParams, tol: float) -> int:
    """Number of epoch lengths K kept so that the series tail is below ``tol``."""
    if tol <= 0:
        raise DomainError(f"tol must be > 0, got {tol!r}")
    p, b = params.p, params.b_bar
    if b == 0.0:
        return 0
    if p == 1.0:
        return 1
    scale = p * b / (2.0 * LN2)
    if scale * (1.0 - p) < tol:
        return 1
    # log-space initial guess, then settle on the smallest K by direct checks
    k = max(1, int(math.ceil(math.log(tol / scale) / math.log1p(-p))))
    while k > 1 and scale * (1.0 - p) ** (k - 1) < tol:
        k -= 1
    while scale * (1.0 - p) ** k >= tol:
        k += 1
    return k


def _epoch_weights(p: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, n + 1, dtype=float)
    return k, p * p * (1.0 - p) ** (k - 1)


def noncausal_upper(params: ChannelParams, tol: float = DEFAULT_TOL) -> float:
    n = noncausal_terms(params, tol)
    if n == 0:
        return 0.0
    k, w = _epoch_weights(params.p, n)
    return float(np.sum(w * 0.5 * k * np.log1p(params.b_bar / k)) / LN2)


def noncausal_lower_analytic(params: ChannelParams, tol: float = DEFAULT_TOL) -> float:
    return noncausal_upper(params, tol) - GAP_BITS


def lattice_floor(energy: float, ratio: float) -> float:
    """Largest ``ratio**j`` (integer j) not exceeding ``energy``."""
    if energy <= 0:
        return 0.0
    j = math.floor(math.log(energy) / math.log(ratio))
    snapped = ratio ** j
    while snapped > energy:
        j -= 1
        snapped = ratio ** j
    return snapped


def noncausal_lower_smith(params: ChannelParams, tol: float = DEFAULT_TOL,
                          smith_tol: float = DEFAULT_SMITH_TOL, m: int = DEFAULT_GRID,
                          energy_lattice: Optional[float] = None) -> float:
    """Lower bound sum_k p^2 (1-p)^(k-1) k C_Smith(b_bar / k), in bits.

    Each C_Smith value is the mutual information of a feasible input law, so
    every partial sum is a lower bound. With ``energy_lattice = r > 1`` each
    per-slot energy is first rounded down to a power of ``r``; C_Smith is
    nondecreasing in the energy, so the result stays a lower bound while the
    solver memo is shared across epoch lengths and sweep points.
    """
    if smith_tol <= 0:
        raise DomainError(f"smith_tol must be > 0, got {smith_tol!r}")
    if energy_lattice is not None and not energy_lattice > 1.0:
        raise DomainError(f"energy lattice ratio must exceed 1, got {energy_lattice!r}")
    n = noncausal_terms(params, tol)
    if n == 0:
        return 0.0
    k, w = _epoch_weights(params.p, n)
    total = 0.0
    for kk, wk in zip(k, w):
        energy = params.b_bar / kk
        if energy_lattice is not None:
            energy = lattice_floor(energy, energy_lattice)
        total += wk * kk * cached_capacity(math.sqrt(energy), smith_tol, m).capacity_bits
    return float(total)


def bounds_report(params: ChannelParams, tol: float = DEFAULT_TOL,
                  smith_tol: float = DEFAULT_SMITH_TOL, m: int = DEFAULT_GRID,
                  energy_lattice: Optional[float] = None) -> BoundsReport:
    upper = causal_upper(params)
    nc_upper = noncausal_upper(params, tol)
    return BoundsReport(
        params=params,
        causal_upper=upper,
        causal_lower=upper - GAP_BITS,
        noncausal_upper=nc_upper,
        noncausal_lower_analytic=nc_upper - GAP_BITS,
        noncausal_lower_smith=noncausal_lower_smith(params, tol, smith_tol, m, energy_lattice),
        infinite_battery_upper=infinite_battery_upper(params),
        n_tilde=find_n_tilde(params),
    )


def thread_count(default: Optional[int] = None) -> int:
    """Sweep parallelism, capped by the ``RBRCAP_THREADS`` environment variable."""
    n = default or os.cpu_count() or 1
    cap = os.environ.get("RBRCAP_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise DomainError(f"RBRCAP_THREADS must be an integer, got {cap!r}") from None
    return n


def sweep(p: float, b_bar_grid: Sequence[float], tol: float = DEFAULT_TOL,
          smith_tol: float = DEFAULT_SMITH_TOL, m: int = DEFAULT_GRID,
          energy_lattice: Optional[float] = None,
          threads: Optional[int] = None) -> list[BoundsReport]:
    """One :class:`BoundsReport` per battery size, in grid order."""
    grid = [float(b) for b in b_bar_grid]
    if not grid:
        raise DomainError("b_bar grid is empty")
    if any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
        raise DomainError("b_bar grid must be strictly increasing")
    points = [validate_params(p, b) for b in grid]

    def one(params):
        return bounds_report(params, tol, smith_tol, m, energy_lattice)

    workers = min(thread_count(threads), len(points))
    if workers <= 1:
        return [one(pt) for pt in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, points))
