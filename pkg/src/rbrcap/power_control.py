"""Online power control for the Bernoulli-recharge battery.

Within an epoch the transmitter only knows how many slots have passed since
the last recharge. Slot ``i`` of an epoch is reached with probability
``(1 - p)**(i - 1)``, so the long-term rate of an age-indexed allocation
``eps`` is ``sum_i p (1 - p)**(i - 1) * 0.5 * log2(1 + eps_i)``. The optimal
allocation is a geometric water-filling: positive energy on the first
``n_tilde`` slots only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LN2, ChannelParams, DomainError

__all__ = [
    "AllocationSolution",
    "find_n_tilde",
    "optimal_allocation",
    "closed_form_value",
    "numeric_oracle_allocation",
    "project_capped_simplex",
    "allocation_value",
]

N_TILDE_CAP = 10**9


@dataclass(frozen=True)
class AllocationSolution:
    """Per-age energy allocation, water-filling multiplier and value.

    ``eps[i]`` is the energy spent in slot ``i + 1`` of an epoch; slots past
    ``len(eps)`` get nothing. ``lambda_tilde`` is the multiplier of the total
    energy constraint in nats per unit energy.
    """

    eps: tuple
    n_tilde: int
    lambda_tilde: float
    value_bits: float

    def energy(self, age: int) -> float:
        return self.eps[age - 1] if 1 <= age <= len(self.eps) else 0.0


def _weights(p: float, n: int) -> np.ndarray:
    return p * (1.0 - p) ** np.arange(n)


def allocation_value(p: float, eps) -> float:
    """Long-term rate in bits of an age-indexed allocation, by direct summation."""
    eps = np.asarray(eps, dtype=float)
    if eps.size == 0:
        return 0.0
    return float(np.sum(_weights(p, eps.size) * 0.5 * np.log1p(eps)) / LN2)


def find_n_tilde(params: ChannelParams) -> int:
    """Smallest n >= 1 with (1 - p)**n * (1 + p * (b_bar + n)) < 1."""
    p, b = params.p, params.b_bar
    q = 1.0 - p
    n = 1
    while q ** n * (1.0 + p * (b + n)) >= 1.0:
        n += 1
        if n > N_TILDE_CAP:
            raise RuntimeError(f"n_tilde search exceeded {N_TILDE_CAP} for {params!r}")
    return n


def optimal_allocation(params: ChannelParams) -> AllocationSolution:
    """KKT solution of the online power-control program.

    With zero battery capacity nothing can be spent; the returned solution
    then has an empty allocation, ``n_tilde = 0`` and the multiplier ``p/2``
    at which slot 1 is exactly indifferent.
    """
    p, b = params.p, params.b_bar
    if b == 0.0:
        return AllocationSolution((), 0, p / 2.0, 0.0)
    n = find_n_tilde(params)
    tail = (1.0 - p) ** n
    w = _weights(p, n)
    head = 1.0 - tail
    # b kept out of the cancelling difference: at p = 1 this gives eps = (b,) exactly
    eps = (n * w / head - 1.0) + b * w / head
    lam = head / (2.0 * (b + n))
    return AllocationSolution(tuple(float(e) for e in eps), n, lam, allocation_value(p, eps))


def closed_form_value(params: ChannelParams) -> float:
    """Closed-form optimal value in bits; undefined at p = 1 (0 * log 0)."""
    p, b = params.p, params.b_bar
    if p >= 1.0:
        raise DomainError("closed form is indeterminate at p = 1; use optimal_allocation")
    if b == 0.0:
        return 0.0
    n = find_n_tilde(params)
    tail = (1.0 - p) ** n
    head = 1.0 - tail
    first = 0.5 * head * math.log(p * (b + n) / head)
    second = (1.0 - p - tail * (1.0 - p + n * p)) / (2.0 * p) * math.log1p(-p)
    return (first + second) / LN2


def project_capped_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= total}."""
    x = np.maximum(v, 0.0)
    if x.sum() <= total:
        return x
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, v.size + 1)
    pos = np.flatnonzero(u - css / k > 0)
    # empty only when total is below the rounding level of the largest entry
    rho = pos[-1] if pos.size else 0
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def numeric_oracle_allocation(params: ChannelParams, horizon: int, tol: float = 1e-12,
                              max_iter: int = 1_000_000) -> AllocationSolution:
    """Projected-gradient maximizer of the truncated power-control program.

    Uses the fixed step ``1/L`` with ``L = p / (2 ln 2)``, the largest
    curvature of any term, plus Nesterov momentum that is reset whenever the
    gradient step points against it. Iteration stops once the iterate moves
    by less than ``tol`` in every coordinate, the objective gain is below
    ``tol``, and a plain projected-gradient step from the iterate also moves
    less than ``tol``.
    """
    p, b = params.p, params.b_bar
    if tol <= 0:
        raise DomainError(f"tol must be > 0, got {tol!r}")
    if b == 0.0:
        return AllocationSolution((0.0,) * horizon, 0, p / 2.0, 0.0)
    n_min = find_n_tilde(params) + 10
    if horizon < n_min:
        raise DomainError(f"horizon {horizon} too short, need at least {n_min}")

    w = _weights(p, horizon)
    step = 2.0 * LN2 / p

    def value(e):
        return float(np.sum(w * np.log1p(e)) / (2.0 * LN2))

    def grad(e):
        return w / (2.0 * LN2 * (1.0 + e))

    x = project_capped_simplex(np.full(horizon, b / horizon), b)
    fx = value(x)
    z, t = x.copy(), 1.0
    for _ in range(max_iter):
        x_new = project_capped_simplex(z + step * grad(z), b)
        f_new = value(x_new)
        moved = np.max(np.abs(x_new - x))
        if np.dot(x_new - z, x_new - x) < 0.0:
            # gradient step disagrees with the momentum direction: restart
            t_new = 1.0
            z = x_new
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        gain = f_new - fx
        x, fx, t = x_new, f_new, t_new
        if moved < tol and abs(gain) < tol:
            residual = np.max(np.abs(project_capped_simplex(x + step * grad(x), b) - x))
            if residual < tol:
                break
    else:
        raise RuntimeError(f"projected gradient did not converge in {max_iter} iterations")

    active = np.flatnonzero(x > 1e-12 * max(1.0, b))
    n_active = int(active[-1]) + 1 if active.size else 0
    # stationarity on the active slots gives the multiplier
    lam = float(np.mean(w[active] / (2.0 * (1.0 + x[active])))) if active.size else p / 2.0
    return AllocationSolution(tuple(float(e) for e in x), n_active, lam, fx)
