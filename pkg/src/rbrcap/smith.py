"""Capacity of the scalar AWGN channel under a peak amplitude constraint.

The input alphabet is restricted to a uniform grid on [-A, A] and the
capacity of the resulting channel is computed with Blahut-Arimoto. Because
the input set is restricted, the achieved mutual information is a valid
lower bound on the amplitude-constrained capacity; the usual BA bracket
``max_x D(x) - I`` certifies how far it is from the grid optimum.

The optimal input law is symmetric, so the solver works with the law of
|X| and folds the Gaussian kernel onto y >= 0. This halves both the input
and output dimensions of every matrix-vector product.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .model import LN2, DomainError

__all__ = [
    "SmithSolution",
    "NonConvergenceError",
    "analytic_sandwich",
    "capacity_amplitude_constrained",
    "cached_capacity",
    "clear_cache",
    "information_density",
    "output_step",
    "DEFAULT_GRID",
    "Y_MARGIN",
]

DEFAULT_GRID = 801
Y_MARGIN = 8.0
MAX_ITER = 100_000
SUPPORT_THRESHOLD = 1e-9
# trapezoid error on unit-variance Gaussians is ~exp(-2 pi^2 / h^2): any step <= 0.25 is exact in double
MIN_OUTPUT_STEP = 0.05
MAX_OUTPUT_STEP = 0.25
_MU_MAX = 1e12
_WARM_ITERS = 200
_MAX_ROUNDS = 500
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SmithSolution:
    """Discretized amplitude-constrained capacity and its input law.

    ``capacity_bits`` is the mutual information of the returned input law;
    the grid optimum lies in ``[capacity_bits, capacity_bits + optimality_gap_bits]``.
    """

    amplitude: float
    capacity_bits: float
    support: tuple
    optimality_gap_bits: float
    iterations: int = 0
    grid_size: int = DEFAULT_GRID
    output_step: float = 0.0

    @property
    def upper_bits(self) -> float:
        return self.capacity_bits + self.optimality_gap_bits


def analytic_sandwich(energy: float) -> tuple[float, float]:
    """Closed-form lower and upper bounds on C_Smith(energy), in bits.

    The lower bound is the uniform-input entropy-power bound and may be
    negative for small energies; the upper bound is the Gaussian capacity
    under the same average power.
    """
    if energy < 0:
        raise DomainError(f"energy must be >= 0, got {energy!r}")
    lower = 0.5 * math.log2(1.0 + energy / 3.0) - 0.5 * math.log2(math.pi * math.e / 6.0)
    upper = 0.5 * math.log2(1.0 + energy)
    return lower, upper


def output_step(amplitude: float) -> float:
    """Trapezoid step for integrals over the channel output."""
    return min(max(MIN_OUTPUT_STEP, 0.005 * amplitude), MAX_OUTPUT_STEP)


def _log_phi(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


class _FoldedChannel:
    """Gaussian kernel between |X| grid points and the folded output grid."""

    def __init__(self, amplitude: float, m: int):
        half = (m - 1) // 2
        self.x = np.linspace(0.0, amplitude, half + 1)
        self.step = output_step(amplitude)
        n_y = int(math.ceil((amplitude + Y_MARGIN) / self.step))
        self.y = self.step * np.arange(n_y + 1)
        self.w = np.full(self.y.size, self.step)
        self.w[0] *= 0.5

        lp_minus = _log_phi(self.y[None, :] - self.x[:, None])
        lp_plus = _log_phi(self.y[None, :] + self.x[:, None])
        phi_minus = np.exp(lp_minus)
        phi_plus = np.exp(lp_plus)
        # kernel mass folded onto y >= 0; row j integrates the density of Y given X = x_j
        self.kernel = phi_minus + phi_plus
        self.weighted_kernel = self.kernel * self.w[None, :]
        self.neg_entropy = (phi_minus * lp_minus + phi_plus * lp_plus) @ self.w
        self._log_kernel = None

    def log_kernel(self):
        if self._log_kernel is None:
            self._log_kernel = np.logaddexp(
                _log_phi(self.y[None, :] - self.x[:, None]),
                _log_phi(self.y[None, :] + self.x[:, None]))
        return self._log_kernel

    def log_mixture(self, log_b: np.ndarray) -> np.ndarray:
        """log q_Y on the folded output grid for the |X| law exp(log_b)."""
        q_y = 0.5 * (np.exp(log_b) @ self.kernel)
        if q_y.min() > 1e-280:
            return np.log(q_y)
        return logsumexp(log_b[:, None] + self.log_kernel(), axis=0) - math.log(2.0)

    def densities(self, log_b: np.ndarray) -> tuple[np.ndarray, float]:
        """Information densities D(x_j) and mutual information, in nats."""
        d = self.neg_entropy - self.weighted_kernel @ self.log_mixture(log_b)
        return d, float(np.exp(log_b) @ d)


def _normalize(log_b):
    return log_b - logsumexp(log_b)


def _ba_phase(ch, log_b, tol, max_iter, callback):
    """Accelerated BA until the bracket drops below ``tol`` bits or ``max_iter``."""
    d, mi = ch.densities(log_b)
    gap = float(d.max()) - mi
    if callback is not None:
        callback(0, mi / LN2, gap / LN2)
    mu = 1.0
    it = 0
    while gap / LN2 >= tol and it < max_iter:
        it += 1
        d_max = float(d.max())
        while True:
            cand = _normalize(log_b + mu * (d - d_max))
            d_new, mi_new = ch.densities(cand)
            if mi_new >= mi:
                break
            if mu == 1.0:
                # plain BA never decreases I; allow only rounding noise
                if mi_new < mi - 1e-13 * max(1.0, mi):
                    raise NonConvergenceError(
                        f"BA objective decreased by {mi - mi_new:.3g} nats at iteration {it}")
                break
            mu = max(1.0, mu / 4.0)
        log_b, d, mi = cand, d_new, max(mi_new, mi)
        gap = float(d.max()) - mi
        mu = min(2.0 * mu, _MU_MAX)
        if callback is not None:
            callback(it, mi / LN2, gap / LN2)
    return log_b, d, mi, it


def _restricted_newton(ch, idx, b, tol_nats, max_steps=500):
    """Maximize I over laws of |X| supported on the grid indices ``idx``.

    Primal active-set Newton: zero coordinates whose gradient lies below the
    support multiplier stay pinned, a ratio test drops coordinates that hit
    zero, and backtracking keeps I nondecreasing.
    """
    k = ch.kernel[idx]
    kw = ch.weighted_kernel[idx]
    ne = ch.neg_entropy[idx]
    mass = kw.sum(axis=1)

    def evaluate(weights):
        s = weights @ k
        d = ne - kw @ np.log(0.5 * s)
        return s, d, float(weights @ d)

    s, d, mi = evaluate(b)
    pinned = np.zeros(b.size, dtype=bool)
    damping = 0.0
    steps = 0
    while steps < max_steps and float(d.max()) - mi >= tol_nats:
        g = d - mass
        nu = float(b @ g)
        free = (b > 0) | ((g > nu) & ~pinned)
        fi = np.flatnonzero(free)
        n_free = fi.size
        hess = (kw[fi] / s) @ k[fi].T
        if damping > 0:
            # adjacent grid points give nearly collinear kernel rows
            hess[np.diag_indices(n_free)] += damping * np.trace(hess) / n_free
        kkt = np.zeros((n_free + 1, n_free + 1))
        kkt[:n_free, :n_free] = hess
        kkt[:n_free, n_free] = 1.0
        kkt[n_free, :n_free] = 1.0
        rhs = np.append(g[fi], 0.0)
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        direction = np.zeros_like(b)
        direction[fi] = sol[:n_free]

        blocking = (b <= 0) & (direction < 0)
        if blocking.any():
            pinned |= blocking
            continue
        steps += 1
        # projected full step first: drops every coordinate that overshoots at once
        cand = np.maximum(b + direction, 0.0)
        cand /= cand.sum()
        s_c, d_c, mi_c = evaluate(cand)
        # near the optimum the predicted gain falls below the rounding level of I
        accepted = mi_c >= mi - 1e-15 * max(1.0, mi)
        if not accepted:
            dec = direction < 0
            ratios = np.where(dec, b / np.where(dec, -direction, 1.0), np.inf)
            j_block = int(np.argmin(ratios))
            alpha_max = float(ratios[j_block])
            alpha = min(1.0, alpha_max)
            while alpha > 1e-14:
                cand = np.maximum(b + alpha * direction, 0.0)
                if alpha == alpha_max:
                    cand[j_block] = 0.0
                cand /= cand.sum()
                s_c, d_c, mi_c = evaluate(cand)
                if mi_c > mi:
                    accepted = True
                    break
                alpha *= 0.5
        if accepted:
            b, s, d, mi = cand, s_c, d_c, mi_c
            pinned[:] = False
            damping = damping / 100.0 if damping > 1e-10 else 0.0
        else:
            damping = 1e-10 if damping == 0.0 else 100.0 * damping
            if damping > 1e10:
                break
    return b, mi


def _local_maxima(v, floor):
    left = np.concatenate(([True], v[1:] >= v[:-1]))
    right = np.concatenate((v[:-1] >= v[1:], [True]))
    return np.flatnonzero(left & right & (v > floor))


def capacity_amplitude_constrained(
    amplitude: float,
    tol: float = 1e-6,
    m: int = DEFAULT_GRID,
    max_iter: int = MAX_ITER,
    callback: Optional[Callable[[int, float, float], None]] = None,
) -> SmithSolution:
    """Blahut-Arimoto capacity of the channel Y = X + Z with |X| <= amplitude.

    Parameters
    ----------
    amplitude : float
        Peak amplitude A; the input grid is ``linspace(-A, A, m)``.
    tol : float
        Stop once the BA bracket ``max_x D(x) - I`` is below ``tol`` bits.
    m : int
        Odd number of input grid points, so that 0 lies on the grid.
    callback : callable, optional
        Called as ``callback(iteration, mi_bits, gap_bits)`` each time the
        incumbent input law changes (and once for the initial law).

    Notes
    -----
    The BA update ``q <- q * exp(mu * D)`` is plain BA at ``mu = 1``. Larger
    ``mu`` is tried first and kept only if the mutual information does not
    decrease; at low SNR the densities differ by O(A^2) and plain BA would
    need O(1/A^2) iterations.

    Once the optimal law has interior mass points between grid nodes BA
    slows to a sublinear crawl, so after a warm start the law is polished by
    an active-set Newton method on a sparse support, adding grid points whose
    information density exceeds the current rate. Every candidate law is
    checked against the full grid, and the reported gap is the tightest
    bracket seen.
    """
    if not (amplitude >= 0 and math.isfinite(amplitude)):
        raise DomainError(f"amplitude must be finite and >= 0, got {amplitude!r}")
    if tol <= 0:
        raise DomainError(f"tol must be > 0, got {tol!r}")
    if m < 3 or m % 2 == 0:
        raise DomainError(f"grid size must be odd and >= 3, got {m!r}")
    if amplitude == 0:
        if callback is not None:
            callback(0, 0.0, 0.0)
        return SmithSolution(0.0, 0.0, ((0.0, 1.0),), 0.0, 0, m, output_step(0.0))

    ch = _FoldedChannel(amplitude, m)
    n = ch.x.size
    # uniform law on the full grid, expressed as the law of |X|
    log_b = np.full(n, math.log(2.0 / m))
    log_b[0] = math.log(1.0 / m)

    log_b, d, mi, it = _ba_phase(ch, log_b, tol, min(_WARM_ITERS, max_iter), callback)
    best_b, best_mi = np.exp(log_b), mi
    upper = float(d.max())

    support = _local_maxima(best_b, 1e-6)
    law = best_b[support] / best_b[support].sum()
    rounds = 0
    while (upper - best_mi) / LN2 >= tol:
        if it >= max_iter or rounds >= _MAX_ROUNDS:
            raise NonConvergenceError(
                f"BA did not reach gap {tol:g} bits (amplitude={amplitude!r}, m={m}, "
                f"gap={(upper - best_mi) / LN2:.3g} after {it} iterations)")
        rounds += 1
        law, _ = _restricted_newton(ch, support, law, 0.05 * tol * LN2)
        full = np.full(n, -np.inf)
        with np.errstate(divide="ignore"):
            full[support] = np.log(law)
        d, mi = ch.densities(full)
        upper = min(upper, float(d.max()))
        it += 1
        if mi > best_mi:
            best_b, best_mi = np.exp(full), mi
            if callback is not None:
                callback(it, best_mi / LN2, (upper - best_mi) / LN2)
        if (upper - best_mi) / LN2 < tol:
            break
        keep = law > 0
        support, law = support[keep], law[keep]
        new = np.setdiff1d(_local_maxima(d, mi), support)
        if new.size == 0:
            new = np.setdiff1d(np.flatnonzero(d > mi), support)[:1]
            if new.size == 0:
                raise NonConvergenceError(
                    f"no improving grid point although gap is {(upper - best_mi) / LN2:.3g} bits")
        order = np.argsort(np.concatenate((support, new)))
        support = np.concatenate((support, new))[order]
        law = np.concatenate((law, np.zeros(new.size)))[order]

    b = best_b
    gap = upper - best_mi
    support_pts = []
    for x, weight in zip(ch.x, b):
        if x == 0.0:
            if weight > SUPPORT_THRESHOLD:
                support_pts.append((0.0, float(weight)))
        elif weight / 2 > SUPPORT_THRESHOLD:
            support_pts.append((-float(x), float(weight / 2)))
            support_pts.append((float(x), float(weight / 2)))
    support_pts.sort()
    return SmithSolution(
        amplitude=float(amplitude),
        capacity_bits=max(best_mi, 0.0) / LN2,
        support=tuple(support_pts),
        optimality_gap_bits=max(gap, 0.0) / LN2,
        iterations=it,
        grid_size=m,
        output_step=ch.step,
    )


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def cached_capacity(amplitude: float, tol: float = 1e-6, m: int = DEFAULT_GRID) -> SmithSolution:
    """Memoized :func:`capacity_amplitude_constrained`.

    Concurrent callers may both compute a missing entry; the results are
    identical so the last write wins harmlessly.
    """
    key = (round(float(amplitude), 12), float(tol), int(m))
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
    if hit is not None:
        return hit
    sol = capacity_amplitude_constrained(amplitude, tol, m)
    with _CACHE_LOCK:
        _CACHE[key] = sol
    return sol


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def information_density(support, weights, x: float, quadrature=None) -> float:
    """Relative entropy D(N(x, 1) || q_Y) in bits.

    ``q_Y`` is the output density induced by the input law putting mass
    ``weights`` on ``support``. ``quadrature`` is an optional ``(nodes,
    node_weights)`` pair for the integral over y; by default a uniform
    trapezoid rule on ``[min(support) - 8, max(support) + 8]`` with step
    :func:`output_step` is used.
    """
    support = np.asarray(support, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if support.shape != weights.shape or support.size == 0:
        raise DomainError("support and weights must be nonempty and of equal length")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise DomainError("weights must form a probability distribution")
    if quadrature is None:
        lo, hi = float(min(support.min(), x)), float(max(support.max(), x))
        h = output_step(max(abs(lo), abs(hi)))
        nodes = np.arange(lo - Y_MARGIN, hi + Y_MARGIN + h / 2, h)
        node_w = np.full(nodes.size, h)
    else:
        nodes, node_w = (np.asarray(a, dtype=float) for a in quadrature)
    keep = weights > 0
    log_q = logsumexp(np.log(weights[keep])[:, None] + _log_phi(nodes[None, :] - support[keep, None]),
                      axis=0)
    if not np.all(np.isfinite(log_q)):
        raise NonConvergenceError("output mixture underflowed on the quadrature grid")
    lk = _log_phi(nodes - x)
    return float(np.sum(node_w * np.exp(lk) * (lk - log_q)) / LN2)
