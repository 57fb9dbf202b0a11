"""Renyi-DP accounting for the subsampled Gaussian mechanism.

Per-step RDP at order ``a`` is ``log(A_a) / (a - 1)`` with

    A_a = E_{x ~ N(0, s^2)} [((1 - q) + q * exp((2x - 1) / (2 s^2)))^a],

composed linearly over steps and converted to (epsilon, delta) by
``eps = min_a rdp(a) + log(1/delta) / (a - 1)``.
Integer orders use the binomial expansion of ``A_a``; fractional orders are
integrated numerically in log space.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

log = logging.getLogger(__name__)

DEFAULT_ORDERS: tuple[float, ...] = tuple(1.0 + 0.25 * k for k in range(1, 253)) + tuple(
    float(a) for a in range(65, 257)
)


@dataclass(frozen=True)
class AccountantResult:
    epsilon: float
    best_order: float
    rdp_curve: tuple[float, ...] = field(repr=False)
    orders: tuple[float, ...] = field(default=(), repr=False)


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    k = np.arange(alpha + 1, dtype=np.float64)
    log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    terms = log_binom + k * math.log(q) + (alpha - k) * math.log1p(-q) + k * (k - 1) / (2 * sigma**2)
    return float(logsumexp(terms))


@lru_cache(maxsize=4096)
def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    # the integrand is a mixture of Gaussians of width sigma centred in [0, alpha];
    # trapezoid sums converge exponentially for such smooth, fast-decaying functions
    lo, hi = -30.0 * sigma, alpha + 30.0 * sigma
    npts = int(math.ceil((hi - lo) / (sigma / 40.0))) + 1
    x = np.linspace(lo, hi, npts)
    log_pdf = -0.5 * (x / sigma) ** 2 - math.log(sigma * math.sqrt(2 * math.pi))
    log_ratio = np.logaddexp(math.log1p(-q), math.log(q) + (2 * x - 1) / (2 * sigma**2))
    log_f = log_pdf + alpha * log_ratio
    w = np.full(npts, x[1] - x[0])
    w[0] = w[-1] = 0.5 * (x[1] - x[0])
    return float(logsumexp(log_f, b=w))


def _rdp_step(q: float, sigma: float, alpha: float) -> float:
    if q == 1.0:
        return alpha / (2 * sigma**2)
    if float(alpha).is_integer():
        log_a = _log_a_int(q, sigma, int(alpha))
    else:
        log_a = _log_a_frac(q, sigma, float(alpha))
    return log_a / (alpha - 1)


def _check_orders(orders) -> np.ndarray:
    orders = np.asarray(orders, dtype=np.float64).ravel()
    if orders.size == 0 or np.any(orders <= 1) or not np.all(np.isfinite(orders)):
        raise ValueError("orders must be a non-empty list of finite values > 1")
    return orders


def rdp_sampled_gaussian(q: float, sigma: float, steps: int, orders: Sequence[float] = DEFAULT_ORDERS) -> np.ndarray:
    """Total RDP of ``steps`` compositions at each order (``inf`` when ``sigma == 0``)."""
    orders = _check_orders(orders)
    if not 0 < q <= 1:
        raise ValueError("sampling rate must lie in (0, 1]")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if sigma < 0:
        raise ValueError("noise multiplier must be non-negative")
    if sigma == 0:
        return np.full(orders.shape, math.inf)
    per_step = np.array([_rdp_step(float(q), float(sigma), float(a)) for a in orders])
    return steps * per_step


def rdp_to_dp(rdp_curve, orders: Sequence[float], delta: float) -> AccountantResult:
    orders = _check_orders(orders)
    rdp_curve = np.asarray(rdp_curve, dtype=np.float64)
    if rdp_curve.shape != orders.shape:
        raise ValueError("rdp curve and orders are not aligned")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    eps = rdp_curve + math.log(1 / delta) / (orders - 1)
    i = int(np.argmin(eps))
    epsilon = float(eps[i])
    if epsilon < 0:
        log.warning("negative epsilon %.3g from order grid clamped to 0", epsilon)
        epsilon = 0.0
    return AccountantResult(epsilon, float(orders[i]), tuple(rdp_curve.tolist()), tuple(orders.tolist()))


def gaussian_delta_bound(sigma: float, epsilon: float) -> float:
    """Smallest delta for which one Gaussian release with multiplier sigma is (eps, delta)-DP."""
    if sigma <= 0 or epsilon <= 0:
        raise ValueError("sigma and epsilon must be positive")
    return 0.8 * math.exp(-((sigma * epsilon) ** 2) / 2)


def training_epsilon(
    n_training: int,
    batch_size: int,
    epochs: int,
    sigma: float,
    delta: float,
    orders: Sequence[float] = DEFAULT_ORDERS,
) -> AccountantResult:
    """Privacy spent by ``epochs`` passes of fixed-size mini-batches (partial batch dropped)."""
    if not 0 < batch_size <= n_training:
        raise ValueError("batch size must lie in [1, n_training]")
    q = batch_size / n_training
    steps = epochs * (n_training // batch_size)
    return rdp_to_dp(rdp_sampled_gaussian(q, sigma, steps, orders), orders, delta)


def sigma_for_epsilon(
    target_epsilon: float,
    n_training: int,
    batch_size: int,
    epochs: int,
    delta: float,
    orders: Sequence[float] = DEFAULT_ORDERS,
    lo: float = 0.3,
    hi: float = 100.0,
    tol: float = 1e-4,
) -> float:
    """Noise multiplier whose training epsilon equals ``target_epsilon`` (bisection)."""

    def eps(s):
        return training_epsilon(n_training, batch_size, epochs, s, delta, orders).epsilon

    if eps(hi) > target_epsilon or eps(lo) < target_epsilon:
        raise ValueError(f"target epsilon {target_epsilon} not bracketed by sigma in [{lo}, {hi}]")
    while hi - lo > tol * lo:
        mid = math.sqrt(lo * hi)
        if eps(mid) > target_epsilon:
            lo = mid
        else:
            hi = mid
    return hi
