"""Asymptotic calibration of the max-aggregated detector.

Under the null, ``a_d * (max statistic - b_d)`` is approximately standard
Gumbel, which gives the critical value ``g_{1-alpha} / a_d + b_d``.  The
distribution function of the Brownian-motion range on ``[0, q]`` is also
provided; it is the per-component limit law and serves as a test oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import BadAlpha, DimensionTooSmall

__all__ = [
    "Scaling",
    "weight",
    "q_of_T",
    "scaling",
    "gumbel_quantile",
    "gumbel_cdf",
    "threshold",
    "range_bm_cdf",
]

_LOG_16_OVER_PI = math.log(16.0 / math.pi)


@dataclass(frozen=True)
class Scaling:
    a_d: float
    b_d: float
    q: float


def weight(t: float) -> float:
    """Boundary weight ``1 / (1 + t)``."""
    return 1.0 / (1.0 + t)


def q_of_T(T: float) -> float:
    T = float(T)
    return T / (T + 1.0)


def scaling(d: int, T: float) -> Scaling:
    """Gumbel normalising constants for ``d`` components and horizon factor ``T``."""
    if d < 2:
        raise DimensionTooSmall(f"Gumbel scaling needs d >= 2, got d={d}")
    q = q_of_T(T)
    L = math.log(d)
    a = math.sqrt(2.0 * L / q)
    b = math.sqrt(2.0 * q * L) - math.sqrt(q) * (math.log(L) - _LOG_16_OVER_PI) / (
        2.0 * math.sqrt(2.0 * L)
    )
    return Scaling(a_d=a, b_d=b, q=q)


def gumbel_quantile(alpha: float) -> float:
    """``(1 - alpha)``-quantile of the standard Gumbel law."""
    if not 0.0 < alpha < 1.0:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")
    return -math.log(-math.log1p(-alpha))


def gumbel_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=np.float64)))


def threshold(d: int, T: float, alpha: float) -> float:
    """Critical value ``c_{d,alpha} = g_{1-alpha} / a_d + b_d``."""
    s = scaling(d, T)
    return gumbel_quantile(alpha) / s.a_d + s.b_d


_MAX_TERMS = 200
_TERM_TOL = 1e-14
_LOW_PRECISION_X = 0.05
_DUAL_BELOW = 1.2
_DUAL_TERMS = 6


def _range_cdf_dual(z: np.ndarray) -> np.ndarray:
    """Theta-transformed series, all terms positive; used for small ``z``.

    ``8 sum_{n>=0} exp(-c_n / z^2) (1/z^2 + 1/(2 c_n))``, ``c_n = (2n+1)^2 pi^2 / 2``.
    At ``z = 1.2`` the second term is already below 1e-26 of the first.
    """
    acc = np.zeros_like(z)
    for n in range(_DUAL_TERMS):
        c = (2 * n + 1) ** 2 * math.pi**2 / 2.0
        acc += np.exp(-c / z**2) * (1.0 / z**2 + 1.0 / (2.0 * c))
    return 8.0 * acc


def _range_cdf_alternating(z: np.ndarray) -> np.ndarray:
    acc = np.ones_like(z)
    live = np.ones_like(z, dtype=bool)
    for k in range(1, _MAX_TERMS + 1):
        term = 8.0 * k * ndtr(-k * z)
        acc -= np.where(live, term if k % 2 else -term, 0.0)
        live &= term >= _TERM_TOL
        if not live.any():
            break
    return acc


def range_bm_cdf(x, q: float = 1.0):
    """CDF of ``max W - min W`` for a standard Brownian motion on ``[0, q]``.

    Uses ``1 + 8 sum_k (-1)^k k Phi(-k x / sqrt(q))``, truncated once a term
    drops below 1e-14 in magnitude (at most 200 terms).  For
    ``x / sqrt(q) < 1.2`` that alternating series cancels badly, so the
    equivalent theta-transformed series is summed instead.  Arguments in
    ``(0, 0.05)`` warn: the result underflows to 0 there.  Output is clamped
    into [0, 1].
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(xa)
    pos = xa > 0
    if np.any(pos & (xa < _LOW_PRECISION_X)):
        warnings.warn(
            "range_bm_cdf: x < 0.05 is far in the lower tail, result underflows to 0",
            RuntimeWarning,
            stacklevel=2,
        )
    z = xa[pos] / math.sqrt(q)
    small = z < _DUAL_BELOW
    vals = np.empty_like(z)
    vals[small] = _range_cdf_dual(z[small])
    vals[~small] = _range_cdf_alternating(z[~small])
    out[pos] = np.clip(vals, 0.0, 1.0)
    if np.ndim(x) == 0:
        return float(out[0])
    return out
