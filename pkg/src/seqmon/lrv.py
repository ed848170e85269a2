"""Long-run variance, covariance and correlation estimators.

All estimators see only the stable initial sample.  Two flavours are
provided:

* ``standard_truncated``: truncated sum of autocovariances up to ``floor(H)``
  with the unbiased-style denominator ``m - t``;
* ``quadratic_spectral``: every lag weighted by the quadratic spectral kernel
  ``k(t / H)``, autocovariances normalised by ``m``.

If an estimate comes out non-positive it is replaced by
``floor_fraction * sample variance`` and the component is reported in
``LrvEstimate.floored``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .core import (
    BadSpec,
    BandwidthTooLarge,
    CorrelationEstimate,
    DegenerateComponent,
    LagTooLarge,
    LrvConfig,
    ObservationMatrix,
)

__all__ = [
    "LrvEstimate",
    "autocov",
    "qs_kernel",
    "lrv_standard",
    "lrv_qs",
    "lrcov",
    "estimate_lrv",
    "correlation_matrix",
]

_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True)
class LrvEstimate:
    sigma2: np.ndarray
    method: LrvConfig
    floored: frozenset[int]

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)

    @property
    def d(self) -> int:
        return self.sigma2.shape[0]


def _column(stable: ObservationMatrix, h: int) -> np.ndarray:
    if not 1 <= h <= stable.n_cols:
        raise IndexError(f"component {h} outside 1..{stable.n_cols}")
    return stable.values[:, h - 1]


def autocov(stable: ObservationMatrix, t: int, h: int, denom: str = "m") -> float:
    """Lag-``t`` autocovariance of component ``h`` around the stable mean.

    ``denom`` is ``"m"`` or ``"m_minus_t"``.
    """
    x = _column(stable, h)
    m = x.shape[0]
    if t < 0 or t >= m:
        raise LagTooLarge(f"lag {t} needs 0 <= t <= m-1 = {m - 1}")
    xc = x - x.mean()
    s = float(np.dot(xc[t:], xc[: m - t]))
    if denom == "m":
        return s / m
    if denom == "m_minus_t":
        return s / (m - t)
    raise BadSpec(f"unknown denominator {denom!r}")


def qs_kernel(x) -> np.ndarray | float:
    """Quadratic spectral kernel, ``k(0) = 1``."""
    xa = np.asarray(x, dtype=np.float64)
    z = 6.0 * np.pi * xa / 5.0
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    core = np.sin(zs) / zs - np.cos(zs)
    # Taylor expansion of sin(z)/z - cos(z) near 0 avoids cancellation
    z2 = z * z
    series = z2 / 3.0 - z2 * z2 / 30.0 + z2**3 / 840.0
    core = np.where(small, series, core)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 25.0 / (12.0 * np.pi**2 * xa**2) * core
    k = np.where(xa == 0.0, 1.0, k)
    if np.ndim(x) == 0:
        return float(k)
    return k


def _floor(value: float, xc: np.ndarray, fraction: float, h: int) -> tuple[float, bool]:
    if value > 0:
        return value, False
    s2 = float(np.dot(xc, xc)) / xc.shape[0]
    return fraction * s2, True


def _check_column(x: np.ndarray, h: int) -> np.ndarray:
    if np.ptp(x) == 0.0:
        raise DegenerateComponent([h])
    return x - x.mean()


def _int_bandwidth(H: float, m: int) -> int:
    L = int(math.floor(H))
    if L < 0:
        raise BadSpec(f"bandwidth must be non-negative, got {H}")
    if L > m - 1:
        raise BandwidthTooLarge(f"floor(H) = {L} exceeds m-1 = {m - 1}")
    return L


def _lrv_standard_raw(xc: np.ndarray, L: int) -> float:
    m = xc.shape[0]
    s = float(np.dot(xc, xc)) / m
    for t in range(1, L + 1):
        s += 2.0 * float(np.dot(xc[t:], xc[: m - t])) / (m - t)
    return s


def lrv_standard(
    stable: ObservationMatrix, h: int, H: float, floor_fraction: float = 0.05
) -> float:
    """Truncated long-run variance ``phi_0 + 2 sum_{t<=floor(H)} phi_t``."""
    x = _column(stable, h)
    xc = _check_column(x, h)
    raw = _lrv_standard_raw(xc, _int_bandwidth(H, x.shape[0]))
    return _floor(raw, xc, floor_fraction, h)[0]


def _lrv_qs_raw(xc: np.ndarray, H: float) -> float:
    m = xc.shape[0]
    s = float(np.dot(xc, xc)) / m
    for t in range(1, m):
        w = qs_kernel(t / H)
        s += 2.0 * w * float(np.dot(xc[t:], xc[: m - t])) / m
    return s


def lrv_qs(
    stable: ObservationMatrix, h: int, H: float, floor_fraction: float = 0.05
) -> float:
    """Quadratic spectral kernel estimate over all lags ``|t| <= m-1``."""
    if not H > 0:
        raise BadSpec("QS bandwidth must be positive")
    x = _column(stable, h)
    xc = _check_column(x, h)
    return _floor(_lrv_qs_raw(xc, H), xc, floor_fraction, h)[0]


def lrcov(stable: ObservationMatrix, h: int, i: int, H: float) -> float:
    """Truncated long-run covariance of components ``h`` and ``i`` (no floor)."""
    xh = _column(stable, h)
    xi = _column(stable, i)
    m = xh.shape[0]
    L = _int_bandwidth(H, m)
    a = xh - xh.mean()
    b = xi - xi.mean()
    s = float(np.dot(a, b)) / m
    for t in range(1, L + 1):
        s += float(np.dot(a[t:], b[: m - t])) / (m - t)
        s += float(np.dot(b[t:], a[: m - t])) / (m - t)
    return s


# --------------------------------------------------------------------------
# vectorised over components


def _centered(stable: ObservationMatrix) -> np.ndarray:
    X = stable.values
    degenerate = np.flatnonzero(np.ptp(X, axis=0) == 0.0)
    if degenerate.size:
        raise DegenerateComponent(degenerate + 1)
    return X - X.mean(axis=0)


def _all_autocov(Xc: np.ndarray) -> np.ndarray:
    """Raw lag sums ``sum_i x_i x_{i-t}`` for t = 0..m-1, every column."""
    m = Xc.shape[0]
    nfft = 1 << (2 * m - 1).bit_length()
    F = np.fft.rfft(Xc, n=nfft, axis=0)
    return np.fft.irfft(F * np.conj(F), n=nfft, axis=0)[:m]


def estimate_lrv(stable: ObservationMatrix, cfg: LrvConfig) -> LrvEstimate:
    """Long-run variances of every component of the stable sample."""
    Xc = _centered(stable)
    m = Xc.shape[0]
    H = cfg.bandwidth_for(m)
    if cfg.method == "standard_truncated":
        L = _int_bandwidth(H, m)
        s2 = np.einsum("ij,ij->j", Xc, Xc) / m
        for t in range(1, L + 1):
            s2 = s2 + 2.0 * np.einsum("ij,ij->j", Xc[t:], Xc[: m - t]) / (m - t)
    else:
        if not H > 0:
            raise BadSpec("QS bandwidth must be positive")
        sums = _all_autocov(Xc)
        w = qs_kernel(np.arange(m) / H)
        w[1:] *= 2.0
        s2 = (w @ sums) / m
    var = np.einsum("ij,ij->j", Xc, Xc) / m
    bad = s2 <= 0
    s2 = np.where(bad, cfg.floor_fraction * var, s2)
    floored = frozenset((np.flatnonzero(bad) + 1).tolist())
    return LrvEstimate(sigma2=s2, method=cfg, floored=floored)


def _long_run_cov_matrix(Xc: np.ndarray, cfg: LrvConfig) -> np.ndarray:
    m = Xc.shape[0]
    H = cfg.bandwidth_for(m)
    if cfg.method == "standard_truncated":
        L = _int_bandwidth(H, m)
        G = Xc.T @ Xc / m
        for t in range(1, L + 1):
            P = Xc[t:].T @ Xc[: m - t] / (m - t)
            G += P + P.T
        return G
    K = toeplitz(qs_kernel(np.arange(m) / H))
    return Xc.T @ (K @ Xc) / m


def correlation_matrix(
    stable: ObservationMatrix, cfg: LrvConfig, sigma: LrvEstimate | None = None
) -> CorrelationEstimate:
    """Long-run correlations ``gamma_hi / (sigma_h sigma_i)`` with unit diagonal.

    Off-diagonal entries are clamped into ``[-1 + 1e-12, 1 - 1e-12]``.
    """
    Xc = _centered(stable)
    if sigma is None:
        sigma = estimate_lrv(stable, cfg)
    s = sigma.sigma
    G = _long_run_cov_matrix(Xc, cfg)
    rho = G / np.outer(s, s)
    rho = 0.5 * (rho + rho.T)
    np.clip(rho, -_CLAMP, _CLAMP, out=rho)
    np.fill_diagonal(rho, 1.0)
    return CorrelationEstimate(rho)
