"""Gaussian bootstrap calibration.

Replicate panels of ``m + T*m`` rows are drawn independently in time with
spatial covariance equal to the estimated long-run correlation matrix.  For
each panel the detector's max statistic is evaluated with unit scale, and the
empirical ``(1 - alpha)`` quantile of ``a_d * (stat - b_d)`` gives the
threshold ``q / a_d + b_d``.

Replicate ``n`` draws from a generator seeded by ``(seed, n)`` so results do
not depend on evaluation order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    CorrelationEstimate,
    MonitorConfig,
    ObservationMatrix,
    ShapeMismatch,
    TooFewReplicates,
    as_fraction,
    parallel_map,
)
from .thresholds import scaling

__all__ = [
    "BootstrapQuantile",
    "psd_repair",
    "correlation_factor",
    "gen_replicate",
    "bootstrap_statistic",
    "replicate_statistic",
    "replicate_rng",
    "calibrate_bootstrap",
    "empirical_quantile",
]

_EIG_FLOOR = 1e-10
_BLOCK_ROWS = 256
MIN_REPLICATES = 100


@dataclass(frozen=True)
class BootstrapQuantile:
    q_value: float
    threshold: float
    n_replicates: int
    seed: int
    psd_repair_applied: bool
    min_eigen_clipped: float | None
    statistics: np.ndarray
    """Raw replicate maxima, in replicate order."""


def psd_repair(rho: CorrelationEstimate) -> tuple[CorrelationEstimate, float | None]:
    """Clip eigenvalues below 1e-10 and rescale back to unit diagonal.

    Returns the (possibly unchanged) matrix and the smallest eigenvalue that
    had to be clipped, or None if the input was already fine.
    """
    R = rho.rho
    evals, evecs = np.linalg.eigh(R)
    lo = float(evals.min())
    if lo >= _EIG_FLOOR:
        return rho, None
    clipped = np.maximum(evals, _EIG_FLOOR)
    A = (evecs * clipped) @ evecs.T
    s = np.sqrt(np.diag(A))
    A = A / np.outer(s, s)
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 1.0)
    return CorrelationEstimate(A), lo


def correlation_factor(rho: CorrelationEstimate) -> np.ndarray | None:
    """Lower Cholesky factor of ``rho``; None stands for the identity."""
    if rho.is_identity():
        return None
    try:
        return np.linalg.cholesky(rho.rho)
    except np.linalg.LinAlgError:
        # numerically singular after repair: a symmetric square root works too
        evals, evecs = np.linalg.eigh(rho.rho)
        return evecs * np.sqrt(np.maximum(evals, 0.0))


def replicate_rng(seed: int, n: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))


def _draw(rng: np.random.Generator, factor: np.ndarray | None, rows: int, d: int):
    E = rng.standard_normal((rows, d))
    if factor is None:
        return E
    return E @ factor.T


def gen_replicate(
    factor: np.ndarray | None, n_rows: int, rng: np.random.Generator, d: int | None = None
) -> ObservationMatrix:
    """One full replicate panel (rows i.i.d. ``N(0, factor factor^T)``)."""
    if d is None:
        if factor is None:
            raise ShapeMismatch("d is required with an identity factor")
        d = factor.shape[0]
    return ObservationMatrix(_draw(rng, factor, n_rows, d))


def bootstrap_statistic(panel: ObservationMatrix | np.ndarray, m: int, T) -> float:
    """Max over k, h, j of ``w(k/m) (k-j)/sqrt(m) |zbar_after - zbar_before|``."""
    Z = panel.values if isinstance(panel, ObservationMatrix) else np.asarray(panel, float)
    n_mon = int(as_fraction(T) * m)
    if Z.ndim != 2 or Z.shape[0] != m + n_mon:
        raise ShapeMismatch(f"panel needs m + T*m = {m + n_mon} rows, got {Z.shape}")
    Z = np.ascontiguousarray(Z)
    d = Z.shape[1]
    prefix = np.zeros(d)
    _kernels.accumulate(Z[:m], prefix)
    umin = np.full(d, np.inf)
    umax = np.full(d, -np.inf)
    return _kernels.fold_max(Z[m:], prefix, umin, umax, m, 0, 1.0 / math.sqrt(m))


def replicate_statistic(
    factor: np.ndarray | None, d: int, m: int, n_mon: int, rng: np.random.Generator
) -> float:
    """Bootstrap statistic of one replicate, generated block by block.

    Memory is ``O(block * d)``; rows come out of the generator in the same
    order as ``gen_replicate`` so both paths see identical numbers.
    """
    prefix = np.zeros(d)
    umin = np.full(d, np.inf)
    umax = np.full(d, -np.inf)
    inv = 1.0 / math.sqrt(m)
    done = 0
    while done < m:
        b = min(_BLOCK_ROWS, m - done)
        _kernels.accumulate(_draw(rng, factor, b, d), prefix)
        done += b
    best = 0.0
    k = 0
    while k < n_mon:
        b = min(_BLOCK_ROWS, n_mon - k)
        best = max(best, _kernels.fold_max(_draw(rng, factor, b, d), prefix, umin, umax, m, k, inv))
        k += b
    return best


def empirical_quantile(values: np.ndarray, alpha: float) -> float:
    """Order statistic ``x_(ceil(N (1 - alpha)))`` of ``values``."""
    N = len(values)
    idx = math.ceil(N * (1 - as_fraction(alpha)))
    idx = min(max(idx, 1), N)
    return float(np.sort(values)[idx - 1])


def calibrate_bootstrap(rho: CorrelationEstimate, cfg: MonitorConfig) -> BootstrapQuantile:
    """Bootstrap threshold for ``cfg`` under spatial correlation ``rho``.

    For ``d = 1`` the Gumbel scaling is undefined; the quantile is then taken
    on the raw statistic (``a = 1, b = 0``).
    """
    N = cfg.bootstrap_n
    if N < MIN_REPLICATES:
        raise TooFewReplicates(f"need at least {MIN_REPLICATES} replicates, got {N}")
    if rho.dim != cfg.d:
        raise ShapeMismatch(f"correlation matrix is {rho.dim}x{rho.dim}, config has d={cfg.d}")
    repaired, lo = psd_repair(rho)
    factor = correlation_factor(repaired)
    m, n_mon, d = cfg.m, cfg.n_mon, cfg.d

    def one(n: int) -> float:
        return replicate_statistic(factor, d, m, n_mon, replicate_rng(cfg.seed, n))

    stats = np.asarray(parallel_map(one, range(N)))
    if d >= 2:
        sc = scaling(d, cfg.T_float)
        a, b = sc.a_d, sc.b_d
    else:
        a, b = 1.0, 0.0
    q = empirical_quantile(a * (stats - b), cfg.alpha)
    return BootstrapQuantile(
        q_value=q,
        threshold=q / a + b,
        n_replicates=N,
        seed=cfg.seed,
        psd_repair_applied=lo is not None,
        min_eigen_clipped=lo,
        statistics=stats,
    )
