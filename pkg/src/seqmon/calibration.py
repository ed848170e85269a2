"""From a stable sample and a config to a ready-to-use threshold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import BootstrapQuantile, calibrate_bootstrap
from .core import (
    CorrelationEstimate,
    DimensionTooSmall,
    MonitorConfig,
    ObservationMatrix,
    ShapeMismatch,
)
from .lrv import LrvEstimate, correlation_matrix, estimate_lrv
from .thresholds import threshold as gumbel_threshold

__all__ = ["Calibration", "calibrate", "threshold_for"]


@dataclass(frozen=True)
class Calibration:
    config: MonitorConfig
    sigma: LrvEstimate
    threshold: float
    shift: np.ndarray
    """First stable observation; the detector works on ``x - shift``."""
    stable_sum: np.ndarray
    """Column sums of ``stable - shift``."""
    bootstrap: BootstrapQuantile | None = None
    rho: CorrelationEstimate | None = None


def threshold_for(
    cfg: MonitorConfig, rho: CorrelationEstimate | None = None
) -> tuple[float, BootstrapQuantile | None]:
    """Threshold from the config alone (Gumbel) or from ``rho`` (bootstrap).

    With ``cfg.independent`` the bootstrap uses the identity correlation and
    ``rho`` is ignored.
    """
    if cfg.calibration == "gumbel":
        if cfg.d < 2:
            raise DimensionTooSmall(
                "Gumbel calibration needs d >= 2; use the bootstrap or an explicit threshold"
            )
        return gumbel_threshold(cfg.d, cfg.T_float, cfg.alpha), None
    if cfg.independent or rho is None:
        rho = CorrelationEstimate.identity(cfg.d)
    bq = calibrate_bootstrap(rho, cfg)
    return bq.threshold, bq


def calibrate(stable: ObservationMatrix, cfg: MonitorConfig) -> Calibration:
    """Estimate long-run variances (and correlations if needed) and a threshold."""
    if (stable.n_rows, stable.n_cols) != (cfg.m, cfg.d):
        raise ShapeMismatch(
            f"stable sample is {stable.n_rows}x{stable.n_cols}, config says {cfg.m}x{cfg.d}"
        )
    sigma = estimate_lrv(stable, cfg.lrv)
    rho = None
    if cfg.calibration == "bootstrap" and not cfg.independent:
        rho = correlation_matrix(stable, cfg.lrv, sigma)
    thr, bq = threshold_for(cfg, rho)
    shift = stable.values[0].copy()
    return Calibration(
        config=cfg,
        sigma=sigma,
        threshold=thr,
        shift=shift,
        stable_sum=(stable.values - shift).sum(axis=0),
        bootstrap=bq,
        rho=rho,
    )
