"""Online monitoring engine with component elimination.

At monitoring step ``k`` the weighted statistic of component ``h`` is

    w(k/m) * max_{0<=j<k} (k-j) / (sqrt(m) * sigma_h)
             * |mean(X[m+j+1 .. m+k, h]) - mean(X[1 .. m+j, h])|

with ``w(t) = 1/(1+t)``.  An alarm is raised when it strictly exceeds the
threshold; the offending components are dropped and monitoring continues with
the rest until ``T*m`` steps have been taken or no component is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .core import (
    AlarmEvent,
    MonitorConfig,
    MonitoringEnded,
    ObservationMatrix,
    SeqmonError,
    ShapeMismatch,
)
from .lrv import LrvEstimate, estimate_lrv

__all__ = [
    "DetectorState",
    "StepDecision",
    "MonitorResult",
    "init_state",
    "step",
    "run_monitor",
    "brute_force_statistic",
]

_EMPTY = np.empty(0)


@dataclass
class DetectorState:
    """Mutable per-component state; owned by a single writer.

    Arrays are indexed 0-based by component.  ``umin``/``umax`` are +inf/-inf
    until the first step.  Eliminated components keep their (frozen) state.
    """

    m: int
    n_mon: int
    sigma: np.ndarray
    shifted_sum: np.ndarray
    """Running sums of ``x - shift``; see ``prefix_sum`` for raw totals."""
    umin_shifted: np.ndarray
    umax_shifted: np.ndarray
    active_idx: np.ndarray
    n_active: int
    k: int = 0
    last_stats: np.ndarray = field(default=None)
    n_updates: int = 0
    shift: np.ndarray = field(default=None)
    frozen_at: np.ndarray = field(default=None)
    """Step at which each component was eliminated, -1 while active."""

    def __post_init__(self):
        self.inv_scale = 1.0 / (math.sqrt(self.m) * self.sigma)
        if self.shift is None:
            self.shift = np.zeros_like(self.shifted_sum)
        if self.last_stats is None:
            self.last_stats = np.zeros_like(self.shifted_sum)
        if self.frozen_at is None:
            self.frozen_at = np.full(self.shifted_sum.shape[0], -1, dtype=np.int64)

    @property
    def prefix_sum(self) -> np.ndarray:
        """Raw sum of every observation each component has absorbed."""
        seen = self.m + np.where(self.frozen_at >= 0, self.frozen_at, self.k)
        return self.shifted_sum + seen * self.shift

    @property
    def umin(self) -> np.ndarray:
        """Smallest past prefix mean per component (+inf before step 1)."""
        return self.umin_shifted + self.shift

    @property
    def umax(self) -> np.ndarray:
        return self.umax_shifted + self.shift

    @property
    def d(self) -> int:
        return self.shifted_sum.shape[0]

    @property
    def active_set(self) -> frozenset[int]:
        return frozenset((self.active_idx[: self.n_active] + 1).tolist())

    @property
    def finished(self) -> bool:
        return self.k >= self.n_mon or self.n_active == 0

    def eliminate(self, components: Iterable[int]) -> None:
        """Drop 1-based ``components`` from the active set."""
        drop = np.asarray(sorted(components), dtype=np.int64) - 1
        keep = self.active_idx[: self.n_active]
        gone = keep[np.isin(keep, drop)]
        self.frozen_at[gone] = self.k
        keep = keep[~np.isin(keep, drop)]
        self.n_active = keep.shape[0]
        self.active_idx[: self.n_active] = keep


@dataclass(frozen=True)
class StepDecision:
    k: int
    max_statistic: float
    rejected: frozenset[int]
    continues: bool


@dataclass
class MonitorResult:
    alarms: list[AlarmEvent]
    surviving: frozenset[int]
    steps: int
    threshold: float
    max_statistic: float
    """Largest ``max_h w(k/m) E_h(k)`` over all steps (active components)."""

    @property
    def rejected(self) -> bool:
        return bool(self.alarms)

    @property
    def first_alarm(self) -> int | None:
        return self.alarms[0].k if self.alarms else None


def _sigma_vector(sigma, d: int) -> np.ndarray:
    if isinstance(sigma, LrvEstimate):
        s = sigma.sigma
    else:
        s = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    if s.shape != (d,):
        raise ShapeMismatch(f"sigma has {s.shape[0]} entries, stable sample has d={d}")
    if not np.all(s > 0):
        raise SeqmonError("sigma must be strictly positive")
    return s.copy()


def init_state(
    stable: ObservationMatrix | np.ndarray,
    n_mon: int | MonitorConfig,
    sigma: LrvEstimate | np.ndarray,
) -> DetectorState:
    """Start a monitoring run from the stable sample.

    ``n_mon`` is the monitoring length ``T*m`` (or a config to take it from).
    ``sigma`` holds long-run standard deviations, or an ``LrvEstimate``.
    """
    if not isinstance(stable, ObservationMatrix):
        arr = np.asarray(stable, dtype=np.float64)
        if arr.size == 0:
            raise ShapeMismatch("stable sample is empty")
        stable = ObservationMatrix(arr)
    m, d = stable.n_rows, stable.n_cols
    if isinstance(n_mon, MonitorConfig):
        if (n_mon.m, n_mon.d) != (m, d):
            raise ShapeMismatch(
                f"config expects {n_mon.m}x{n_mon.d} stable sample, got {m}x{d}"
            )
        n_mon = n_mon.n_mon
    s = _sigma_vector(sigma, d)
    shift = stable.values[0].copy()
    return DetectorState(
        m=m,
        n_mon=int(n_mon),
        sigma=s,
        shift=shift,
        shifted_sum=(stable.values - shift).sum(axis=0),
        umin_shifted=np.full(d, np.inf),
        umax_shifted=np.full(d, -np.inf),
        active_idx=np.arange(d, dtype=np.int64),
        n_active=d,
    )


def _advance(state: DetectorState, rows, start, threshold, max_stats) -> int:
    return _kernels.advance(
        rows, start, state.shift, state.shifted_sum, state.umin_shifted,
        state.umax_shifted, state.inv_scale, state.active_idx, state.n_active,
        state.m, state.k, state.n_mon, threshold, state.last_stats, max_stats,
    )


def _rejected_now(state: DetectorState, threshold: float) -> np.ndarray:
    act = state.active_idx[: state.n_active]
    return act[state.last_stats[act] > threshold]


def step(
    state: DetectorState, x, threshold: float, eliminate: bool = True
) -> tuple[DetectorState, StepDecision]:
    """Feed one observation vector; updates ``state`` in place.

    Values of inactive components are ignored.  Components whose weighted
    statistic strictly exceeds ``threshold`` are reported and, unless
    ``eliminate`` is False, removed from the active set.
    """
    if state.k >= state.n_mon:
        raise MonitoringEnded(f"all {state.n_mon} monitoring steps consumed")
    row = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if row.shape[1] != state.d:
        raise ShapeMismatch(f"observation has {row.shape[1]} values, expected {state.d}")
    act = state.active_idx[: state.n_active]
    if not np.all(np.isfinite(row[0, act])):
        raise SeqmonError(f"non-finite observation at monitoring step {state.k + 1}")
    n_before = state.n_active
    _advance(state, row, 0, np.inf, _EMPTY)
    state.k += 1
    state.n_updates += n_before
    stats = state.last_stats[act]
    max_stat = float(stats.max()) if stats.size else 0.0
    hit = _rejected_now(state, threshold)
    rejected = frozenset((hit + 1).tolist())
    if eliminate and rejected:
        state.eliminate(rejected)
    decision = StepDecision(
        k=state.k,
        max_statistic=max_stat,
        rejected=rejected,
        continues=not state.finished,
    )
    return state, decision


def _event(state: DetectorState, hit: np.ndarray, threshold: float) -> AlarmEvent:
    return AlarmEvent(
        k=state.k,
        components=tuple((hit + 1).tolist()),
        statistic=tuple(state.last_stats[hit].tolist()),
        threshold=float(threshold),
    )


def run_monitor(
    stable: ObservationMatrix | np.ndarray,
    stream,
    cfg: MonitorConfig | int,
    threshold: float,
    sigma: LrvEstimate | np.ndarray | None = None,
    eliminate: bool = True,
    stop_on_first_alarm: bool = False,
    state: DetectorState | None = None,
) -> MonitorResult:
    """Monitor ``stream`` (array of rows or an iterable of d-vectors).

    ``cfg`` supplies the monitoring length and, if ``sigma`` is not given,
    the long-run variance settings; a plain integer is taken as ``T*m``.
    At most ``T*m`` rows are consumed.
    """
    if not isinstance(stable, ObservationMatrix):
        stable = ObservationMatrix(np.asarray(stable, dtype=np.float64))
    if sigma is None:
        if not isinstance(cfg, MonitorConfig):
            raise SeqmonError("sigma is required when cfg is not a MonitorConfig")
        sigma = estimate_lrv(stable, cfg.lrv)
    if state is None:
        state = init_state(stable, cfg, sigma)
    alarms: list[AlarmEvent] = []
    overall = 0.0

    def blocks():
        if isinstance(stream, ObservationMatrix):
            yield np.ascontiguousarray(stream.values)
        elif isinstance(stream, np.ndarray):
            arr = np.ascontiguousarray(stream, dtype=np.float64)
            if arr.ndim != 2:
                raise ShapeMismatch("stream must be a 2-D array of rows")
            yield arr
        else:
            for row in stream:
                yield np.asarray(row, dtype=np.float64).reshape(1, -1)

    for block in blocks():
        if block.shape[1] != state.d:
            raise ShapeMismatch(f"stream rows have {block.shape[1]} values, expected {state.d}")
        if not np.all(np.isfinite(block)):
            bad = np.argwhere(~np.isfinite(block))[0]
            raise SeqmonError(f"non-finite stream value in column {bad[1] + 1}")
        pos = 0
        max_stats = np.zeros(block.shape[0] + 1)
        while pos < block.shape[0] and not state.finished:
            p0 = pos
            n_before = state.n_active
            used = _advance(state, block, pos, threshold, max_stats)
            pos += used
            state.k += used
            state.n_updates += used * n_before
            overall = max(overall, float(max_stats[p0 + 1 : pos + 1].max(initial=0.0)))
            if used and max_stats[pos] > threshold:
                hit = _rejected_now(state, threshold)
                alarms.append(_event(state, hit, threshold))
                if stop_on_first_alarm:
                    return MonitorResult(alarms, state.active_set, state.k, float(threshold), overall)
                if eliminate:
                    state.eliminate((hit + 1).tolist())
        if state.finished:
            break
    return MonitorResult(alarms, state.active_set, state.k, float(threshold), overall)


def brute_force_statistic(
    data: ObservationMatrix | np.ndarray, sigma, m: int, k: int, h: int
) -> float:
    """Literal evaluation of ``w(k/m) * E_{m,h}(k)`` from subsample means.

    ``data`` holds at least ``m + k`` rows (stable sample first); ``h`` is
    1-based; ``sigma`` is the vector of long-run standard deviations.
    """
    if k < 1:
        raise SeqmonError("k must be >= 1")
    X = data.values if isinstance(data, ObservationMatrix) else np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < m + k:
        raise ShapeMismatch(f"need m + k = {m + k} rows, got {X.shape[0]}")
    x = np.ascontiguousarray(X[:, h - 1])
    s = float(np.atleast_1d(np.asarray(sigma, dtype=np.float64))[h - 1])
    return _kernels.brute_stat(x, m, k) / (math.sqrt(m) * s) / (1.0 + k / m)
