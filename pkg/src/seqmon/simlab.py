"""Simulation models, change injection and the size/power Monte Carlo harness.

Models (rows are time, columns components):

* ``M1``  i.i.d. chi-square(10) / sqrt(20)  (not centred)
* ``M2``  AR(1), coefficient 0.1, standard normal innovations, burn-in 200
* ``M3``  MA(2) ``eta_t + 0.3 eta_{t-1} - 0.1 eta_{t-2}``, Laplace(0, 1) noise
* ``M4``  i.i.d. rows ``N(0, Sigma)`` with ``Sigma_ij = 1 / (|i - j| + 1)``

A change adds ``delta`` to the affected columns from row ``m + k_star`` on.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import lfilter
from scipy.stats import binomtest

from .core import (
    BadSpec,
    MonitorConfig,
    ObservationMatrix,
    as_fraction,
    parallel_map,
)
from .calibration import threshold_for
from .detector import run_monitor
from .lrv import correlation_matrix, estimate_lrv

__all__ = [
    "MODELS",
    "DgpSpec",
    "ChangeSpec",
    "SimResult",
    "generate",
    "run_rng",
    "mc_size",
    "mc_power",
    "power_curve",
    "table_cells",
    "to_csv",
    "to_table",
]

MODELS = ("M1", "M2", "M3", "M4")
ALTERNATIVES = ("A1", "A2", "A3")
DEFAULT_BURN_IN = 200

# (m, d) columns of the size tables
TABLE_COLUMNS = ((100, 100), (100, 200), (200, 200), (200, 500), (500, 200), (500, 500))


@dataclass(frozen=True)
class DgpSpec:
    model: str
    m: int
    d: int
    T: object = 1
    burn_in: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise BadSpec(f"unknown model {self.model!r}; use one of {MODELS}")
        if self.m < 2 or self.d < 1:
            raise BadSpec(f"need m >= 2 and d >= 1, got m={self.m}, d={self.d}")
        T = as_fraction(self.T)
        if T <= 0 or (T * self.m).denominator != 1:
            raise BadSpec(f"T*m must be a positive integer, got T={self.T}, m={self.m}")
        object.__setattr__(self, "T", T)
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", DEFAULT_BURN_IN if self.model == "M2" else 0)
        if self.burn_in < 0:
            raise BadSpec("burn_in must be non-negative")

    @property
    def n_rows(self) -> int:
        return self.m + int(self.T * self.m)


@dataclass(frozen=True)
class ChangeSpec:
    """Mean shift of size ``delta`` in ``affected`` from monitoring step ``k_star``.

    ``affected`` is ``"A1"`` ({1}), ``"A2"`` ({1..d/2}), ``"A3"`` ({1..d}) or an
    explicit collection of 1-based components.  ``k_star`` defaults to ``m/2``.
    """

    delta: float
    affected: object = "A1"
    k_star: int | None = None

    def components(self, d: int) -> np.ndarray:
        if isinstance(self.affected, str):
            if self.affected not in ALTERNATIVES:
                raise BadSpec(f"unknown alternative {self.affected!r}")
            n = {"A1": 1, "A2": d // 2, "A3": d}[self.affected]
            return np.arange(n)
        comp = np.asarray(sorted(set(self.affected)), dtype=np.int64)
        if comp.size and (comp.min() < 1 or comp.max() > d):
            raise BadSpec(f"affected components must lie in 1..{d}")
        return comp - 1

    def change_step(self, m: int) -> int:
        return max(1, m // 2) if self.k_star is None else int(self.k_star)

    @property
    def label(self) -> str:
        if isinstance(self.affected, str):
            return self.affected
        return "custom"


@lru_cache(maxsize=8)
def _m4_factor(d: int) -> np.ndarray:
    return np.linalg.cholesky(toeplitz(1.0 / (np.arange(d) + 1.0)))


def run_rng(seed: int, run: int) -> np.random.Generator:
    """Independent stream for Monte Carlo run ``run``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run,)))


def generate(
    dgp: DgpSpec, change: ChangeSpec | None = None, rng: np.random.Generator | None = None
) -> ObservationMatrix:
    """Draw an ``(m + T*m) x d`` panel from ``dgp`` with an optional mean shift."""
    if rng is None:
        rng = np.random.default_rng(dgp.seed)
    n, d = dgp.n_rows, dgp.d
    if dgp.model == "M1":
        X = rng.chisquare(10, size=(n, d)) / math.sqrt(20.0)
    elif dgp.model == "M2":
        eps = rng.standard_normal((n + dgp.burn_in, d))
        X = lfilter([1.0], [1.0, -0.1], eps, axis=0)[dgp.burn_in :]
    elif dgp.model == "M3":
        eta = rng.laplace(0.0, 1.0, size=(n + 2, d))
        X = eta[2:] + 0.3 * eta[1:-1] - 0.1 * eta[:-2]
    else:
        X = rng.standard_normal((n, d)) @ _m4_factor(d).T
    if change is not None and change.delta != 0:
        k_star = change.change_step(dgp.m)
        if not 1 <= k_star <= n - dgp.m:
            raise BadSpec(f"k_star must lie in 1..{n - dgp.m}, got {k_star}")
        cols = change.components(d)
        if cols.size:
            X[dgp.m + k_star - 1 :, cols] += change.delta
    return ObservationMatrix(X)


@dataclass
class SimResult:
    model: str
    m: int
    d: int
    T: str
    method: str
    alpha: float
    rate: float
    ci_lo: float
    ci_hi: float
    runs: int
    seed: int
    rejections: int
    alternative: str | None = None
    delta: float | None = None
    mean_delay: float | None = None
    first_alarms: list = field(default_factory=list, repr=False)
    surviving: list = field(default_factory=list, repr=False)

    SIZE_FIELDS = ("model", "m", "d", "T", "method", "alpha", "rate", "ci_lo", "ci_hi", "runs", "seed")
    POWER_FIELDS = SIZE_FIELDS + ("alternative", "delta", "mean_delay")


def _method_label(cfg: MonitorConfig) -> str:
    if cfg.calibration == "gumbel":
        return "gumbel"
    return "bootstrap-independent" if cfg.independent else "bootstrap"


def _check(dgp: DgpSpec, cfg: MonitorConfig, runs: int) -> None:
    if runs < 1:
        raise BadSpec(f"runs must be positive, got {runs}")
    if (dgp.m, dgp.d, dgp.T) != (cfg.m, cfg.d, cfg.T):
        raise BadSpec("DgpSpec and MonitorConfig disagree on m, d or T")


def _simulate(
    dgp: DgpSpec,
    change: ChangeSpec | None,
    cfg: MonitorConfig,
    runs: int,
    threshold: float | None,
    eliminate: bool,
    stop_on_first_alarm: bool,
) -> SimResult:
    _check(dgp, cfg, runs)
    fixed = threshold
    if fixed is None and (cfg.calibration == "gumbel" or cfg.independent):
        fixed, _ = threshold_for(cfg)

    def one(r: int):
        panel = generate(dgp, change, run_rng(dgp.seed, r))
        stable = panel.head(cfg.m)
        sigma = estimate_lrv(stable, cfg.lrv)
        thr = fixed
        if thr is None:
            rho = correlation_matrix(stable, cfg.lrv, sigma)
            thr, _ = threshold_for(replace(cfg, seed=cfg.seed + r), rho)
        res = run_monitor(
            stable, panel.tail(cfg.m), cfg, thr, sigma=sigma,
            eliminate=eliminate, stop_on_first_alarm=stop_on_first_alarm,
        )
        return res.first_alarm, res.surviving

    outcomes = parallel_map(one, range(runs))
    first = [o[0] for o in outcomes]
    hits = sum(k is not None for k in first)
    ci = binomtest(hits, runs).proportion_ci(confidence_level=0.95, method="wilson")
    result = SimResult(
        model=dgp.model, m=dgp.m, d=dgp.d, T=str(dgp.T), method=_method_label(cfg),
        alpha=cfg.alpha, rate=hits / runs, ci_lo=float(ci.low), ci_hi=float(ci.high),
        runs=runs, seed=dgp.seed, rejections=hits, first_alarms=first,
        surviving=[o[1] for o in outcomes],
    )
    if change is not None:
        k_star = change.change_step(dgp.m)
        delays = [k - k_star for k in first if k is not None]
        result.alternative = change.label
        result.delta = float(change.delta)
        result.mean_delay = float(np.mean(delays)) if delays else None
    return result


def mc_size(
    dgp: DgpSpec,
    cfg: MonitorConfig,
    runs: int = 1000,
    threshold: float | None = None,
) -> SimResult:
    """Empirical rejection rate under the null with a Wilson 95% interval.

    A run counts as a rejection as soon as the first alarm fires.  Pass
    ``threshold`` to override the calibration implied by ``cfg``.
    """
    return _simulate(dgp, None, cfg, runs, threshold, eliminate=True, stop_on_first_alarm=True)


def mc_power(
    dgp: DgpSpec,
    change: ChangeSpec,
    cfg: MonitorConfig,
    runs: int = 1000,
    threshold: float | None = None,
    eliminate: bool = True,
) -> SimResult:
    """Rejection rate under a mean shift, plus the mean detection delay
    (first alarm minus ``k_star``) over rejecting runs.

    Monitoring runs to the end of the horizon so ``surviving`` holds the
    final stable-set estimate of each run.
    """
    return _simulate(dgp, change, cfg, runs, threshold, eliminate, stop_on_first_alarm=False)


def power_curve(
    dgp: DgpSpec,
    alternative: str,
    deltas: Iterable[float],
    cfg: MonitorConfig,
    runs: int,
    k_star: int | None = None,
) -> list[SimResult]:
    """Power at each shift size; every delta reuses the same run seeds."""
    return [
        mc_power(dgp, ChangeSpec(delta=float(dl), affected=alternative, k_star=k_star), cfg, runs)
        for dl in deltas
    ]


def table_cells(T_values=(1, 2, 4), models=MODELS, columns=TABLE_COLUMNS):
    """(model, m, d, T) tuples of a size table, row-major in table order."""
    return [(model, m, d, T) for T in T_values for model in models for (m, d) in columns]


# --------------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(results: list[SimResult], power: bool | None = None) -> str:
    if power is None:
        power = any(r.delta is not None for r in results)
    cols = SimResult.POWER_FIELDS if power else SimResult.SIZE_FIELDS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in results:
        row = asdict(r)
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def to_table(results: list[SimResult]) -> str:
    """Plain-text pivot: rows (T, model), columns (m, d), cells rate in %."""
    if any(r.delta is not None for r in results):
        lines = [f"{'model':>5} {'alt':>4} {'delta':>7} {'power':>7} {'95% CI':>17} {'delay':>8}"]
        for r in results:
            delay = "" if r.mean_delay is None else f"{r.mean_delay:8.1f}"
            lines.append(
                f"{r.model:>5} {r.alternative or '':>4} {r.delta:7.3f} {r.rate:7.3f}"
                f"  [{r.ci_lo:.3f}, {r.ci_hi:.3f}] {delay:>8}"
            )
        return "\n".join(lines) + "\n"
    cols = sorted({(r.m, r.d) for r in results})
    rows: dict[tuple, dict] = {}
    for r in results:
        rows.setdefault((as_fraction(r.T), r.model), {})[(r.m, r.d)] = r
    head1 = " " * 12 + "".join(f"{'m=' + str(m):>10}" for m, _ in cols)
    head2 = f"{'T':>4} {'model':>6} " + "".join(f"{'d=' + str(d):>10}" for _, d in cols)
    lines = [head1, head2]
    for (T, model), cells in sorted(rows.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        body = "".join(
            f"{100 * cells[c].rate:9.1f}%" if c in cells else f"{'':>10}" for c in cols
        )
        lines.append(f"{str(T):>4} {model:>6} {body}")
    return "\n".join(lines) + "\n"
