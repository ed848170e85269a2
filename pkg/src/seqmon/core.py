"""Domain types, errors and CSV ingestion shared by the other modules.

Time and component indices are 1-based at every public boundary (alarm
events, error messages, ``ObservationMatrix.at``); arrays are stored 0-based.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, TextIO

import numpy as np

__all__ = [
    "SeqmonError",
    "NonIntegerHorizon",
    "BadAlpha",
    "BadDims",
    "LagTooLarge",
    "BandwidthTooLarge",
    "DegenerateComponent",
    "ShapeMismatch",
    "MonitoringEnded",
    "DimensionTooSmall",
    "TooFewReplicates",
    "BadSpec",
    "ParseError",
    "ObservationMatrix",
    "LrvConfig",
    "MonitorConfig",
    "CorrelationEstimate",
    "AlarmEvent",
    "validate_config",
    "as_fraction",
    "read_csv",
    "iter_csv_rows",
    "write_csv",
    "worker_count",
    "parallel_map",
]


class SeqmonError(ValueError):
    """Base class for all errors raised by this package."""


class NonIntegerHorizon(SeqmonError):
    pass


class BadAlpha(SeqmonError):
    pass


class BadDims(SeqmonError):
    pass


class LagTooLarge(SeqmonError):
    pass


class BandwidthTooLarge(SeqmonError):
    pass


class DegenerateComponent(SeqmonError):
    """One or more components have zero variance in the stable sample."""

    def __init__(self, components: Iterable[int]):
        self.components = sorted(int(h) for h in components)
        super().__init__(
            f"zero-variance component(s) in stable sample: {self.components}"
        )


class ShapeMismatch(SeqmonError):
    pass


class MonitoringEnded(SeqmonError):
    pass


class DimensionTooSmall(SeqmonError):
    pass


class TooFewReplicates(SeqmonError):
    pass


class BadSpec(SeqmonError):
    pass


class ParseError(SeqmonError):
    """Malformed CSV input; ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ObservationMatrix:
    """A finite ``n_rows x n_cols`` panel; rows are time points."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, order="F", copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1, order="F")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"need a non-empty 2-D panel, got shape {arr.shape}")
        bad = ~np.isfinite(arr)
        if bad.any():
            t, h = np.argwhere(bad)[0]
            raise SeqmonError(f"non-finite value at (t={t + 1}, h={h + 1})")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def at(self, t: int, h: int) -> float:
        if not (1 <= t <= self.n_rows and 1 <= h <= self.n_cols):
            raise IndexError(f"(t={t}, h={h}) outside {self.n_rows}x{self.n_cols}")
        return float(self.values[t - 1, h - 1])

    def head(self, n: int) -> "ObservationMatrix":
        return ObservationMatrix(self.values[:n])

    def tail(self, start: int) -> np.ndarray:
        """Rows ``start+1, start+2, ...`` (1-based) as a plain array."""
        return self.values[start:]


def as_fraction(x) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float literal."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # repr gives the shortest decimal that round-trips, so 0.015 -> 3/200
        return Fraction(repr(x))
    return Fraction(x)


LRV_METHODS = ("standard_truncated", "quadratic_spectral")


@dataclass(frozen=True)
class LrvConfig:
    """Long-run variance settings.

    ``bandwidth`` is either a positive number or the string ``"log10"`` for
    the rule ``H_m = log10(m)``.
    """

    method: str = "quadratic_spectral"
    bandwidth: float | str = "log10"
    floor_fraction: float = 0.05

    def __post_init__(self):
        if self.method not in LRV_METHODS:
            raise BadSpec(f"unknown LRV method {self.method!r}; use one of {LRV_METHODS}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "log10":
                raise BadSpec(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise BadSpec("bandwidth must be a positive real")
        if not (0 < self.floor_fraction <= 1):
            raise BadSpec("floor_fraction must lie in (0, 1]")

    def bandwidth_for(self, m: int) -> float:
        if self.bandwidth == "log10":
            return math.log10(m)
        return float(self.bandwidth)


CALIBRATIONS = ("gumbel", "bootstrap")


@dataclass(frozen=True)
class MonitorConfig:
    """Everything needed to calibrate and run one closed-end monitoring."""

    m: int
    d: int = 1
    T: Fraction | float | int | str = 1
    alpha: float = 0.05
    calibration: str = "gumbel"
    lrv: LrvConfig = field(default_factory=LrvConfig)
    bootstrap_n: int = 2000
    seed: int = 0
    independent: bool = False

    def __post_init__(self):
        object.__setattr__(self, "T", as_fraction(self.T))
        validate_config(self)

    @property
    def n_mon(self) -> int:
        """Length ``T*m`` of the monitoring period."""
        return int(self.T * self.m)

    @property
    def T_float(self) -> float:
        return float(self.T)


def validate_config(cfg: MonitorConfig) -> None:
    """Raise on the first violated invariant of ``cfg``; return None otherwise."""
    if not (isinstance(cfg.m, (int, np.integer)) and cfg.m >= 2):
        raise BadDims(f"m must be an integer >= 2, got {cfg.m!r}")
    if not (isinstance(cfg.d, (int, np.integer)) and cfg.d >= 1):
        raise BadDims(f"d must be an integer >= 1, got {cfg.d!r}")
    T = as_fraction(cfg.T)
    if T <= 0:
        raise NonIntegerHorizon(f"T must be positive, got {T}")
    if (T * cfg.m).denominator != 1:
        raise NonIntegerHorizon(f"T*m = {float(T * cfg.m)} is not an integer")
    if not (0.0 < cfg.alpha < 1.0):
        raise BadAlpha(f"alpha must lie in (0, 1), got {cfg.alpha}")
    if cfg.calibration not in CALIBRATIONS:
        raise BadSpec(f"calibration must be one of {CALIBRATIONS}")
    if cfg.bootstrap_n < 1:
        raise BadSpec("bootstrap_n must be positive")
    if not 0 <= cfg.seed < 2**64:
        raise BadSpec("seed must fit in 64 bits")


@dataclass(frozen=True)
class CorrelationEstimate:
    """Symmetric long-run correlation matrix with unit diagonal."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=np.float64, copy=True)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ShapeMismatch(f"correlation matrix must be square, got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def identity(cls, d: int) -> "CorrelationEstimate":
        return cls(np.eye(d))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rho, np.eye(self.dim)))


@dataclass(frozen=True)
class AlarmEvent:
    """Rejection at monitoring step ``k`` (1-based components)."""

    k: int
    components: tuple[int, ...]
    statistic: tuple[float, ...]
    threshold: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "components": list(self.components),
            "statistic": list(self.statistic),
            "threshold": self.threshold,
        }


# --------------------------------------------------------------------------
# CSV


def _parse_row(row: list[str], line: int, ncols: int | None) -> list[float]:
    if ncols is not None and len(row) != ncols:
        raise ParseError(f"expected {ncols} values, found {len(row)}", line)
    out = []
    for j, cell in enumerate(row, start=1):
        try:
            v = float(cell.strip())
        except ValueError:
            raise ParseError(f"cannot parse {cell!r} as a number", line, j) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {cell!r}", line, j)
        out.append(v)
    return out


def iter_csv_rows(
    stream: TextIO, header: bool = False, ncols: int | None = None
) -> Iterator[np.ndarray]:
    """Yield rows of a comma-separated stream lazily, one array per line.

    Blank lines are skipped.  Parsing uses ``float`` and is locale independent.
    """
    reader = csv.reader(stream)
    first = True
    for row in reader:
        line = reader.line_num
        if first and header:
            first = False
            continue
        first = False
        if not row or all(not c.strip() for c in row):
            continue
        values = _parse_row(row, line, ncols)
        if ncols is None:
            ncols = len(values)
        yield np.asarray(values)


def read_csv(source: str | TextIO, header: bool = False) -> ObservationMatrix:
    """Read a whole CSV file (or open text stream) into an ObservationMatrix."""
    if isinstance(source, str):
        with open(source, newline="") as fh:
            rows = list(iter_csv_rows(fh, header=header))
    else:
        rows = list(iter_csv_rows(source, header=header))
    if not rows:
        raise ShapeMismatch("CSV contains no data rows")
    return ObservationMatrix(np.vstack(rows))


def write_csv(
    data: ObservationMatrix | np.ndarray,
    target: str | TextIO,
    header: list[str] | None = None,
) -> None:
    """Write with shortest round-trip float formatting (bit-exact re-read)."""
    values = data.values if isinstance(data, ObservationMatrix) else np.asarray(data)
    buf = io.StringIO()
    if header is not None:
        buf.write(",".join(header) + "\n")
    for row in np.atleast_2d(values):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    if isinstance(target, str):
        with open(target, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        target.write(buf.getvalue())


def worker_count() -> int:
    """Worker cap from ``SEQMON_THREADS`` (default 1)."""
    import os

    raw = os.environ.get("SEQMON_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise BadSpec(f"SEQMON_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, fanned out over a thread pool when allowed.

    Results keep the input order, so output never depends on scheduling.
    """
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
