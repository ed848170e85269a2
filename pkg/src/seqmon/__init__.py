"""Sequential detection of mean changes in high-dimensional panels.

The detector compares, for every component and every candidate break point,
the mean after the break with the mean before it, and raises an alarm when the
weighted maximum crosses a threshold calibrated either from Gumbel extreme
value asymptotics or from a Gaussian bootstrap.  Alarmed components are
dropped and the remaining ones keep being monitored.
"""

from .core import (
    AlarmEvent,
    BadAlpha,
    BadDims,
    BadSpec,
    BandwidthTooLarge,
    CorrelationEstimate,
    DegenerateComponent,
    DimensionTooSmall,
    LagTooLarge,
    LrvConfig,
    MonitorConfig,
    MonitoringEnded,
    NonIntegerHorizon,
    ObservationMatrix,
    ParseError,
    SeqmonError,
    ShapeMismatch,
    TooFewReplicates,
    read_csv,
    validate_config,
    write_csv,
)
from .lrv import LrvEstimate, correlation_matrix, estimate_lrv
from .thresholds import gumbel_quantile, range_bm_cdf, scaling, threshold
from .detector import (
    DetectorState,
    MonitorResult,
    brute_force_statistic,
    init_state,
    run_monitor,
    step,
)
from .bootstrap import BootstrapQuantile, bootstrap_statistic, calibrate_bootstrap
from .calibration import Calibration, calibrate, threshold_for

__version__ = "0.1.0"

__all__ = [
    "AlarmEvent",
    "BadAlpha",
    "BadDims",
    "BadSpec",
    "BandwidthTooLarge",
    "BootstrapQuantile",
    "Calibration",
    "CorrelationEstimate",
    "DegenerateComponent",
    "DetectorState",
    "DimensionTooSmall",
    "LagTooLarge",
    "LrvConfig",
    "LrvEstimate",
    "MonitorConfig",
    "MonitorResult",
    "MonitoringEnded",
    "NonIntegerHorizon",
    "ObservationMatrix",
    "ParseError",
    "SeqmonError",
    "ShapeMismatch",
    "TooFewReplicates",
    "bootstrap_statistic",
    "brute_force_statistic",
    "calibrate",
    "calibrate_bootstrap",
    "correlation_matrix",
    "estimate_lrv",
    "gumbel_quantile",
    "init_state",
    "range_bm_cdf",
    "read_csv",
    "run_monitor",
    "scaling",
    "step",
    "threshold",
    "threshold_for",
    "validate_config",
    "write_csv",
    "__version__",
]
