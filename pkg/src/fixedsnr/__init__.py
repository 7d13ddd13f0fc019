"""Simulator for a clustered amplify-and-forward protocol on grid networks
held at a fixed worst-case SNR.

The package builds the grid topology with its transmit/receive halves,
partitions the receive half into clusters and sub-blocks, schedules them by
distance coloring, and Monte Carlo estimates the end-to-end coherent gain,
the interference breakdown, and the resulting per-node and aggregate rates
across network sizes.
"""

from .analysis import (
    ErrorBound,
    GainStatistics,
    InterferenceBreakdown,
    RateResult,
    audit_moments,
    effective_gain_statistics,
    error_prob_bound,
    gain_statistics,
    gmi_lower_bound,
    interference_breakdown,
    sinr_beta2,
)
from .engine import (
    Calibration,
    MonteCarloResult,
    SimulationContext,
    build_context,
    calibrate,
    run_simulation,
)
from .errors import ColoringOverflowError, ConfigError, InvariantViolation
from .protocol import ChannelUseLedger, RelaySelection, ledger_total, select_relays
from .scaling import (
    ExponentFit,
    ScalingPoint,
    ScalingReport,
    evaluate_point,
    fit_exponent,
    isolation_capacity,
    multihop_baseline,
    network_sum_rate,
    rho,
    sweep,
)
from .topology import (
    NetworkParams,
    admissible_sources,
    build_grid,
    color_groups,
    pair_sources,
    partition_clusters,
)

__version__ = "0.1.0"

__all__ = [
    "ErrorBound", "GainStatistics", "InterferenceBreakdown", "RateResult",
    "audit_moments", "effective_gain_statistics", "error_prob_bound",
    "gain_statistics", "gmi_lower_bound", "interference_breakdown",
    "sinr_beta2",
    "Calibration", "MonteCarloResult", "SimulationContext", "build_context",
    "calibrate", "run_simulation",
    "ColoringOverflowError", "ConfigError", "InvariantViolation",
    "ChannelUseLedger", "RelaySelection", "ledger_total", "select_relays",
    "ExponentFit", "ScalingPoint", "ScalingReport", "evaluate_point",
    "fit_exponent", "isolation_capacity", "multihop_baseline",
    "network_sum_rate", "rho", "sweep",
    "NetworkParams", "admissible_sources", "build_grid", "color_groups",
    "pair_sources", "partition_clusters",
    "__version__",
]
