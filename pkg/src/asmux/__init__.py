"""Exact photon-number statistics and pump optimization for heralded
single-photon sources built on an asymmetric (chained) spatial multiplexer
with photon-number-resolving heralding detectors."""

from .exceptions import ParameterError, TruncationError
from .experiments import (
    Axis,
    ResultRow,
    SweepGrid,
    delta_surface,
    fixed_n_curve,
    reproduce_table1,
    run_sweep,
    stability_report,
    vb_crossover,
    write_csv,
    write_json,
)
from .montecarlo import McResult, McSettings, compare_with_analytic, simulate
from .multiplexer import MultiplexerSpec, SourceFamily, arm_transmission, transmission_vector
from .optimize import (
    OptimalSizeResult,
    OptimizationMode,
    OptimizationReport,
    OptimizerSettings,
    StabilityInterval,
    StrategyScanEntry,
    find_optimal_n,
    optimize_pump,
    optimize_scaled_reference,
    optimize_uniform,
    stability_interval,
    strategy_scan,
)
from .statistics import (
    DEFAULT_TRUNCATION,
    DetectionStrategy,
    OutputDistribution,
    PumpProfile,
    TruncationPolicy,
    detect_cond_prob,
    detect_total_prob,
    output_distribution,
    pair_gen_prob,
    single_photon_prob,
    transmit_cond_prob,
)

__version__ = "0.1.0"

__all__ = [
    "ParameterError",
    "TruncationError",
    "MultiplexerSpec",
    "SourceFamily",
    "arm_transmission",
    "transmission_vector",
    "DetectionStrategy",
    "PumpProfile",
    "TruncationPolicy",
    "DEFAULT_TRUNCATION",
    "OutputDistribution",
    "pair_gen_prob",
    "detect_cond_prob",
    "detect_total_prob",
    "transmit_cond_prob",
    "output_distribution",
    "single_photon_prob",
    "OptimizationMode",
    "OptimizerSettings",
    "OptimizationReport",
    "OptimalSizeResult",
    "StrategyScanEntry",
    "StabilityInterval",
    "optimize_pump",
    "optimize_uniform",
    "optimize_scaled_reference",
    "find_optimal_n",
    "strategy_scan",
    "stability_interval",
    "McSettings",
    "McResult",
    "simulate",
    "compare_with_analytic",
    "Axis",
    "SweepGrid",
    "ResultRow",
    "reproduce_table1",
    "delta_surface",
    "fixed_n_curve",
    "stability_report",
    "vb_crossover",
    "run_sweep",
    "write_csv",
    "write_json",
    "__version__",
]
