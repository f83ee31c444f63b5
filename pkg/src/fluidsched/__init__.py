"""fluidsched: fluid-model capacity allocation for shared processors.

Local closed-form predictions of queue size, delay and drops per pipe;
system-state classification; exact and numerical solvers for allocation
objectives over the box-simplex polytope; and a deterministic epoch
simulator for policy comparison.
"""

from .model import (
    Allocation,
    BehaviorCase,
    DomainError,
    PipePrediction,
    PipeState,
    SystemState,
    classify,
    dropped_volume,
    dropped_volume_constant_rate,
    mean_local_delay,
    predict,
    predicted_queue_size,
    thresholds,
)
from .analysis import FeasibleBox, StateClass, classify_state, feasible_box
from .optimize import (
    InfeasibleError,
    SolveResult,
    SumDelayProblem,
    kkt_report,
    lattice_refine_minimize,
    nullification_objective,
    oracle_solve,
    problem_for_state,
    project_box_simplex,
    simplex_minimum,
    solve_for_state,
    solve_minmax_mean_delay,
    solve_nullification,
    solve_sum_mean_delay,
    verify_kkt,
    verify_minmax_kkt,
    verify_nullification,
)
from .simulate import (
    EpochReport,
    PipeEpochMetrics,
    PipeTraffic,
    Policy,
    PolicySummary,
    Trace,
    TraceSpec,
    compare_policies,
    generate_trace,
    run_simulation,
)
from .fileio import ParseError, StateDocument, parse_state, parse_trace_spec, serialize_state

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BehaviorCase",
    "DomainError",
    "EpochReport",
    "FeasibleBox",
    "InfeasibleError",
    "ParseError",
    "PipeEpochMetrics",
    "PipePrediction",
    "PipeState",
    "PipeTraffic",
    "Policy",
    "PolicySummary",
    "SolveResult",
    "StateClass",
    "StateDocument",
    "SumDelayProblem",
    "SystemState",
    "Trace",
    "TraceSpec",
    "classify",
    "classify_state",
    "compare_policies",
    "dropped_volume",
    "dropped_volume_constant_rate",
    "feasible_box",
    "generate_trace",
    "kkt_report",
    "lattice_refine_minimize",
    "mean_local_delay",
    "nullification_objective",
    "oracle_solve",
    "parse_state",
    "parse_trace_spec",
    "predict",
    "predicted_queue_size",
    "problem_for_state",
    "project_box_simplex",
    "run_simulation",
    "serialize_state",
    "simplex_minimum",
    "solve_for_state",
    "solve_minmax_mean_delay",
    "solve_nullification",
    "solve_sum_mean_delay",
    "thresholds",
    "verify_kkt",
    "verify_minmax_kkt",
    "verify_nullification",
]
