"""Collision-model simulation of qubit non-Markovianity and system-environment correlations."""
from .engine import (
    ModelParams,
    SimulationState,
    Strategy,
    TrajectoryRecord,
    correlation_matrix,
    initial_state,
    run_exact_oracle,
    run_trajectory,
    step,
    system_states,
)
from .estimators import CollisionModel, NonMarkovianityMeasure
from .nonmarkov import (
    MeasureResult,
    SecBoundSeries,
    blp_measure,
    delta_sweep,
    distance_series,
    optimize_measure,
    sec_bound_series,
    threshold_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "SimulationState",
    "Strategy",
    "TrajectoryRecord",
    "correlation_matrix",
    "initial_state",
    "run_exact_oracle",
    "run_trajectory",
    "step",
    "system_states",
    "CollisionModel",
    "NonMarkovianityMeasure",
    "MeasureResult",
    "SecBoundSeries",
    "blp_measure",
    "delta_sweep",
    "distance_series",
    "optimize_measure",
    "sec_bound_series",
    "threshold_sweep",
]
