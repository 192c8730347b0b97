"""Small-cell TDD simulator: S-TDD, fixed D-TDD and MWU-driven D-TDD."""
from .engine import (
    Realization,
    SimConfig,
    SlotOutcome,
    realization_seed,
    run_experiment,
    run_realization,
    run_sweep,
)
from .metrics import AggregateMetrics, RealizationMetrics
from .scheduling import Direction, MwuState, Scheme, SchemeConfig

__all__ = [
    "AggregateMetrics",
    "Direction",
    "MwuState",
    "Realization",
    "RealizationMetrics",
    "Scheme",
    "SchemeConfig",
    "SimConfig",
    "SlotOutcome",
    "realization_seed",
    "run_experiment",
    "run_realization",
    "run_sweep",
]

__version__ = "0.1.0"
