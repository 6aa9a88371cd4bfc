"""Bandit policies that exploit per-state partial orders of arm means."""

from .environments import BanditInstance, SyntheticConfig, generate_synthetic
from .errors import (
    AmbiguousBestArm,
    ConfigError,
    CycleError,
    DimensionMismatch,
    EmptyModelSet,
    IncompatibleModelError,
    InsufficientData,
    MalformedCsv,
    NonFiniteReward,
    ResolutionTooCoarse,
    TooManyStates,
    UnknownGenre,
)
from .orders import (
    PartialOrder,
    StateModelSet,
    TotalOrder,
    build_partial_order,
    collision_probability,
    estimate_state_orders,
    is_possibly_optimal,
    min_samples_for_identification,
    subsample_relations,
)
from .policies import POLICIES, PolicyConfig, make_policy
from .projection import (
    EmpiricalStats,
    ProjectionResult,
    project_onto_model_set,
    project_onto_optimality_cone,
    project_onto_order,
)

__all__ = [
    "AmbiguousBestArm",
    "BanditInstance",
    "ConfigError",
    "CycleError",
    "DimensionMismatch",
    "EmptyModelSet",
    "EmpiricalStats",
    "IncompatibleModelError",
    "InsufficientData",
    "MalformedCsv",
    "NonFiniteReward",
    "POLICIES",
    "PartialOrder",
    "PolicyConfig",
    "ProjectionResult",
    "ResolutionTooCoarse",
    "StateModelSet",
    "SyntheticConfig",
    "TooManyStates",
    "TotalOrder",
    "UnknownGenre",
    "build_partial_order",
    "collision_probability",
    "estimate_state_orders",
    "generate_synthetic",
    "is_possibly_optimal",
    "make_policy",
    "min_samples_for_identification",
    "project_onto_model_set",
    "project_onto_optimality_cone",
    "project_onto_order",
    "subsample_relations",
]

__version__ = "0.1.0"
