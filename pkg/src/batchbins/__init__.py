"""Simulation and verification lab for batched balanced allocations of
weighted balls into bins."""

from .core import (
    DomainError,
    InvalidParameter,
    LoadState,
    NormalizedLoads,
    PreconditionViolated,
    RngSeedPlan,
    WeightDistribution,
    gap,
    mgf,
    moment_bound_S,
    normalize_and_sort,
    sample_weight,
)
from .processes import (
    ConditionReport,
    ProbabilityVector,
    ProcessSpec,
    check_C1,
    check_C2,
    check_D0,
    check_D1,
    check_D2,
    majorizes,
    probability_vector,
    tie_break_average,
    worst_case_vector,
)

__version__ = "0.1.0"
