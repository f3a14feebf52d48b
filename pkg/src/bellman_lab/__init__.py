"""Bellman functions for maximal operators on trees, with numerical checks."""

__version__ = "0.1.0"

from .bellman import (
    BellmanQuery,
    ExtremalRecipe,
    closed_form,
    corollary_norm_sup,
    extremal,
    extremal_B,
    extremal_B1_middle,
    extremal_B1_power,
    extremal_B_middle,
    middle_profile,
    thresholds,
)
from .errors import (
    BellmanLabError,
    DomainError,
    InvariantViolation,
    NumericError,
    ResourceError,
    SamplingError,
)
from .maximal import distribution_at, maximal_function, weak_type_check
from .norms import equiv_norm, norm_comparison_check, quasi_norm
from .partition import Node, StepFunction, TreePartition, build_tree, integral
from .rearrange import (
    Rearrangement,
    SubsetCertificate,
    decreasing_rearrangement,
    equal_average_subset,
    partition_equal_average,
    select_subfamily,
)
from .search import SearchConfig, SearchReport, maximize, sample_feasible, verify_upper_bound

__all__ = [
    "__version__",
    "BellmanLabError",
    "BellmanQuery",
    "build_tree",
    "closed_form",
    "corollary_norm_sup",
    "decreasing_rearrangement",
    "distribution_at",
    "DomainError",
    "equal_average_subset",
    "equiv_norm",
    "extremal",
    "extremal_B",
    "extremal_B1_middle",
    "extremal_B1_power",
    "extremal_B_middle",
    "ExtremalRecipe",
    "integral",
    "InvariantViolation",
    "maximal_function",
    "maximize",
    "middle_profile",
    "Node",
    "norm_comparison_check",
    "NumericError",
    "partition_equal_average",
    "quasi_norm",
    "Rearrangement",
    "ResourceError",
    "sample_feasible",
    "SamplingError",
    "SearchConfig",
    "SearchReport",
    "select_subfamily",
    "StepFunction",
    "SubsetCertificate",
    "thresholds",
    "TreePartition",
    "verify_upper_bound",
    "weak_type_check",
]
