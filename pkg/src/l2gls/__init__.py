"""Learned operator selection with guided local search for TSP and CVRP."""
from .errors import L2GLSError
from .gls import PenaltyState, augmented_cost, penalize
from .harness import BenchmarkReport, BenchmarkSpec, emit_ablation, emit_report, exact_tsp, run_ablation, run_benchmark
from .instance import (
    GenSpec,
    Kind,
    RoutingInstance,
    generate_cvrp,
    generate_uniform_tsp,
    load_instance,
    normalize,
    parse_cvrplib,
    parse_tsplib,
)
from .operators import Op, apply_move
from .policy import Policy
from .search import CATALOG, RewardVariant, SearchConfig, SearchResult, Variant, run_variant, solve, train
from .solution import RouteSet, Tour, initial_solution, validate

__version__ = "0.1.0"

__all__ = [
    "CATALOG",
    "BenchmarkReport",
    "BenchmarkSpec",
    "GenSpec",
    "Kind",
    "L2GLSError",
    "Op",
    "PenaltyState",
    "Policy",
    "RewardVariant",
    "RouteSet",
    "RoutingInstance",
    "SearchConfig",
    "SearchResult",
    "Tour",
    "Variant",
    "apply_move",
    "augmented_cost",
    "emit_ablation",
    "emit_report",
    "exact_tsp",
    "generate_cvrp",
    "generate_uniform_tsp",
    "initial_solution",
    "load_instance",
    "normalize",
    "parse_cvrplib",
    "parse_tsplib",
    "penalize",
    "run_ablation",
    "run_benchmark",
    "run_variant",
    "solve",
    "train",
    "validate",
]
