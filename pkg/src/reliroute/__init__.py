"""Reliability routing on stochastic road networks.

Core pipeline: load or synthesize a :class:`~reliroute.network.StochasticGraph`,
solve the arrival-probability policy toward a destination with
:func:`~reliroute.policy.compute_policy`, then extract the most reliable
path(s) with :func:`~reliroute.pathsearch.sota_path`.  Activation-potential
preprocessing (:mod:`reliroute.potentials`) prunes queries; the benchmark
harness (:mod:`reliroute.harness`) reproduces the timing studies at desk
scale.
"""

from .distributions import (
    DiscreteDistribution,
    EXACT_TOL,
    NORMALIZATION_TOL,
    convolve,
    reliability_curve,
    shifted_dot,
)
from .errors import GraphValidationError, RelirouteError, SearchBudgetExceeded
from .harness import (
    BenchmarkConfig,
    BenchmarkRecord,
    LetPath,
    ProblemInstance,
    generate_instances,
    let_path,
    run_benchmark,
    summarize,
)
from .network import (
    RegionPartition,
    StochasticGraph,
    grid_partition,
    load_graph,
    save_graph,
)
from .pathsearch import (
    FoundPath,
    SearchReport,
    brute_force_best_path,
    brute_force_paths,
    path_distribution,
    path_reliability,
    sota_path,
    sota_path_report,
)
from .policy import (
    NO_EDGE,
    PolicyTable,
    UpdateOrder,
    compute_policy,
    compute_update_order,
    validate_update_order,
)
from .potentials import (
    INFINITE_POTENTIAL,
    PotentialTable,
    RealizabilityFlags,
    build_archive,
    compute_arc_potentials,
    compute_realizability,
    forward_reachability_oracle,
    load_archive,
    prune,
    rollout_policy,
    save_archive,
)
from .synth import grid_topology, synthesize_distributions
from .zdc import ZeroDelayConvolver

__all__ = [
    "BenchmarkConfig",
    "BenchmarkRecord",
    "DiscreteDistribution",
    "EXACT_TOL",
    "FoundPath",
    "GraphValidationError",
    "INFINITE_POTENTIAL",
    "LetPath",
    "NORMALIZATION_TOL",
    "NO_EDGE",
    "PolicyTable",
    "PotentialTable",
    "ProblemInstance",
    "RealizabilityFlags",
    "RegionPartition",
    "RelirouteError",
    "SearchBudgetExceeded",
    "SearchReport",
    "StochasticGraph",
    "UpdateOrder",
    "ZeroDelayConvolver",
    "brute_force_best_path",
    "brute_force_paths",
    "build_archive",
    "compute_arc_potentials",
    "compute_policy",
    "compute_realizability",
    "compute_update_order",
    "convolve",
    "forward_reachability_oracle",
    "generate_instances",
    "grid_partition",
    "grid_topology",
    "let_path",
    "load_archive",
    "load_graph",
    "path_distribution",
    "path_reliability",
    "prune",
    "reliability_curve",
    "rollout_policy",
    "run_benchmark",
    "save_archive",
    "save_graph",
    "shifted_dot",
    "sota_path",
    "sota_path_report",
    "summarize",
    "synthesize_distributions",
    "validate_update_order",
]

__version__ = "0.1.0"
