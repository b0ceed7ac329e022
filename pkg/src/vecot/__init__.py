"""Equilibrium prices and partitions for vector-valued measures.

A discretized vector measure is a weighted point cloud whose points carry
layer-density rows. Agents buy points at per-layer prices minus production
costs; the package decides which demand matrices can be served, finds
equilibrium prices by dual ascent, builds instances where none exist, and
compares measures through kernel, convex-function and sub-partition criteria.
"""

__version__ = "0.1.0"

from .counterexample import (
    WitnessInstance,
    build_witness,
    refinement_study,
    threshold_interval,
    verify_no_equilibrium,
    verify_uniqueness,
)
from .dual_solver import (
    DualReport,
    SolverConfig,
    SolverStatus,
    lp_dual_value,
    solve_dual,
    solve_scalar,
    stable_partition,
)
from .estimator import PriceEquilibrium
from .lp import FarkasCertificate, LinearProgram, LpSolution, LpStatus, feasibility, solve_lp
from .measure import LayeredMeasure, build_measure, genericity_report, total_mass
from .order import (
    ConvexTestFamily,
    convex_criterion,
    dominates_n,
    kantorovich_q,
    kernel_exists,
    kernel_pushforward,
)
from .partition import (
    achievable_exact,
    achievable_relaxed,
    achievable_row,
    demand_of,
    feasible_necessary,
    sample_achievable,
)
from .pricing import (
    assign_by_price,
    dual_objective,
    dual_supergradient,
    induced_demand,
    is_equilibrium,
    phi_at,
    zero_cost_assign,
)

__all__ = [
    "ConvexTestFamily", "DualReport", "FarkasCertificate", "LayeredMeasure", "LinearProgram",
    "LpSolution", "LpStatus", "PriceEquilibrium", "SolverConfig", "SolverStatus",
    "WitnessInstance", "achievable_exact", "achievable_relaxed", "achievable_row",
    "assign_by_price", "build_measure", "build_witness", "convex_criterion", "demand_of",
    "dominates_n", "dual_objective", "dual_supergradient", "feasibility", "feasible_necessary",
    "genericity_report", "induced_demand", "is_equilibrium", "kantorovich_q", "kernel_exists",
    "kernel_pushforward", "lp_dual_value", "phi_at", "refinement_study", "sample_achievable",
    "solve_dual", "solve_lp", "solve_scalar", "stable_partition", "threshold_interval",
    "total_mass", "verify_no_equilibrium", "verify_uniqueness", "zero_cost_assign",
]
