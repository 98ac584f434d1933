//! Per-variant program assembly, single-objective and scalarised solves,
//! Pareto sweeps and independent schedule evaluation.

mod ahp;
mod evaluate;
mod problem;
mod solve;

pub use ahp::{ahp_weights, principal_eigenvector, WeightSpec};
pub use evaluate::{compare_variants, evaluate_schedule, run_variant, total_cost, SolveReport, VariantRun, AUDIT_TOL};
pub use problem::{assemble_problem, Objective, SchedulingProblem, VarLayout};
pub use solve::{
    anchor_points, baseline_schedule, net_simultaneous_flows, pareto_sweep, scalarization_bounds, scalarized_objective,
    solve_scalarized, solve_single, Anchors, DecisionVector, ParetoPoint, ScalarizationBounds, ScalarizedSolve,
    Schedule, SingleSolve, DEGENERATE_RANGE,
};
