//! Composite optimization by an inexact regularized proximal Newton method.
//!
//! The library solves `min_x psi(Ax - b) + g(x)` where `psi` is a smooth,
//! possibly nonconvex separable loss, `A` a (matrix-free) linear operator,
//! and `g` a prox-friendly regularizer. Each outer iteration minimizes a
//! convex second-order model inexactly through an augmented Lagrangian on
//! the model's dual, with semismooth Newton steps inside, then globalizes
//! with a backtracking line search. A proximal gradient baseline with
//! Barzilai-Borwein steps, trajectory diagnostics (convergence order,
//! stationarity classification), and seeded experiment generators round out
//! the crate.

pub mod diagnostics;
pub mod experiments;
pub mod linop;
pub mod model;
pub mod regularizer;
pub mod smooth;
pub mod snalm;
pub mod solver;

pub use diagnostics::{classify_stationarity, diagnose, estimate_order, ConvergenceReport, Stationarity};
pub use experiments::{
    generate, run_experiment, ExperimentSpec, ExperimentSummary, Family, Instance, RunPlan,
    SolverKind,
};
pub use linop::LinearMap;
pub use model::{build_model, ModelParams, ModelState, PointEval, Problem};
pub use regularizer::Regularizer;
pub use smooth::{SeparableLoss, SmoothTerm};
pub use snalm::{solve_subproblem, Criterion, InnerReport, SnalmCfg, SnalmState};
pub use solver::{
    line_search, pg_baseline, solve, IterRow, RunRecord, SolveStatus, SolverConfig, SolverError,
};
