//! Post-hoc analysis of solver trajectories: convergence order estimation,
//! unit step tail detection, and stationarity classification.

use crate::model::Problem;
use crate::solver::RunRecord;
use ndarray::Array1;
use serde::Serialize;

/// Errors this small are indistinguishable from floating-point noise and are
/// dropped before fitting a convergence order.
pub const ERROR_FLOOR: f64 = 1e-14;

/// Least-squares slope of `log e_{k+1}` against `log e_k` over the last
/// `window` pairs. Returns `None` when fewer than `window` usable pairs
/// remain after dropping the sub-noise tail, or when the tail is not
/// strictly decreasing.
pub fn estimate_order(errors: &[f64], window: usize) -> Option<f64> {
    assert!(window >= 3, "order estimation needs a window of at least 3");
    let mut tail: Vec<f64> = errors.to_vec();
    while tail.last().is_some_and(|&e| e <= ERROR_FLOOR) {
        tail.pop();
    }
    if tail.len() < window + 1 {
        return None;
    }
    let tail = &tail[tail.len() - (window + 1)..];
    if tail.iter().any(|&e| e <= ERROR_FLOOR) {
        return None;
    }
    if tail.windows(2).any(|w| w[1] >= w[0]) {
        return None;
    }
    let xs: Vec<f64> = tail[..window].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = tail[1..].iter().map(|e| e.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / window as f64;
    let ybar = ys.iter().sum::<f64>() / window as f64;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - xbar) * (y - ybar);
        var += (x - xbar) * (x - xbar);
    }
    if var <= 0.0 {
        return None;
    }
    Some(cov / var)
}

/// Sign classification of the loss curvature along the residual at a
/// near-stationary point. The margin is the smallest per-entry second
/// derivative of the loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Stationarity {
    Strong { margin: f64 },
    NonStrong { margin: f64 },
    /// The run never got close enough to a stationary point to classify.
    Inconclusive,
}

/// Classify `x` by the smallest curvature of the loss over the residual
/// entries: nonnegative (within `tol`) means the smooth part is locally
/// convex along the data misfit. Callers should only pass near-stationary
/// points; use [`diagnose`] to get the residual precondition handled.
pub fn classify_stationarity(problem: &Problem, x: &Array1<f64>, tol: f64) -> Stationarity {
    let u = problem.smooth.residual_vec(x);
    let margin = u
        .iter()
        .map(|&ui| problem.smooth.loss.second_deriv(ui))
        .fold(f64::INFINITY, f64::min);
    if margin >= -tol {
        Stationarity::Strong { margin }
    } else {
        Stationarity::NonStrong { margin }
    }
}

/// Everything the analysis derives from one run.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    /// Distances to the final iterate, one entry per non-terminal iterate.
    pub errors: Vec<f64>,
    /// Fitted convergence order, when the tail supports a fit.
    pub estimated_order: Option<f64>,
    /// Start of the trailing block of unit steps, `None` when the last
    /// accepted step was damped.
    pub unit_step_tail: Option<usize>,
    pub stationarity: Stationarity,
}

/// Largest `K` such that every recorded step from `K` on took `alpha = 1`.
fn unit_step_tail(record: &RunRecord) -> Option<usize> {
    let mut k = record.rows.len();
    for row in record.rows.iter().rev() {
        if row.alpha == 1.0 {
            k -= 1;
        } else {
            break;
        }
    }
    if k < record.rows.len() {
        Some(k)
    } else {
        None
    }
}

/// Build the full report for a finished run. `resid_tol` gates the
/// stationarity classification (unconverged runs come back
/// [`Stationarity::Inconclusive`]); `window` and `curv_tol` are the order
/// window and the curvature sign tolerance.
pub fn diagnose(
    problem: &Problem,
    record: &RunRecord,
    resid_tol: f64,
    window: usize,
    curv_tol: f64,
) -> ConvergenceReport {
    let x_ref = record.final_x();
    let errors: Vec<f64> = record.iterates[..record.iterates.len() - 1]
        .iter()
        .map(|x| {
            let d = x - x_ref;
            d.dot(&d).sqrt()
        })
        .collect();
    let stationarity = if record.final_resid <= resid_tol {
        classify_stationarity(problem, x_ref, curv_tol)
    } else {
        Stationarity::Inconclusive
    };
    ConvergenceReport {
        estimated_order: estimate_order(&errors, window),
        unit_step_tail: unit_step_tail(record),
        errors,
        stationarity,
    }
}

/// The defaults used by the experiment harness.
pub const ORDER_WINDOW: usize = 4;
pub const CURVATURE_TOL: f64 = 1e-10;
