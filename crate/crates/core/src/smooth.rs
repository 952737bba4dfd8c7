//! The smooth part of the objective: `f(x) = sum_i phi((A x - b)_i)`.
//!
//! `phi` is a scalar loss applied to each residual entry, so gradients and
//! Hessian products only need `A`, `A^T`, and elementwise derivative maps:
//! `grad f(x) = A^T phi'(u)` and `hess f(x) v = A^T (phi''(u) .* A v)` with
//! `u = A x - b`.

use crate::linop::LinearMap;
use ndarray::Array1;
use std::sync::Arc;

/// Scalar loss applied elementwise to residuals.
#[derive(Clone, Copy, Debug)]
pub enum SeparableLoss {
    /// `phi(u) = u^2 / 2`, the least-squares loss.
    Quadratic,
    /// `phi(u) = log(1 + u^2 / nu)`, a heavy-tailed robust loss. Not convex:
    /// `phi''(u) = 2 (nu - u^2) / (nu + u^2)^2` turns negative for
    /// `|u| > sqrt(nu)`, with `phi''` bounded by `2/nu` in magnitude.
    StudentT { nu: f64 },
}

impl SeparableLoss {
    /// Heavy-tailed loss with `nu > 0`.
    pub fn student_t(nu: f64) -> Self {
        assert!(nu > 0.0 && nu.is_finite(), "nu must be positive and finite");
        SeparableLoss::StudentT { nu }
    }

    /// `phi(u)`.
    pub fn value(&self, u: f64) -> f64 {
        match self {
            SeparableLoss::Quadratic => 0.5 * u * u,
            // ln_1p keeps accuracy for small residuals.
            SeparableLoss::StudentT { nu } => (u * u / nu).ln_1p(),
        }
    }

    /// `phi'(u)`.
    pub fn deriv(&self, u: f64) -> f64 {
        match self {
            SeparableLoss::Quadratic => u,
            SeparableLoss::StudentT { nu } => 2.0 * u / (nu + u * u),
        }
    }

    /// `phi''(u)`.
    pub fn second_deriv(&self, u: f64) -> f64 {
        match self {
            SeparableLoss::Quadratic => 1.0,
            SeparableLoss::StudentT { nu } => {
                let s = nu + u * u;
                2.0 * (nu - u * u) / (s * s)
            }
        }
    }
}

/// `f(x) = sum_i phi((A x - b)_i)`.
#[derive(Clone, Debug)]
pub struct SmoothTerm {
    pub loss: SeparableLoss,
    pub a: Arc<LinearMap>,
    pub b: Array1<f64>,
}

impl SmoothTerm {
    /// Panics if `b` does not match the operator row count.
    pub fn new(loss: SeparableLoss, a: Arc<LinearMap>, b: Array1<f64>) -> Self {
        assert_eq!(b.len(), a.rows(), "b must match the operator row count");
        SmoothTerm { loss, a, b }
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    /// Residual `u = A x - b`.
    pub fn residual_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        &self.a.apply(x) - &self.b
    }

    /// Loss value from a precomputed residual.
    pub fn value_of(&self, u: &Array1<f64>) -> f64 {
        u.iter().map(|&v| self.loss.value(v)).sum()
    }

    /// Gradient `A^T phi'(u)` from a precomputed residual.
    pub fn grad_of(&self, u: &Array1<f64>) -> Array1<f64> {
        self.a.adjoint_apply(&u.mapv(|v| self.loss.deriv(v)))
    }

    /// Value, gradient, and residual at `x` with a single operator apply.
    pub fn eval(&self, x: &Array1<f64>) -> (f64, Array1<f64>, Array1<f64>) {
        let u = self.residual_vec(x);
        (self.value_of(&u), self.grad_of(&u), u)
    }

    /// `f(x)`.
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        let u = self.residual_vec(x);
        self.value_of(&u)
    }

    /// Elementwise residual curvatures `phi''(u)`.
    pub fn hess_diag_of(&self, u: &Array1<f64>) -> Array1<f64> {
        u.mapv(|v| self.loss.second_deriv(v))
    }

    /// Hessian-vector product `A^T (phi''(u) .* A v)` from a precomputed
    /// residual.
    pub fn hess_vec_of(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        let d = self.hess_diag_of(u);
        self.a.adjoint_apply(&(&d * &self.a.apply(v)))
    }
}
