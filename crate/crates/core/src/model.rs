//! Composite problem definition and the per-iteration second-order model.
//!
//! The objective is `F(x) = f(x) + g(x)` with smooth `f` and prox-friendly
//! `g`. Stationarity is measured by the scaled fixed-point residual
//! `r(x) = ||x - P_g(x - grad f(x))||` (prox step length one).
//!
//! Each outer iteration builds the strongly convex model
//!
//! ```text
//! Theta(y) = f(x) + <grad f(x), y - x> + (y-x)^T G (y-x) / 2 + g(y)
//! G        = hess f(x) + shift * A^T A + mu * I
//! ```
//!
//! where `shift = a1 * max(-min_i phi''(u_i), 0)` compensates the possibly
//! negative residual curvatures and `mu = a2 * r(x)^rho` ties the Tikhonov
//! weight to the current stationarity residual. Because `hess f = A^T D A`
//! with `D = diag(phi''(u))`, the whole quadratic part factors through the
//! row-scaled operator `Ak = diag(sqrt(D + shift)) A`, giving
//! `G = Ak^T Ak + mu I` without ever forming a matrix.

use crate::linop::LinearMap;
use crate::regularizer::Regularizer;
use crate::smooth::SmoothTerm;
use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// The composite objective `F = f + g`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub smooth: SmoothTerm,
    pub reg: Regularizer,
}

/// Everything the solver needs at a single point, computed with one operator
/// application and one prox.
#[derive(Clone, Debug)]
pub struct PointEval {
    pub x: Array1<f64>,
    /// `f(x)`.
    pub smooth_val: f64,
    /// `g(x)`.
    pub reg_val: f64,
    /// `grad f(x)`.
    pub grad: Array1<f64>,
    /// `A x - b`.
    pub misfit: Array1<f64>,
    /// `r(x)`.
    pub resid: f64,
    /// `x - P_g(x - grad f(x))`.
    pub resid_vec: Array1<f64>,
}

impl PointEval {
    pub fn objective(&self) -> f64 {
        self.smooth_val + self.reg_val
    }
}

impl Problem {
    pub fn new(smooth: SmoothTerm, reg: Regularizer) -> Self {
        Problem { smooth, reg }
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    /// `F(x)`.
    pub fn objective(&self, x: &Array1<f64>) -> f64 {
        self.smooth.value(x) + self.reg.value(x)
    }

    /// Full evaluation at `x`.
    pub fn eval_point(&self, x: Array1<f64>) -> PointEval {
        let (smooth_val, grad, misfit) = self.smooth.eval(&x);
        let reg_val = self.reg.value(&x);
        let step = self.reg.prox(1.0, &(&x - &grad));
        let resid_vec = &x - &step;
        let resid = resid_vec.dot(&resid_vec).sqrt();
        PointEval {
            x,
            smooth_val,
            reg_val,
            grad,
            misfit,
            resid,
            resid_vec,
        }
    }

    /// Stationarity residual `(r(x), R(x))`.
    pub fn residual(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        let e = self.eval_point(x.clone());
        (e.resid, e.resid_vec)
    }
}

/// Weights defining the model regularization.
#[derive(Clone, Copy, Debug)]
pub struct ModelParams {
    /// Curvature compensation factor, `a1 >= 1`.
    pub a1: f64,
    /// Tikhonov scale, `a2 > 0`.
    pub a2: f64,
    /// Residual exponent, `rho` in `[0, 1)`.
    pub rho: f64,
}

/// The second-order model anchored at one iterate.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub point: PointEval,
    /// Tikhonov weight `mu = a2 * r(x)^rho`, strictly positive.
    pub mu: f64,
    /// Curvature compensation `a1 * max(-min_i phi''(u_i), 0)`.
    pub shift: f64,
    /// Elementwise `phi''(u) + shift`, all nonnegative.
    pub curv: Array1<f64>,
    /// Row-scaled operator `diag(sqrt(curv)) A` with `G = Ak^T Ak + mu I`.
    pub ak: LinearMap,
    /// `G x - grad f(x)`, the constant vector of the model's optimality system.
    pub bk: Array1<f64>,
}

/// Build the model at `point`. Panics if the residual is zero (the caller is
/// expected to stop at stationary points first) or the parameters are out of
/// range.
pub fn build_model(problem: &Problem, params: &ModelParams, point: PointEval) -> ModelState {
    assert!(params.a1 >= 1.0, "a1 must be at least 1");
    assert!(params.a2 > 0.0, "a2 must be positive");
    assert!((0.0..1.0).contains(&params.rho), "rho must lie in [0, 1)");
    assert!(
        point.resid > 0.0,
        "model undefined at a stationary point (zero residual)"
    );
    let d = problem.smooth.hess_diag_of(&point.misfit);
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = params.a1 * (-dmin).max(0.0);
    let curv = d.mapv(|v| (v + shift).max(0.0));
    let mu = params.a2 * point.resid.powf(params.rho);
    let ak = LinearMap::diag_scaled(Arc::clone(&problem.smooth.a), curv.mapv(f64::sqrt));
    // bk = G x - grad f(x); G x = Ak^T Ak x + mu x.
    let gx = ak.adjoint_apply(&ak.apply(&point.x)) + &(mu * &point.x);
    let bk = &gx - &point.grad;
    ModelState {
        point,
        mu,
        shift,
        curv,
        ak,
        bk,
    }
}

impl ModelState {
    /// `G v = Ak^T (Ak v) + mu v`.
    pub fn apply_g(&self, v: &Array1<f64>) -> Array1<f64> {
        self.ak.adjoint_apply(&self.ak.apply(v)) + &(self.mu * v)
    }

    /// Model value `Theta(y)`.
    pub fn theta(&self, problem: &Problem, y: &Array1<f64>) -> f64 {
        self.point.smooth_val + self.theta_smooth_gap(y) + problem.reg.value(y)
    }

    /// `Theta(y) - F(x)` evaluated in a cancellation-friendly form: the
    /// anchored `f(x)` never enters, so the result is accurate near `y = x`
    /// even when `F(x)` itself is large.
    pub fn theta_gap(&self, problem: &Problem, y: &Array1<f64>) -> f64 {
        self.theta_smooth_gap(y) + (problem.reg.value(y) - self.point.reg_val)
    }

    /// `<grad f(x), y-x> + (y-x)^T G (y-x) / 2` without adjoint applications.
    fn theta_smooth_gap(&self, y: &Array1<f64>) -> f64 {
        let d = y - &self.point.x;
        let akd = self.ak.apply(&d);
        self.point.grad.dot(&d) + 0.5 * (akd.dot(&akd) + self.mu * d.dot(&d))
    }

    /// Linearized objective `f(x) + <grad f(x), y-x> + g(y)`; the model value
    /// exceeds it by exactly the quadratic term.
    pub fn linearized(&self, problem: &Problem, y: &Array1<f64>) -> f64 {
        let d = y - &self.point.x;
        self.point.smooth_val + self.point.grad.dot(&d) + problem.reg.value(y)
    }

    /// Model stationarity residual
    /// `(r_model(y), y - P_g(y - grad f(x) - G (y-x)))`, the analogue of the
    /// outer residual for the model objective.
    pub fn model_residual(&self, problem: &Problem, y: &Array1<f64>) -> (f64, Array1<f64>) {
        let d = y - &self.point.x;
        let q = &self.point.grad + &self.apply_g(&d);
        let step = problem.reg.prox(1.0, &(y - &q));
        let rvec = y - &step;
        (rvec.dot(&rvec).sqrt(), rvec)
    }

    /// Upper estimate of `||G||_2`: 20 power iterations on the matrix-free
    /// operator from a seeded start, inflated by 10 percent to bias the
    /// estimate above the true norm.
    pub fn op_norm_upper(&self, seed: u64) -> f64 {
        let n = self.point.x.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Array1::from_iter((0..n).map(|_| rng.random_range(-1.0_f64..1.0)));
        let mut norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
            norm = 1.0;
        }
        let mut est = self.mu;
        for _ in 0..20 {
            v /= norm;
            let w = self.apply_g(&v);
            est = w.dot(&w).sqrt();
            v = w;
            norm = est.max(f64::MIN_POSITIVE);
        }
        1.1 * est
    }
}
