//! Nonsmooth regularizers and their proximal machinery.
//!
//! Every kind supports the plain prox `P_g(gamma, v)`, the Tikhonov-shifted
//! prox of `g + mu/2 ||.||^2`, the prox of the convex conjugate of that shifted
//! function (via the Moreau decomposition), and the application of one element
//! of the generalized Jacobian of the prox map. The Jacobian element is chosen
//! deterministically at kinks: ties break toward the zero (inactive) branch.

use crate::linop::LinearMap;
use ndarray::Array1;
use std::sync::Arc;

/// Convex, prox-friendly regularizer `g`.
#[derive(Clone, Debug)]
pub enum Regularizer {
    /// `g(x) = lambda ||x||_1`.
    L1 { lambda: f64 },
    /// `g(x) = lambda sum_J ||x_J||_2` over a partition of the coordinates.
    GroupL2 {
        lambda: f64,
        groups: Vec<Vec<usize>>,
        dim: usize,
    },
    /// `g(x) = lambda ||B x||_1` for an orthogonal analysis basis `B`.
    AnalysisL1 { lambda: f64, basis: Arc<LinearMap> },
    /// Indicator of the box `[lower, upper]` (entries may be infinite).
    Bounds {
        lower: Array1<f64>,
        upper: Array1<f64>,
    },
}

impl Regularizer {
    pub fn l1(lambda: f64) -> Self {
        assert!(lambda > 0.0 && lambda.is_finite(), "lambda must be positive");
        Regularizer::L1 { lambda }
    }

    /// Panics unless `groups` partitions `0..n` where `n` is the total number
    /// of indices.
    pub fn group_l2(lambda: f64, groups: Vec<Vec<usize>>) -> Self {
        assert!(lambda > 0.0 && lambda.is_finite(), "lambda must be positive");
        let dim: usize = groups.iter().map(|g| g.len()).sum();
        let mut seen = vec![false; dim];
        for g in &groups {
            assert!(!g.is_empty(), "empty group");
            for &i in g {
                assert!(i < dim, "group index {i} out of range 0..{dim}");
                assert!(!seen[i], "groups must be disjoint, index {i} repeats");
                seen[i] = true;
            }
        }
        Regularizer::GroupL2 { lambda, groups, dim }
    }

    /// Consecutive groups of `block` coordinates covering `0..n`.
    pub fn group_l2_blocks(lambda: f64, n: usize, block: usize) -> Self {
        assert!(block >= 1 && n % block == 0, "n must be a multiple of the block size");
        let groups = (0..n / block)
            .map(|g| (g * block..(g + 1) * block).collect())
            .collect();
        Self::group_l2(lambda, groups)
    }

    /// Panics if `basis` is not square or visibly fails an orthogonality probe.
    pub fn analysis_l1(lambda: f64, basis: Arc<LinearMap>) -> Self {
        assert!(lambda > 0.0 && lambda.is_finite(), "lambda must be positive");
        assert_eq!(basis.rows(), basis.cols(), "analysis basis must be square");
        // Cheap one-shot probe that B^T B = I; catches passing a non-orthogonal
        // map where the prox formula would silently be wrong.
        let n = basis.cols();
        let probe = Array1::from_iter((0..n).map(|i| ((i * 2654435761 + 1) % 97) as f64 / 97.0 - 0.5));
        let back = basis.adjoint_apply(&basis.apply(&probe));
        let err = (&back - &probe).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "analysis basis fails orthogonality probe: {err}");
        Regularizer::AnalysisL1 { lambda, basis }
    }

    /// Panics unless `lower <= upper` elementwise.
    pub fn bounds(lower: Array1<f64>, upper: Array1<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound lengths differ");
        for (l, u) in lower.iter().zip(upper.iter()) {
            assert!(l <= u, "lower bound exceeds upper bound");
        }
        Regularizer::Bounds { lower, upper }
    }

    /// `g(x)`; returns `f64::INFINITY` outside the box for [`Regularizer::Bounds`].
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        match self {
            Regularizer::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::GroupL2 { lambda, groups, dim } => {
                assert_eq!(x.len(), *dim, "dimension mismatch");
                lambda
                    * groups
                        .iter()
                        .map(|g| g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
                        .sum::<f64>()
            }
            Regularizer::AnalysisL1 { lambda, basis } => {
                lambda * basis.apply(x).iter().map(|v| v.abs()).sum::<f64>()
            }
            Regularizer::Bounds { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .all(|(v, (l, u))| l <= v && v <= u);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `P_{gamma g}(v) = argmin_z g(z) + ||z - v||^2 / (2 gamma)`.
    pub fn prox(&self, gamma: f64, v: &Array1<f64>) -> Array1<f64> {
        assert!(gamma > 0.0, "prox parameter must be positive");
        match self {
            Regularizer::L1 { lambda } => {
                let t = gamma * lambda;
                v.mapv(|z| soft_threshold(z, t))
            }
            Regularizer::GroupL2 { lambda, groups, dim } => {
                assert_eq!(v.len(), *dim, "dimension mismatch");
                let t = gamma * lambda;
                let mut out = Array1::zeros(*dim);
                for g in groups {
                    let norm = g.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
                    if norm > t {
                        let f = 1.0 - t / norm;
                        for &i in g {
                            out[i] = f * v[i];
                        }
                    }
                }
                out
            }
            Regularizer::AnalysisL1 { lambda, basis } => {
                let t = gamma * lambda;
                let coeffs = basis.apply(v).mapv(|z| soft_threshold(z, t));
                basis.adjoint_apply(&coeffs)
            }
            Regularizer::Bounds { lower, upper } => {
                let mut out = v.clone();
                for ((z, &l), &u) in out.iter_mut().zip(lower.iter()).zip(upper.iter()) {
                    *z = z.max(l).min(u);
                }
                out
            }
        }
    }

    /// Prox of the Tikhonov-shifted function `g + mu/2 ||.||^2`:
    /// `P_gamma(g + mu/2 ||.||^2)(v) = P_{gamma'} g(v / (1 + gamma mu))` with
    /// `gamma' = gamma / (1 + gamma mu)`.
    pub fn prox_tikhonov(&self, gamma: f64, mu: f64, v: &Array1<f64>) -> Array1<f64> {
        assert!(mu >= 0.0, "Tikhonov weight must be nonnegative");
        if mu == 0.0 {
            return self.prox(gamma, v);
        }
        let shrink = 1.0 + gamma * mu;
        self.prox(gamma / shrink, &(v / shrink))
    }

    /// Prox of the convex conjugate of `g + mu/2 ||.||^2` via the Moreau
    /// decomposition `P_{gamma h*}(v) = v - gamma P_{h / gamma}(v / gamma)`.
    pub fn prox_conjugate(&self, gamma: f64, mu: f64, v: &Array1<f64>) -> Array1<f64> {
        let inner = self.prox_tikhonov(1.0 / gamma, mu, &(v / gamma));
        v - &(gamma * &inner)
    }

    /// Apply one generalized Jacobian element `M` of `v -> P_{gamma g}(v)` to
    /// the direction `p`. `M` is symmetric positive semidefinite with
    /// eigenvalues in `[0, 1]`.
    pub fn prox_jacobian_vec(&self, gamma: f64, v: &Array1<f64>, p: &Array1<f64>) -> Array1<f64> {
        assert!(gamma > 0.0, "prox parameter must be positive");
        match self {
            Regularizer::L1 { lambda } => {
                let t = gamma * lambda;
                Array1::from_iter(
                    v.iter()
                        .zip(p.iter())
                        .map(|(&vi, &pi)| if vi.abs() > t { pi } else { 0.0 }),
                )
            }
            Regularizer::GroupL2 { lambda, groups, dim } => {
                let t = gamma * lambda;
                let mut out = Array1::zeros(*dim);
                for g in groups {
                    let norm = g.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
                    if norm > t {
                        // d/dv [(1 - t/||v||) v] = (1 - t/||v||) I + t v v^T / ||v||^3
                        let dot: f64 = g.iter().map(|&i| v[i] * p[i]).sum();
                        let f = 1.0 - t / norm;
                        let c = t * dot / (norm * norm * norm);
                        for &i in g {
                            out[i] = f * p[i] + c * v[i];
                        }
                    }
                }
                out
            }
            Regularizer::AnalysisL1 { lambda, basis } => {
                let t = gamma * lambda;
                let coeffs = basis.apply(v);
                let mut dir = basis.apply(p);
                for (d, &c) in dir.iter_mut().zip(coeffs.iter()) {
                    if c.abs() <= t {
                        *d = 0.0;
                    }
                }
                basis.adjoint_apply(&dir)
            }
            Regularizer::Bounds { lower, upper } => Array1::from_iter(
                v.iter()
                    .zip(p.iter())
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|((&vi, &pi), (&l, &u))| if l < vi && vi < u { pi } else { 0.0 }),
            ),
        }
    }

    /// Jacobian application for the Tikhonov-shifted prox, by the chain rule
    /// on [`Regularizer::prox_tikhonov`].
    pub fn prox_tikhonov_jacobian_vec(
        &self,
        gamma: f64,
        mu: f64,
        v: &Array1<f64>,
        p: &Array1<f64>,
    ) -> Array1<f64> {
        let shrink = 1.0 + gamma * mu;
        let inner = self.prox_jacobian_vec(gamma / shrink, &(v / shrink), p);
        inner / shrink
    }

    /// Distance-like measure of how far `s` is from the subdifferential of `g`
    /// at `x`; zero (up to rounding) certifies `s` is a valid subgradient.
    pub fn subgradient_violation(&self, x: &Array1<f64>, s: &Array1<f64>) -> f64 {
        match self {
            Regularizer::L1 { lambda } => x
                .iter()
                .zip(s.iter())
                .map(|(&xi, &si)| {
                    if xi != 0.0 {
                        (si - lambda * xi.signum()).abs()
                    } else {
                        (si.abs() - lambda).max(0.0)
                    }
                })
                .fold(0.0, f64::max),
            Regularizer::GroupL2 { lambda, groups, .. } => groups
                .iter()
                .map(|g| {
                    let norm = g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        g.iter()
                            .map(|&i| {
                                let want = lambda * x[i] / norm;
                                (s[i] - want) * (s[i] - want)
                            })
                            .sum::<f64>()
                            .sqrt()
                    } else {
                        let sn = g.iter().map(|&i| s[i] * s[i]).sum::<f64>().sqrt();
                        (sn - lambda).max(0.0)
                    }
                })
                .fold(0.0, f64::max),
            Regularizer::AnalysisL1 { lambda, basis } => {
                // s = B^T q with q in lambda * subdiff(||.||_1) at Bx; with an
                // orthogonal basis q = B s.
                let q = basis.apply(s);
                let coeffs = basis.apply(x);
                coeffs
                    .iter()
                    .zip(q.iter())
                    .map(|(&ci, &qi)| {
                        if ci.abs() > 1e-12 {
                            (qi - lambda * ci.signum()).abs()
                        } else {
                            (qi.abs() - lambda).max(0.0)
                        }
                    })
                    .fold(0.0, f64::max)
            }
            Regularizer::Bounds { lower, upper } => x
                .iter()
                .zip(s.iter())
                .zip(lower.iter().zip(upper.iter()))
                .map(|((&xi, &si), (&l, &u))| {
                    let mut viol: f64 = 0.0;
                    if xi > l && xi < u {
                        viol = si.abs();
                    } else {
                        if xi <= l {
                            viol = viol.max(si.max(0.0));
                        }
                        if xi >= u {
                            viol = viol.max((-si).max(0.0));
                        }
                        if xi == l && xi == u {
                            viol = 0.0;
                        }
                    }
                    viol
                })
                .fold(0.0, f64::max),
        }
    }
}

/// Scalar soft threshold `sign(z) max(|z| - t, 0)`.
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from_iter((0..n).map(|_| rng.random_range(-3.0..3.0)))
    }

    /// Small orthogonal basis for analysis tests: 4x4 Haar built densely.
    fn tiny_orthogonal() -> Arc<LinearMap> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let m = array![
            [0.5, 0.5, 0.5, 0.5],
            [0.5, 0.5, -0.5, -0.5],
            [r, -r, 0.0, 0.0],
            [0.0, 0.0, r, -r],
        ];
        Arc::new(LinearMap::dense(m))
    }

    fn all_kinds() -> Vec<Regularizer> {
        vec![
            Regularizer::l1(0.7),
            Regularizer::group_l2(0.9, vec![vec![0, 1], vec![2], vec![3]]),
            Regularizer::analysis_l1(0.5, tiny_orthogonal()),
            Regularizer::bounds(
                array![-1.0, 0.0, f64::NEG_INFINITY, -2.0],
                array![1.0, 0.5, f64::INFINITY, 2.0],
            ),
        ]
    }

    #[test]
    fn value_examples() {
        let g = Regularizer::l1(2.0);
        assert_eq!(g.value(&array![1.0, -3.0]), 8.0);

        let g = Regularizer::group_l2(1.0, vec![vec![0, 1], vec![2]]);
        assert!((g.value(&array![3.0, 4.0, -5.0]) - 10.0).abs() < 1e-15);

        let g = Regularizer::bounds(array![0.0], array![1.0]);
        assert_eq!(g.value(&array![0.5]), 0.0);
        assert_eq!(g.value(&array![1.5]), f64::INFINITY);
    }

    #[test]
    fn prox_examples() {
        let g = Regularizer::l1(1.0);
        let z = g.prox(1.0, &array![2.0, -0.5, 1.0]);
        assert_eq!(z, array![1.0, 0.0, 0.0]);

        let g = Regularizer::group_l2(1.0, vec![vec![0, 1]]);
        let z = g.prox(1.0, &array![0.0, 2.0]);
        assert!((z[0]).abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15);

        let g = Regularizer::bounds(array![-1.0, -1.0], array![1.0, 1.0]);
        assert_eq!(g.prox(3.0, &array![2.0, -0.25]), array![1.0, -0.25]);
    }

    #[test]
    fn analysis_prox_matches_synthesis_path() {
        // With an orthogonal basis, prox of lambda ||B x||_1 is
        // B^T soft(B v); check against a change of variables by hand.
        let basis = tiny_orthogonal();
        let g = Regularizer::analysis_l1(0.5, basis.clone());
        let v = array![1.0, -0.3, 0.2, 0.8];
        let z = g.prox(0.9, &v);
        let coeffs = basis.apply(&v).mapv(|c| soft_threshold(c, 0.45));
        let want = basis.adjoint_apply(&coeffs);
        let err = (&z - &want).iter().map(|d| d.abs()).fold(0.0, f64::max);
        assert!(err < 1e-15);
        // The analysis value of the prox point matches the thresholded
        // coefficient norm.
        assert!((g.value(&z) - 0.5 * coeffs.iter().map(|c| c.abs()).sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_grid_oracle() {
        // Brute-force minimization of gamma-weighted objectives on a fine grid
        // pins down prox and prox_tikhonov for the scalar L1 case.
        let lambda = 0.7;
        let g = Regularizer::l1(lambda);
        for &v in &[-3.0, -0.2, 0.0, 1.7, 5.0] {
            for &gamma in &[0.5, 1.0, 2.0] {
                for &mu in &[0.0, 0.8] {
                    let mut best = (f64::INFINITY, 0.0);
                    let mut z = -10.0_f64;
                    while z <= 10.0 {
                        let obj = lambda * z.abs()
                            + 0.5 * mu * z * z
                            + (z - v) * (z - v) / (2.0 * gamma);
                        if obj < best.0 {
                            best = (obj, z);
                        }
                        z += 1e-4;
                    }
                    let got = g.prox_tikhonov(gamma, mu, &array![v])[0];
                    assert!(
                        (got - best.1).abs() <= 1e-3,
                        "v={v} gamma={gamma} mu={mu}: got {got}, grid {}",
                        best.1
                    );
                }
            }
        }
    }

    #[test]
    fn prox_minimizes_its_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for g in all_kinds() {
            for _ in 0..10 {
                let v = rand_vec(&mut rng, 4);
                let gamma = rng.random_range(0.2..3.0);
                let z = g.prox(gamma, &v);
                let obj_z = gamma * g.value(&z) + 0.5 * (&z - &v).mapv(|d| d * d).sum();
                for _ in 0..100 {
                    let w = rand_vec(&mut rng, 4);
                    let obj_w = gamma * g.value(&w) + 0.5 * (&w - &v).mapv(|d| d * d).sum();
                    assert!(obj_z <= obj_w + 1e-12 * (1.0 + obj_w.abs()));
                }
            }
        }
    }

    #[test]
    fn tikhonov_prox_reduces_to_plain_prox() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for g in all_kinds() {
            let v = rand_vec(&mut rng, 4);
            let a = g.prox_tikhonov(0.8, 0.0, &v);
            let b = g.prox(0.8, &v);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn moreau_decomposition_closes() {
        // P_{gamma h}(v) + gamma P_{h/gamma}(v/gamma conjugate side) must
        // reassemble v for every kind and random (gamma, mu).
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for g in all_kinds() {
            for _ in 0..20 {
                let v = rand_vec(&mut rng, 4);
                let gamma = rng.random_range(0.1..10.0);
                let mu = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..2.0) };
                let p = g.prox_tikhonov(gamma, mu, &v);
                let q = g.prox_conjugate(1.0 / gamma, mu, &(&v / gamma));
                let back = &p + &(gamma * &q);
                let err = (&back - &v).iter().map(|d| d.abs()).fold(0.0, f64::max);
                let scale = 1.0 + v.iter().map(|d| d.abs()).fold(0.0, f64::max);
                assert!(err <= 1e-12 * scale, "Moreau identity err {err}");
            }
        }
    }

    #[test]
    fn conjugate_prox_is_ball_projection_for_norms() {
        // For mu = 0 the conjugate of lambda ||.||_1 is the indicator of the
        // infinity-ball of radius lambda, so its prox is a clamp. This checks
        // prox_conjugate against an independent formula.
        let g = Regularizer::l1(1.0);
        let z = g.prox_conjugate(1.0, 0.0, &array![0.5, -2.0]);
        assert!((z[0] - 0.5).abs() < 1e-15 && (z[1] + 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..20 {
            let v = rand_vec(&mut rng, 4);
            let gamma = rng.random_range(0.1..5.0);
            let lam = 0.7;
            let z = Regularizer::l1(lam).prox_conjugate(gamma, 0.0, &v);
            let want = v.mapv(|c| c.clamp(-lam, lam));
            let err = (&z - &want).iter().map(|d| d.abs()).fold(0.0, f64::max);
            assert!(err < 1e-12);

            // Group norm conjugate projects each block onto the Euclidean
            // lambda-ball.
            let lam = 0.9;
            let gg = Regularizer::group_l2(lam, vec![vec![0, 1], vec![2, 3]]);
            let z = gg.prox_conjugate(gamma, 0.0, &v);
            for block in [[0usize, 1], [2, 3]] {
                let norm = (v[block[0]].powi(2) + v[block[1]].powi(2)).sqrt();
                let f = if norm > lam { lam / norm } else { 1.0 };
                for &i in &block {
                    assert!((z[i] - f * v[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn prox_is_firmly_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for g in all_kinds() {
            for _ in 0..25 {
                let v1 = rand_vec(&mut rng, 4);
                let v2 = rand_vec(&mut rng, 4);
                let gamma = rng.random_range(0.2..4.0);
                let p1 = g.prox(gamma, &v1);
                let p2 = g.prox(gamma, &v2);
                let dp = &p1 - &p2;
                let dv = &v1 - &v2;
                assert!(dp.dot(&dp) <= dp.dot(&dv) + 1e-10);
            }
        }
    }

    #[test]
    fn prox_point_carries_a_subgradient_certificate() {
        // (v - z) / gamma must land in the subdifferential of g at z = prox(v).
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for g in all_kinds() {
            for _ in 0..25 {
                let v = rand_vec(&mut rng, 4);
                let gamma = rng.random_range(0.2..4.0);
                let z = g.prox(gamma, &v);
                let s = (&v - &z) / gamma;
                assert!(
                    g.subgradient_violation(&z, &s) <= 1e-10,
                    "certificate violation for {g:?}"
                );
            }
        }
    }

    #[test]
    fn values_are_midpoint_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for g in all_kinds() {
            for _ in 0..25 {
                // Sample inside the box so Bounds stays finite.
                let x = Array1::from_iter((0..4).map(|_| rng.random_range(-0.9..0.4)));
                let y = Array1::from_iter((0..4).map(|_| rng.random_range(-0.9..0.4)));
                let mid = (&x + &y) / 2.0;
                assert!(g.value(&mid) <= 0.5 * (g.value(&x) + g.value(&y)) + 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_directional_differences_at_generic_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let h = 1e-6;
        for g in all_kinds() {
            let gamma = 0.8;
            let mut checked = 0;
            while checked < 15 {
                let v = rand_vec(&mut rng, 4);
                let p = rand_vec(&mut rng, 4);
                // Skip draws too close to a kink of the prox map, where the
                // directional derivative genuinely differs between branches.
                if near_kink(&g, gamma, &v) {
                    continue;
                }
                let jp = g.prox_jacobian_vec(gamma, &v, &p);
                let fp = g.prox(gamma, &(&v + &(h * &p)));
                let fm = g.prox(gamma, &(&v - &(h * &p)));
                let fd = (&fp - &fm) / (2.0 * h);
                for i in 0..4 {
                    assert!(
                        (jp[i] - fd[i]).abs() <= 1e-6 * (1.0 + jp[i].abs()),
                        "{g:?}: jac[{i}] = {} vs fd {}",
                        jp[i],
                        fd[i]
                    );
                }
                checked += 1;
            }
        }
    }

    fn near_kink(g: &Regularizer, gamma: f64, v: &Array1<f64>) -> bool {
        let margin = 1e-3;
        match g {
            Regularizer::L1 { lambda } => {
                v.iter().any(|z| (z.abs() - gamma * lambda).abs() < margin)
            }
            Regularizer::GroupL2 { lambda, groups, .. } => groups.iter().any(|grp| {
                let norm = grp.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
                (norm - gamma * lambda).abs() < margin
            }),
            Regularizer::AnalysisL1 { lambda, basis } => basis
                .apply(v)
                .iter()
                .any(|z| (z.abs() - gamma * lambda).abs() < margin),
            Regularizer::Bounds { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .any(|(z, (l, u))| (z - l).abs() < margin || (z - u).abs() < margin),
        }
    }

    #[test]
    fn tikhonov_jacobian_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let g = Regularizer::l1(0.7);
        let (gamma, mu) = (0.9, 0.6);
        let h = 1e-6;
        for _ in 0..10 {
            let v = rand_vec(&mut rng, 4);
            if near_kink(&g, gamma / (1.0 + gamma * mu), &(&v / (1.0 + gamma * mu))) {
                continue;
            }
            let p = rand_vec(&mut rng, 4);
            let jp = g.prox_tikhonov_jacobian_vec(gamma, mu, &v, &p);
            let fp = g.prox_tikhonov(gamma, mu, &(&v + &(h * &p)));
            let fm = g.prox_tikhonov(gamma, mu, &(&v - &(h * &p)));
            let fd = (&fp - &fm) / (2.0 * h);
            for i in 0..4 {
                assert!((jp[i] - fd[i]).abs() <= 1e-6 * (1.0 + jp[i].abs()));
            }
        }
    }

    #[test]
    #[should_panic(expected = "disjoint")]
    fn overlapping_groups_are_rejected() {
        Regularizer::group_l2(1.0, vec![vec![0, 1], vec![1, 2]]);
    }

    #[test]
    #[should_panic(expected = "orthogonality")]
    fn non_orthogonal_analysis_basis_is_rejected() {
        let m = Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        Regularizer::analysis_l1(1.0, Arc::new(LinearMap::dense(m)));
    }
}
