//! Matrix-free linear operators.
//!
//! The solver only ever needs `apply` and `adjoint_apply`, so operators are
//! represented as an enum of structured kinds rather than explicit matrices.
//! The structured kinds (subsampled DCT, Haar wavelet, circular blur) run in
//! O(n log n) or O(n) per application; `Dense` exists for small problems and
//! for test oracles.

use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

/// Shared FFT plan memo keyed by transform length.
fn plan_forward(len: usize) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let memo = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut memo = memo.lock().unwrap();
    memo.entry(len)
        .or_insert_with(|| FftPlanner::new().plan_fft_forward(len))
        .clone()
}

/// Orthonormal DCT-II, `y_k = c_k sum_j x_j cos(pi k (2j+1) / (2n))` with
/// `c_0 = sqrt(1/n)` and `c_k = sqrt(2/n)` otherwise.
///
/// Uses one complex FFT of length 2n on the mirrored extension
/// `[x_0, .., x_{n-1}, x_{n-1}, .., x_0]`, for which
/// `DFT(w)[k] = 2 exp(i pi k / (2n)) sum_j x_j cos(pi k (2j+1) / (2n))`.
fn dct2_ortho(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let fft = plan_forward(2 * n);
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(2 * n);
    buf.extend(x.iter().map(|&v| Complex::new(v, 0.0)));
    buf.extend(x.iter().rev().map(|&v| Complex::new(v, 0.0)));
    fft.process(&mut buf);
    let s0 = (1.0 / n as f64).sqrt();
    let s1 = (2.0 / n as f64).sqrt();
    (0..n)
        .map(|k| {
            let th = PI * k as f64 / (2.0 * n as f64);
            let tw = Complex::new(th.cos(), -th.sin());
            let c = if k == 0 { s0 } else { s1 };
            0.5 * c * (tw * buf[k]).re
        })
        .collect()
}

/// Adjoint (= inverse) of [`dct2_ortho`], an orthonormal DCT-III.
///
/// Derived by transposing the FFT pipeline above: with `theta_k = pi k / (2n)`,
/// feed `c_k z_k exp(-i theta_k)` into a length-2n forward FFT, take real
/// parts, and fold the mirror extension back, `out_j = (re_j + re_{2n-1-j})/2`.
fn dct2_ortho_adjoint(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    if n == 0 {
        return Vec::new();
    }
    let fft = plan_forward(2 * n);
    let s0 = (1.0 / n as f64).sqrt();
    let s1 = (2.0 / n as f64).sqrt();
    let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
    for (k, &zk) in z.iter().enumerate() {
        let th = PI * k as f64 / (2.0 * n as f64);
        let c = if k == 0 { s0 } else { s1 };
        buf[k] = Complex::new(th.cos(), -th.sin()) * (c * zk);
    }
    fft.process(&mut buf);
    (0..n)
        .map(|j| 0.5 * (buf[j].re + buf[2 * n - 1 - j].re))
        .collect()
}

/// In-place 2-D Haar analysis on the leading `t x t` block of each level.
/// Each level applies the orthogonal pair butterfly
/// `(a, b) -> ((a+b)/sqrt2, (a-b)/sqrt2)` along rows, then columns, writing
/// averages to the first half and details to the second half.
fn haar2d_forward(buf: &mut [f64], side: usize, levels: usize, tmp: &mut [f64]) {
    for lvl in 0..levels {
        let t = side >> lvl;
        let h = t / 2;
        for r in 0..t {
            for i in 0..h {
                let a = buf[r * side + 2 * i];
                let b = buf[r * side + 2 * i + 1];
                tmp[i] = (a + b) * FRAC_1_SQRT_2;
                tmp[h + i] = (a - b) * FRAC_1_SQRT_2;
            }
            buf[r * side..r * side + t].copy_from_slice(&tmp[..t]);
        }
        for c in 0..t {
            for i in 0..h {
                let a = buf[(2 * i) * side + c];
                let b = buf[(2 * i + 1) * side + c];
                tmp[i] = (a + b) * FRAC_1_SQRT_2;
                tmp[h + i] = (a - b) * FRAC_1_SQRT_2;
            }
            for (i, &v) in tmp[..t].iter().enumerate() {
                buf[i * side + c] = v;
            }
        }
    }
}

/// Adjoint (= inverse) of [`haar2d_forward`]: levels in reverse order, and
/// within each level columns before rows, using the inverse butterfly.
fn haar2d_adjoint(buf: &mut [f64], side: usize, levels: usize, tmp: &mut [f64]) {
    for lvl in (0..levels).rev() {
        let t = side >> lvl;
        let h = t / 2;
        for c in 0..t {
            for i in 0..h {
                let u = buf[i * side + c];
                let v = buf[(h + i) * side + c];
                tmp[2 * i] = (u + v) * FRAC_1_SQRT_2;
                tmp[2 * i + 1] = (u - v) * FRAC_1_SQRT_2;
            }
            for (i, &v) in tmp[..t].iter().enumerate() {
                buf[i * side + c] = v;
            }
        }
        for r in 0..t {
            for i in 0..h {
                let u = buf[r * side + i];
                let v = buf[r * side + h + i];
                tmp[2 * i] = (u + v) * FRAC_1_SQRT_2;
                tmp[2 * i + 1] = (u - v) * FRAC_1_SQRT_2;
            }
            buf[r * side..r * side + t].copy_from_slice(&tmp[..t]);
        }
    }
}

/// Circular 1-D correlation along rows: `out[r,c] = sum_t k[t] x[r, (c+t-half) mod side]`.
fn conv_rows(src: &[f64], dst: &mut [f64], side: usize, kernel: &[f64]) {
    let half = kernel.len() / 2;
    for r in 0..side {
        let row = &src[r * side..(r + 1) * side];
        for c in 0..side {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * row[(c + side + t - half) % side];
            }
            dst[r * side + c] = acc;
        }
    }
}

/// Circular 1-D correlation along columns.
fn conv_cols(src: &[f64], dst: &mut [f64], side: usize, kernel: &[f64]) {
    let half = kernel.len() / 2;
    for c in 0..side {
        for r in 0..side {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * src[((r + side + t - half) % side) * side + c];
            }
            dst[r * side + c] = acc;
        }
    }
}

/// A real linear map `R^cols -> R^rows` with a matching adjoint.
#[derive(Clone, Debug)]
pub enum LinearMap {
    /// Explicit matrix.
    Dense(Array2<f64>),
    /// Rows of the n x n orthonormal DCT-II selected by `rows` (0-based,
    /// strictly increasing).
    SubsampledDct { n: usize, rows: Vec<usize> },
    /// Orthonormal 2-D Haar wavelet analysis of a `side x side` image
    /// (row-major), recursing `levels` times on the average block.
    Haar2d { side: usize, levels: usize },
    /// Circular separable 2-D correlation of a `side x side` image with a
    /// 1-D kernel applied along rows and columns.
    Blur2d { side: usize, kernel: Vec<f64> },
    /// Row scaling of a shared base map: `x -> scale .* (base x)`.
    DiagScaled {
        base: Arc<LinearMap>,
        scale: Array1<f64>,
    },
}

impl LinearMap {
    /// Explicit matrix operator.
    pub fn dense(m: Array2<f64>) -> Self {
        LinearMap::Dense(m)
    }

    /// Subsampled orthonormal DCT-II. Panics if `rows` is not strictly
    /// increasing within `0..n`.
    pub fn subsampled_dct(n: usize, rows: Vec<usize>) -> Self {
        assert!(!rows.is_empty() && rows.len() <= n, "row subset must be nonempty and at most n");
        for w in rows.windows(2) {
            assert!(w[0] < w[1], "DCT row indices must be strictly increasing");
        }
        assert!(*rows.last().unwrap() < n, "DCT row index out of range");
        LinearMap::SubsampledDct { n, rows }
    }

    /// Orthonormal 2-D Haar analysis. Panics unless `side` is divisible by
    /// `2^levels` with `levels >= 1`.
    pub fn haar2d(side: usize, levels: usize) -> Self {
        assert!(levels >= 1, "Haar transform needs at least one level");
        assert!(
            side >= 2 && side % (1 << levels) == 0,
            "side must be divisible by 2^levels"
        );
        LinearMap::Haar2d { side, levels }
    }

    /// Circular blur with an arbitrary odd-length kernel no longer than `side`.
    pub fn blur2d(side: usize, kernel: Vec<f64>) -> Self {
        assert!(kernel.len() % 2 == 1, "blur kernel length must be odd");
        assert!(kernel.len() <= side, "blur kernel longer than image side");
        LinearMap::Blur2d { side, kernel }
    }

    /// Circular Gaussian blur: `2*radius + 1` taps of `exp(-t^2 / (2 sigma^2))`
    /// normalized to sum to one.
    pub fn gaussian_blur2d(side: usize, radius: usize, sigma: f64) -> Self {
        assert!(sigma > 0.0, "Gaussian width must be positive");
        let taps: Vec<f64> = (0..=2 * radius)
            .map(|t| {
                let d = t as f64 - radius as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        Self::blur2d(side, taps.into_iter().map(|v| v / total).collect())
    }

    /// Row-scaled operator `x -> scale .* (base x)`. Panics if `scale` does
    /// not match the base row count.
    pub fn diag_scaled(base: Arc<LinearMap>, scale: Array1<f64>) -> Self {
        assert_eq!(scale.len(), base.rows(), "scale length must equal base rows");
        LinearMap::DiagScaled { base, scale }
    }

    /// Output dimension.
    pub fn rows(&self) -> usize {
        match self {
            LinearMap::Dense(m) => m.nrows(),
            LinearMap::SubsampledDct { rows, .. } => rows.len(),
            LinearMap::Haar2d { side, .. } | LinearMap::Blur2d { side, .. } => side * side,
            LinearMap::DiagScaled { scale, .. } => scale.len(),
        }
    }

    /// Input dimension.
    pub fn cols(&self) -> usize {
        match self {
            LinearMap::Dense(m) => m.ncols(),
            LinearMap::SubsampledDct { n, .. } => *n,
            LinearMap::Haar2d { side, .. } | LinearMap::Blur2d { side, .. } => side * side,
            LinearMap::DiagScaled { base, .. } => base.cols(),
        }
    }

    /// `A x`. Panics if `x.len() != self.cols()`.
    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.cols(), "apply: dimension mismatch");
        match self {
            LinearMap::Dense(m) => m.dot(x),
            LinearMap::SubsampledDct { rows, .. } => {
                let full = dct2_ortho(x.as_slice().expect("contiguous"));
                rows.iter().map(|&r| full[r]).collect()
            }
            LinearMap::Haar2d { side, levels } => {
                let mut buf = x.to_vec();
                let mut tmp = vec![0.0; *side];
                haar2d_forward(&mut buf, *side, *levels, &mut tmp);
                Array1::from_vec(buf)
            }
            LinearMap::Blur2d { side, kernel } => {
                let mut mid = vec![0.0; side * side];
                let mut out = vec![0.0; side * side];
                conv_rows(x.as_slice().expect("contiguous"), &mut mid, *side, kernel);
                conv_cols(&mid, &mut out, *side, kernel);
                Array1::from_vec(out)
            }
            LinearMap::DiagScaled { base, scale } => scale * &base.apply(x),
        }
    }

    /// `A^T y`. Panics if `y.len() != self.rows()`.
    pub fn adjoint_apply(&self, y: &Array1<f64>) -> Array1<f64> {
        assert_eq!(y.len(), self.rows(), "adjoint_apply: dimension mismatch");
        match self {
            LinearMap::Dense(m) => m.t().dot(y),
            LinearMap::SubsampledDct { n, rows } => {
                let mut full = vec![0.0; *n];
                for (i, &r) in rows.iter().enumerate() {
                    full[r] = y[i];
                }
                Array1::from_vec(dct2_ortho_adjoint(&full))
            }
            LinearMap::Haar2d { side, levels } => {
                let mut buf = y.to_vec();
                let mut tmp = vec![0.0; *side];
                haar2d_adjoint(&mut buf, *side, *levels, &mut tmp);
                Array1::from_vec(buf)
            }
            LinearMap::Blur2d { side, kernel } => {
                let rev: Vec<f64> = kernel.iter().rev().copied().collect();
                let mut mid = vec![0.0; side * side];
                let mut out = vec![0.0; side * side];
                conv_rows(y.as_slice().expect("contiguous"), &mut mid, *side, &rev);
                conv_cols(&mid, &mut out, *side, &rev);
                Array1::from_vec(out)
            }
            LinearMap::DiagScaled { base, scale } => base.adjoint_apply(&(scale * y)),
        }
    }

    /// Materialize the operator column by column. Intended for small problems
    /// and test oracles only.
    pub fn to_dense(&self) -> Array2<f64> {
        let (r, c) = (self.rows(), self.cols());
        let mut m = Array2::zeros((r, c));
        let mut e = Array1::zeros(c);
        for j in 0..c {
            e[j] = 1.0;
            m.column_mut(j).assign(&self.apply(&e));
            e[j] = 0.0;
        }
        m
    }
}
