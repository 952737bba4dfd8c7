//! Seeded experiment families and the run harness: instance generation,
//! trial orchestration, and CSV/JSON emission.
//!
//! Randomness comes from ChaCha8, a counter-based generator whose streams are
//! identical across platforms for a given seed, so every instance is a pure
//! function of `(spec, seed, trial)`. Per-trial seeds mix the trial index
//! into the base seed with a golden-ratio multiply; the draw order inside
//! each generator (support, then signs and magnitudes, then measurement rows,
//! then noise) is part of the reproducibility contract.

use crate::diagnostics::{diagnose, ConvergenceReport, Stationarity, CURVATURE_TOL, ORDER_WINDOW};
use crate::linop::LinearMap;
use crate::model::Problem;
use crate::regularizer::Regularizer;
use crate::smooth::{SeparableLoss, SmoothTerm};
use crate::solver::{pg_baseline, solve, RunRecord, SolverConfig};
use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StudentT as StudentTNoise;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    L1StudentT,
    GroupStudentT,
    ImageRestore,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Irpnm,
    Pg,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Irpnm => "irpnm",
            SolverKind::Pg => "pg",
        }
    }
}

/// Everything needed to generate instances of one experiment family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    /// Signal length (pixel count for images).
    pub n: usize,
    /// Measurement count (equals `n` for images).
    pub m: usize,
    /// Nonzero entries (or nonzero groups); `None` applies the family rule
    /// `max(1, count / 40)`.
    pub s: Option<usize>,
    /// Dynamic range of the nonzero magnitudes, in dB.
    pub d: f64,
    /// Degrees of freedom of the fitting loss.
    pub nu: f64,
    /// Absolute penalty weight; overrides `c_lambda` when set.
    pub lambda: Option<f64>,
    /// Penalty weight relative to the gradient norm of the smooth part at
    /// zero (max norm for the sparse family, Euclidean for groups).
    pub c_lambda: f64,
    /// Degrees of freedom of the Student-t measurement noise.
    pub noise_dof: f64,
    /// Noise samples are multiplied by this before being added.
    pub noise_scale: f64,
    pub group_size: usize,
    /// Image side (images only), a power of two.
    pub side: usize,
    /// Wavelet decomposition depth (images only).
    pub levels: usize,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Sparse recovery from subsampled cosine measurements at desk scale.
    pub fn l1_desk() -> Self {
        ExperimentSpec {
            family: Family::L1StudentT,
            n: 4096,
            m: 512,
            s: None,
            d: 20.0,
            nu: 0.25,
            lambda: None,
            c_lambda: 0.1,
            noise_dof: 4.0,
            noise_scale: 0.1,
            group_size: 16,
            side: 64,
            levels: 4,
            trials: 1,
            seed: 0,
        }
    }

    /// Group-sparse recovery at desk scale.
    pub fn group_desk() -> Self {
        ExperimentSpec {
            nu: 0.2,
            noise_dof: 5.0,
            family: Family::GroupStudentT,
            ..ExperimentSpec::l1_desk()
        }
    }

    /// Wavelet-regularized deblurring of the bundled 64x64 image.
    pub fn image_desk() -> Self {
        ExperimentSpec {
            family: Family::ImageRestore,
            n: 64 * 64,
            m: 64 * 64,
            nu: 1.0,
            lambda: Some(1e-2),
            noise_dof: 1.0,
            noise_scale: 1e-3,
            ..ExperimentSpec::l1_desk()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.m > self.n {
            return Err("m must not exceed n".into());
        }
        if self.trials == 0 {
            return Err("trials must be positive".into());
        }
        if !(self.nu > 0.0) || !(self.noise_dof > 0.0) {
            return Err("degrees of freedom must be positive".into());
        }
        if !(self.noise_scale >= 0.0) || !(self.d >= 0.0) {
            return Err("noise scale and dynamic range must be nonnegative".into());
        }
        match self.lambda {
            Some(l) if !(l > 0.0) => return Err("lambda must be positive".into()),
            None if !(self.c_lambda > 0.0) => return Err("c_lambda must be positive".into()),
            _ => {}
        }
        match self.family {
            Family::L1StudentT => {
                if self.m == 0 {
                    return Err("m must be positive".into());
                }
            }
            Family::GroupStudentT => {
                if self.group_size == 0 || self.n % self.group_size != 0 {
                    return Err("n must be a positive multiple of the group size".into());
                }
                if self.m == 0 {
                    return Err("m must be positive".into());
                }
            }
            Family::ImageRestore => {
                if !self.side.is_power_of_two() || self.side < (1 << self.levels) {
                    return Err("image side must be a power of two covering the wavelet depth".into());
                }
                if self.n != self.side * self.side || self.m != self.n {
                    return Err("image specs need n = m = side^2".into());
                }
            }
        }
        Ok(())
    }

    /// The solver defaults this family is normally run with; images use a
    /// looser residual target.
    pub fn default_config(&self) -> SolverConfig {
        SolverConfig {
            eps0: match self.family {
                Family::ImageRestore => 1e-4,
                _ => 1e-5,
            },
            ..SolverConfig::default()
        }
    }
}

/// A generated problem instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    pub x_true: Option<Array1<f64>>,
    pub x_init: Array1<f64>,
    pub lambda: f64,
}

/// Deterministic per-trial seed derived from the experiment seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed ^ (trial.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn signal_values(rng: &mut ChaCha8Rng, d: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let exponent: f64 = rng.random_range(0.0..1.0);
            sign * 10f64.powf(d * exponent / 20.0)
        })
        .collect()
}

fn student_noise(rng: &mut ChaCha8Rng, dof: f64, scale: f64, count: usize) -> Array1<f64> {
    let dist = StudentTNoise::new(dof).expect("validated degrees of freedom");
    Array1::from_iter((0..count).map(|_| scale * dist.sample(rng)))
}

fn sorted_sample(rng: &mut ChaCha8Rng, universe: usize, count: usize) -> Vec<usize> {
    let mut picks = rand::seq::index::sample(rng, universe, count).into_vec();
    picks.sort_unstable();
    picks
}

/// Sparse spikes with the requested dynamic range, observed through a random
/// subset of orthonormal cosine rows under heavy-tailed noise.
pub fn gen_l1_student_t(spec: &ExperimentSpec, rng: &mut ChaCha8Rng) -> Instance {
    let n = spec.n;
    let s = spec.s.unwrap_or((n / 40).max(1));
    let support = sorted_sample(rng, n, s);
    let values = signal_values(rng, spec.d, s);
    let mut x_true = Array1::zeros(n);
    for (idx, val) in support.iter().zip(values) {
        x_true[*idx] = val;
    }
    let rows = sorted_sample(rng, n, spec.m);
    let a = Arc::new(LinearMap::subsampled_dct(n, rows));
    let noise = student_noise(rng, spec.noise_dof, spec.noise_scale, spec.m);
    let b = &a.apply(&x_true) + &noise;
    let smooth = SmoothTerm::new(SeparableLoss::student_t(spec.nu), a.clone(), b.clone());
    let lambda = spec.lambda.unwrap_or_else(|| {
        let g0 = smooth.eval(&Array1::zeros(n)).1;
        spec.c_lambda * g0.iter().map(|v| v.abs()).fold(0.0, f64::max)
    });
    let x_init = a.adjoint_apply(&b);
    Instance {
        problem: Problem::new(smooth, Regularizer::l1(lambda)),
        x_true: Some(x_true),
        x_init,
        lambda,
    }
}

/// Block-sparse variant: whole groups of consecutive entries switch on, and
/// the penalty is a sum of group norms weighted by the Euclidean gradient
/// norm at zero.
pub fn gen_group_student_t(spec: &ExperimentSpec, rng: &mut ChaCha8Rng) -> Instance {
    let n = spec.n;
    let gsize = spec.group_size;
    let groups = n / gsize;
    let s = spec.s.unwrap_or((groups / 40).max(1));
    let active = sorted_sample(rng, groups, s);
    let mut x_true = Array1::zeros(n);
    for g in &active {
        let values = signal_values(rng, spec.d, gsize);
        for (offset, val) in values.into_iter().enumerate() {
            x_true[g * gsize + offset] = val;
        }
    }
    let rows = sorted_sample(rng, n, spec.m);
    let a = Arc::new(LinearMap::subsampled_dct(n, rows));
    let noise = student_noise(rng, spec.noise_dof, spec.noise_scale, spec.m);
    let b = &a.apply(&x_true) + &noise;
    let smooth = SmoothTerm::new(SeparableLoss::student_t(spec.nu), a.clone(), b.clone());
    let lambda = spec.lambda.unwrap_or_else(|| {
        let g0 = smooth.eval(&Array1::zeros(n)).1;
        spec.c_lambda * g0.dot(&g0).sqrt()
    });
    let x_init = a.adjoint_apply(&b);
    Instance {
        problem: Problem::new(smooth, Regularizer::group_l2_blocks(lambda, n, gsize)),
        x_true: Some(x_true),
        x_init,
        lambda,
    }
}

/// The grayscale test image shipped with the crate, scaled to `[0, 1]`.
pub fn bundled_image() -> (usize, Array1<f64>) {
    let raw = include_str!("../data/cells64.csv");
    let mut values = Vec::new();
    for line in raw.lines() {
        for field in line.split(',') {
            let v: f64 = field.trim().parse().expect("bundled image is numeric");
            values.push(v / 255.0);
        }
    }
    let side = (values.len() as f64).sqrt() as usize;
    assert_eq!(side * side, values.len(), "bundled image must be square");
    (side, Array1::from_vec(values))
}

/// Deterministic stand-in image for sides other than the bundled one: a
/// diagonal ramp with a bright square and a dark disk.
fn synthetic_image(side: usize) -> Array1<f64> {
    let mut img = Array1::zeros(side * side);
    let q = side / 4;
    let center = (side as f64 * 0.68, side as f64 * 0.3);
    let radius = side as f64 * 0.14;
    for r in 0..side {
        for c in 0..side {
            let mut v = 0.2 + 0.4 * (r + c) as f64 / (2 * side) as f64;
            if (q..2 * q).contains(&r) && (q..2 * q).contains(&c) {
                v = 0.95;
            }
            let dr = r as f64 - center.0;
            let dc = c as f64 - center.1;
            if (dr * dr + dc * dc).sqrt() < radius {
                v = 0.05;
            }
            img[r * side + c] = v;
        }
    }
    img
}

/// Circular Gaussian blur of a piecewise-smooth image, recovered with an
/// orthonormal wavelet sparsity penalty under Cauchy-like noise.
pub fn gen_image_restore(spec: &ExperimentSpec, rng: &mut ChaCha8Rng) -> Instance {
    let side = spec.side;
    let x_true = if side == 64 {
        bundled_image().1
    } else {
        synthetic_image(side)
    };
    let a = Arc::new(LinearMap::gaussian_blur2d(side, 4, 4.0));
    let basis = Arc::new(LinearMap::haar2d(side, spec.levels));
    let noise = student_noise(rng, spec.noise_dof, spec.noise_scale, side * side);
    let b = &a.apply(&x_true) + &noise;
    let lambda = spec.lambda.unwrap_or(1e-2);
    let smooth = SmoothTerm::new(SeparableLoss::student_t(spec.nu), a, b.clone());
    Instance {
        problem: Problem::new(smooth, Regularizer::analysis_l1(lambda, basis)),
        x_true: Some(x_true),
        x_init: b,
        lambda,
    }
}

/// Generate one instance of whatever family the spec selects.
pub fn generate(spec: &ExperimentSpec, rng: &mut ChaCha8Rng) -> Instance {
    match spec.family {
        Family::L1StudentT => gen_l1_student_t(spec, rng),
        Family::GroupStudentT => gen_group_student_t(spec, rng),
        Family::ImageRestore => gen_image_restore(spec, rng),
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One experiment: a spec, the solvers to run on it, and their shared
/// configuration.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub spec: ExperimentSpec,
    pub solvers: Vec<SolverKind>,
    pub config: SolverConfig,
}

/// Per-run entry of the summary.
#[derive(Clone, Debug, Serialize)]
pub struct RunInfo {
    pub trial: usize,
    pub solver: String,
    pub status: String,
    pub converged: bool,
    pub final_f: f64,
    pub final_resid: f64,
    pub iterations: usize,
    pub estimated_order: Option<f64>,
    pub stationarity: Stationarity,
    pub unit_step_tail: Option<usize>,
    /// Wall time; the only nondeterministic field, kept out of the CSVs.
    pub time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverSummary {
    pub solver: String,
    pub mean_final_f: f64,
    pub mean_final_resid: f64,
    pub mean_time_s: f64,
    pub all_converged: bool,
    pub runs: Vec<RunInfo>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub spec: ExperimentSpec,
    pub solvers: Vec<SolverSummary>,
}

impl ExperimentSummary {
    pub fn all_converged(&self) -> bool {
        self.solvers.iter().all(|s| s.all_converged)
    }
}

struct TrialOutcome {
    trial: usize,
    solver: SolverKind,
    result: Result<(RunRecord, ConvergenceReport), String>,
    time_s: f64,
}

fn run_one(
    plan: &RunPlan,
    instance: &Instance,
    trial: usize,
    solver: SolverKind,
) -> TrialOutcome {
    let started = Instant::now();
    let solved = match solver {
        SolverKind::Irpnm => solve(&instance.problem, instance.x_init.clone(), &plan.config),
        SolverKind::Pg => pg_baseline(&instance.problem, instance.x_init.clone(), &plan.config),
    };
    let time_s = started.elapsed().as_secs_f64();
    let result = match solved {
        Ok(record) => {
            let report = diagnose(
                &instance.problem,
                &record,
                plan.config.eps0,
                ORDER_WINDOW,
                CURVATURE_TOL,
            );
            Ok((record, report))
        }
        Err(e) => Err(format!("error: {e}")),
    };
    TrialOutcome { trial, solver, result, time_s }
}

/// Run every trial of the plan (concurrently), write per-run iteration and
/// error-curve CSVs plus a summary JSON into `out_dir`, and return the
/// summary. Solver errors are recorded in the summary; they do not abort the
/// experiment.
pub fn run_experiment(plan: &RunPlan, out_dir: &Path) -> Result<ExperimentSummary, ExperimentError> {
    plan.spec.validate().map_err(ExperimentError::InvalidSpec)?;
    if plan.solvers.is_empty() {
        return Err(ExperimentError::InvalidSpec("no solvers requested".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let outcomes: Vec<Vec<TrialOutcome>> = (0..plan.spec.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(plan.spec.seed, trial as u64));
            let instance = generate(&plan.spec, &mut rng);
            plan.solvers
                .iter()
                .map(|&solver| run_one(plan, &instance, trial, solver))
                .collect()
        })
        .collect();

    let mut summaries: Vec<SolverSummary> = plan
        .solvers
        .iter()
        .map(|&s| SolverSummary {
            solver: s.as_str().to_string(),
            mean_final_f: 0.0,
            mean_final_resid: 0.0,
            mean_time_s: 0.0,
            all_converged: true,
            runs: Vec::new(),
        })
        .collect();

    for per_trial in &outcomes {
        for outcome in per_trial {
            let slot = plan
                .solvers
                .iter()
                .position(|&s| s == outcome.solver)
                .expect("outcome solver comes from the plan");
            let name = outcome.solver.as_str();
            let info = match &outcome.result {
                Ok((record, report)) => {
                    write_record_csv(out_dir, outcome.trial, name, record)?;
                    write_error_csv(out_dir, outcome.trial, name, &report.errors)?;
                    RunInfo {
                        trial: outcome.trial,
                        solver: name.to_string(),
                        status: format!("{:?}", record.status),
                        converged: record.converged(),
                        final_f: record.final_f,
                        final_resid: record.final_resid,
                        iterations: record.rows.len(),
                        estimated_order: report.estimated_order,
                        stationarity: report.stationarity,
                        unit_step_tail: report.unit_step_tail,
                        time_s: outcome.time_s,
                    }
                }
                Err(message) => RunInfo {
                    trial: outcome.trial,
                    solver: name.to_string(),
                    status: message.clone(),
                    converged: false,
                    final_f: f64::NAN,
                    final_resid: f64::NAN,
                    iterations: 0,
                    estimated_order: None,
                    stationarity: Stationarity::Inconclusive,
                    unit_step_tail: None,
                    time_s: outcome.time_s,
                },
            };
            summaries[slot].all_converged &= info.converged;
            summaries[slot].runs.push(info);
        }
    }

    for summary in &mut summaries {
        let usable: Vec<&RunInfo> =
            summary.runs.iter().filter(|r| r.final_f.is_finite()).collect();
        let count = usable.len() as f64;
        if count > 0.0 {
            summary.mean_final_f = usable.iter().map(|r| r.final_f).sum::<f64>() / count;
            summary.mean_final_resid =
                usable.iter().map(|r| r.final_resid).sum::<f64>() / count;
            summary.mean_time_s = usable.iter().map(|r| r.time_s).sum::<f64>() / count;
        } else {
            summary.mean_final_f = f64::NAN;
            summary.mean_final_resid = f64::NAN;
            summary.mean_time_s = f64::NAN;
        }
    }

    let summary = ExperimentSummary { spec: plan.spec.clone(), solvers: summaries };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    let mut file = std::fs::File::create(out_dir.join("summary.json"))?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(summary)
}

fn write_record_csv(
    out_dir: &Path,
    trial: usize,
    solver: &str,
    record: &RunRecord,
) -> Result<(), ExperimentError> {
    let path = out_dir.join(format!("trial{trial:03}_{solver}.csv"));
    let mut wtr = csv::Writer::from_path(path).map_err(io_from_csv)?;
    for row in &record.rows {
        wtr.serialize(row).map_err(io_from_csv)?;
    }
    wtr.flush()?;
    Ok(())
}

fn write_error_csv(
    out_dir: &Path,
    trial: usize,
    solver: &str,
    errors: &[f64],
) -> Result<(), ExperimentError> {
    let path = out_dir.join(format!("trial{trial:03}_{solver}_errors.csv"));
    let mut wtr = csv::Writer::from_path(path).map_err(io_from_csv)?;
    wtr.write_record(["k", "error"]).map_err(io_from_csv)?;
    for (k, e) in errors.iter().enumerate() {
        wtr.write_record(&[k.to_string(), format!("{e:?}")])
            .map_err(io_from_csv)?;
    }
    wtr.flush()?;
    Ok(())
}

fn io_from_csv(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(std::io::Error::other(e))
}
