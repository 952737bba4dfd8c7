//! Shared fixtures for the operator and solver micro-benchmarks: seeded
//! instances at the sizes the benches exercise, plus the model state the
//! matrix-vector benchmarks apply.

use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use proxnewt::experiments::trial_seed;
use proxnewt::{build_model, generate, ExperimentSpec, Instance, ModelParams, ModelState};

/// Sparse-recovery instance of the requested size, deterministic in `seed`.
pub fn sparse_instance(n: usize, m: usize, seed: u64) -> Instance {
    let mut spec = ExperimentSpec::l1_desk();
    spec.n = n;
    spec.m = m;
    spec.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 0));
    generate(&spec, &mut rng)
}

/// The bundled 64x64 image restoration instance.
pub fn image_instance(seed: u64) -> Instance {
    let spec = ExperimentSpec::image_desk();
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 0));
    generate(&spec, &mut rng)
}

/// Second-order model anchored at the instance's start point.
pub fn model_at_start(inst: &Instance) -> ModelState {
    let params = ModelParams {
        a1: 1.0,
        a2: 1e-4,
        rho: 0.45,
    };
    build_model(
        &inst.problem,
        &params,
        inst.problem.eval_point(inst.x_init.clone()),
    )
}

/// Standard normal vector, deterministic in `seed`.
pub fn randn(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(rand_distr::StandardNormal))
}
