//! Command line harness for the solver library: seeded instance generation,
//! experiment orchestration with CSV/JSON artifacts, and single-run
//! convergence diagnostics.
//!
//! Settings resolve in three layers: the family's desk defaults, then the
//! command line flags, then the optional TOML config file, which overrides
//! both. The process exits 0 only when every requested solve converged.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use proxnewt::experiments::trial_seed;
use proxnewt::{
    diagnose, generate, pg_baseline, run_experiment, solve, ExperimentSpec, Family, Instance,
    RunPlan, SolverConfig, SolverKind, Stationarity,
};

#[derive(Parser)]
#[command(name = "proxnewt", version, about = "Proximal Newton solver benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate instances and write the signals, data, and resolved spec.
    Gen(SpecArgs),
    /// Solve every trial with the requested solvers and write traces,
    /// error curves, and a summary.
    Run(RunArgs),
    /// Solve one trial and print its convergence report as JSON.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    L1StudentT,
    GroupStudentT,
    ImageRestore,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::L1StudentT => Family::L1StudentT,
            FamilyArg::GroupStudentT => Family::GroupStudentT,
            FamilyArg::ImageRestore => Family::ImageRestore,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Irpnm,
    Pg,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> SolverKind {
        match s {
            SolverArg::Irpnm => SolverKind::Irpnm,
            SolverArg::Pg => SolverKind::Pg,
        }
    }
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Experiment family.
    #[arg(long, value_enum, default_value_t = FamilyArg::L1StudentT)]
    family: FamilyArg,
    /// Signal length (pixel count for images).
    #[arg(long)]
    n: Option<usize>,
    /// Measurement count.
    #[arg(long)]
    m: Option<usize>,
    /// Dynamic range of the spike magnitudes, in dB.
    #[arg(long)]
    d: Option<f64>,
    /// Penalty weight relative to the gradient norm of the fit at zero.
    #[arg(long)]
    c_lambda: Option<f64>,
    /// Residual exponent of the Tikhonov weight.
    #[arg(long)]
    rho: Option<f64>,
    /// Stationarity target; defaults to 1e-5, or 1e-4 for images.
    #[arg(long)]
    eps0: Option<f64>,
    /// Number of independently generated trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; each trial derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// TOML file whose entries override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Solvers to run; repeat the flag to run several.
    #[arg(long, value_enum, default_values_t = [SolverArg::Irpnm])]
    solver: Vec<SolverArg>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Solver to diagnose.
    #[arg(long, value_enum, default_value_t = SolverArg::Irpnm)]
    solver: SolverArg,
    /// Trial index to solve.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

/// Entries a config file may set; every field overrides the matching flag or
/// desk default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    family: Option<Family>,
    n: Option<usize>,
    m: Option<usize>,
    s: Option<usize>,
    d: Option<f64>,
    nu: Option<f64>,
    lambda: Option<f64>,
    c_lambda: Option<f64>,
    noise_dof: Option<f64>,
    noise_scale: Option<f64>,
    group_size: Option<usize>,
    side: Option<usize>,
    levels: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    solver: Option<Vec<SolverKind>>,
    eps0: Option<f64>,
    a1: Option<f64>,
    a2: Option<f64>,
    rho: Option<f64>,
    tau: Option<f64>,
    eta: Option<f64>,
    beta: Option<f64>,
    sigma_ls: Option<f64>,
    max_outer: Option<usize>,
    max_inner: Option<usize>,
}

struct Resolved {
    spec: ExperimentSpec,
    config: SolverConfig,
    solvers: Vec<SolverKind>,
    out_dir: PathBuf,
}

fn resolve(args: &SpecArgs, solver_flags: &[SolverArg]) -> Result<Resolved, String> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let family = file.family.unwrap_or_else(|| args.family.into());
    let mut spec = match family {
        Family::L1StudentT => ExperimentSpec::l1_desk(),
        Family::GroupStudentT => ExperimentSpec::group_desk(),
        Family::ImageRestore => ExperimentSpec::image_desk(),
    };

    // Flags over desk defaults.
    if let Some(v) = args.n {
        spec.n = v;
    }
    if let Some(v) = args.m {
        spec.m = v;
    }
    if let Some(v) = args.d {
        spec.d = v;
    }
    if let Some(v) = args.c_lambda {
        spec.c_lambda = v;
    }
    if let Some(v) = args.trials {
        spec.trials = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }

    // File over flags.
    if let Some(v) = file.n {
        spec.n = v;
    }
    if let Some(v) = file.m {
        spec.m = v;
    }
    if let Some(v) = file.s {
        spec.s = Some(v);
    }
    if let Some(v) = file.d {
        spec.d = v;
    }
    if let Some(v) = file.nu {
        spec.nu = v;
    }
    if let Some(v) = file.lambda {
        spec.lambda = Some(v);
    }
    if let Some(v) = file.c_lambda {
        spec.c_lambda = v;
    }
    if let Some(v) = file.noise_dof {
        spec.noise_dof = v;
    }
    if let Some(v) = file.noise_scale {
        spec.noise_scale = v;
    }
    if let Some(v) = file.group_size {
        spec.group_size = v;
    }
    if let Some(v) = file.side {
        spec.side = v;
    }
    if let Some(v) = file.levels {
        spec.levels = v;
    }
    if let Some(v) = file.trials {
        spec.trials = v;
    }
    if let Some(v) = file.seed {
        spec.seed = v;
    }
    spec.validate()?;

    let mut config = spec.default_config();
    if let Some(v) = args.rho {
        config.rho = v;
    }
    if let Some(v) = args.eps0 {
        config.eps0 = v;
    }
    if let Some(v) = file.eps0 {
        config.eps0 = v;
    }
    if let Some(v) = file.a1 {
        config.a1 = v;
    }
    if let Some(v) = file.a2 {
        config.a2 = Some(v);
    }
    if let Some(v) = file.rho {
        config.rho = v;
    }
    if let Some(v) = file.tau {
        config.tau = Some(v);
    }
    if let Some(v) = file.eta {
        config.eta = v;
    }
    if let Some(v) = file.beta {
        config.beta = v;
    }
    if let Some(v) = file.sigma_ls {
        config.sigma_ls = v;
    }
    if let Some(v) = file.max_outer {
        config.max_outer = v;
    }
    if let Some(v) = file.max_inner {
        config.max_inner = v;
    }
    config.seed = spec.seed;

    let solvers = match file.solver {
        Some(list) if !list.is_empty() => list,
        Some(_) => return Err("config lists no solvers".into()),
        None => solver_flags.iter().map(|&s| s.into()).collect(),
    };

    Ok(Resolved {
        spec,
        config,
        solvers,
        out_dir: args.out_dir.clone(),
    })
}

/// Print a line to stdout, exiting quietly if the reader has hung up
/// (for example when the output is piped into `head`).
fn emit_line(line: &str) {
    let mut out = io::stdout().lock();
    let written = out
        .write_all(line.as_bytes())
        .and_then(|()| out.write_all(b"\n"));
    if let Err(e) = written {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed printing to stdout: {e}");
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    w.write_record(header).map_err(|e| e.to_string())?;
    for row in rows {
        w.write_record(&row).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

/// Emit the generated signals and measurements without solving anything.
fn cmd_gen(args: &SpecArgs) -> Result<bool, String> {
    let r = resolve(args, &[])?;
    fs::create_dir_all(&r.out_dir).map_err(|e| e.to_string())?;

    let spec_json = serde_json::to_string_pretty(&r.spec).map_err(|e| e.to_string())?;
    fs::write(r.out_dir.join("spec.json"), spec_json + "\n").map_err(|e| e.to_string())?;

    #[derive(Serialize)]
    struct GenInfo {
        trial: usize,
        lambda: f64,
    }
    let mut infos = Vec::new();
    for trial in 0..r.spec.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(r.spec.seed, trial as u64));
        let inst = generate(&r.spec, &mut rng);
        let signal = r.out_dir.join(format!("trial{trial:03}_signal.csv"));
        write_csv(
            &signal,
            &["i", "x_true", "x_init"],
            (0..inst.x_init.len()).map(|i| {
                let truth = inst
                    .x_true
                    .as_ref()
                    .map(|x| format!("{:?}", x[i]))
                    .unwrap_or_default();
                vec![i.to_string(), truth, format!("{:?}", inst.x_init[i])]
            }),
        )?;
        let data = r.out_dir.join(format!("trial{trial:03}_data.csv"));
        let b = &inst.problem.smooth.b;
        write_csv(
            &data,
            &["i", "b"],
            b.iter()
                .enumerate()
                .map(|(i, v)| vec![i.to_string(), format!("{v:?}")]),
        )?;
        infos.push(GenInfo {
            trial,
            lambda: inst.lambda,
        });
    }
    let gen_json = serde_json::to_string_pretty(&infos).map_err(|e| e.to_string())?;
    fs::write(r.out_dir.join("gen.json"), gen_json + "\n").map_err(|e| e.to_string())?;
    emit_line(&format!(
        "wrote {} trial(s) of {:?} to {}",
        r.spec.trials,
        r.spec.family,
        r.out_dir.display()
    ));
    Ok(true)
}

fn cmd_run(args: &RunArgs) -> Result<bool, String> {
    let r = resolve(&args.spec, &args.solver)?;
    let plan = RunPlan {
        spec: r.spec,
        solvers: r.solvers,
        config: r.config,
    };
    let summary = run_experiment(&plan, &r.out_dir).map_err(|e| e.to_string())?;
    for s in &summary.solvers {
        emit_line(&format!(
            "{}: mean F = {:.6e}, mean r = {:.3e}, mean time = {:.3}s, converged = {}",
            s.solver, s.mean_final_f, s.mean_final_resid, s.mean_time_s, s.all_converged
        ));
    }
    emit_line(&format!("artifacts in {}", r.out_dir.display()));
    Ok(summary.all_converged())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<bool, String> {
    let r = resolve(&args.spec, &[args.solver])?;
    if args.trial >= r.spec.trials {
        return Err(format!(
            "trial {} out of range, spec has {}",
            args.trial, r.spec.trials
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(r.spec.seed, args.trial as u64));
    let inst: Instance = generate(&r.spec, &mut rng);
    let solver: SolverKind = args.solver.into();
    let record = match solver {
        SolverKind::Irpnm => solve(&inst.problem, inst.x_init.clone(), &r.config),
        SolverKind::Pg => pg_baseline(&inst.problem, inst.x_init.clone(), &r.config),
    }
    .map_err(|e| e.to_string())?;
    let report = diagnose(
        &inst.problem,
        &record,
        r.config.eps0,
        proxnewt::diagnostics::ORDER_WINDOW,
        proxnewt::diagnostics::CURVATURE_TOL,
    );

    #[derive(Serialize)]
    struct DiagnoseOut {
        solver: String,
        trial: usize,
        lambda: f64,
        status: String,
        converged: bool,
        iterations: usize,
        final_f: f64,
        final_resid: f64,
        estimated_order: Option<f64>,
        unit_step_tail: Option<usize>,
        stationarity: Stationarity,
    }
    let out = DiagnoseOut {
        solver: solver.as_str().to_string(),
        trial: args.trial,
        lambda: inst.lambda,
        status: format!("{:?}", record.status),
        converged: record.converged(),
        iterations: record.rows.len(),
        final_f: record.final_f,
        final_resid: record.final_resid,
        estimated_order: report.estimated_order,
        unit_step_tail: report.unit_step_tail,
        stationarity: report.stationarity,
    };
    fs::create_dir_all(&args.spec.out_dir).map_err(|e| e.to_string())?;
    let path = args
        .spec
        .out_dir
        .join(format!("trial{:03}_{}_errors.csv", args.trial, solver.as_str()));
    write_csv(
        &path,
        &["k", "error"],
        report
            .errors
            .iter()
            .enumerate()
            .map(|(k, e)| vec![k.to_string(), format!("{e:?}")]),
    )?;
    emit_line(&serde_json::to_string_pretty(&out).map_err(|e| e.to_string())?);
    Ok(record.converged())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Diagnose(args) => cmd_diagnose(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("not all requested solves converged");
            ExitCode::FAILURE
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
