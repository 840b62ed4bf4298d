//! Command line front end: generate shapes, run the arrival-time solvers,
//! analyze singular sets, compute surface metrics, and run perturbation
//! experiments.
//!
//! Exit codes: 0 success, 1 numerical/analysis failure, 2 bad usage or
//! configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lsflab::error::LsfError;
use lsflab::grid::{ScalarField, UniformGrid};
use lsflab::io;
use lsflab::metrics;
use lsflab::shapes::{self, PerturbMode, ShapeSpec};
use lsflab::singular;
use lsflab::solver::{self, SolveConfig};
use lsflab::stability::{ExperimentPlan, regular_interval_check};

#[derive(Parser)]
#[command(name = "lsflab", version, about = "level set flow laboratory")]
struct Cli {
    /// RNG seed for all stochastic sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: LSFLAB_THREADS or all cores). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the arrival time of a shape under the flow.
    Solve(SolveArgs),
    /// Detect and classify the singular set of an arrival time field.
    Analyze(AnalyzeArgs),
    /// Surface metrics (area, curvatures, entropy, noncollapsing) of a
    /// shape or field.
    Metrics(MetricsArgs),
    /// Perturbation stability experiment over an amplitude ladder.
    Perturb(PerturbArgs),
}

#[derive(Args)]
struct ShapeInput {
    /// Built-in preset name (see README for the list).
    #[arg(long, conflicts_with_all = ["shape_file", "field"])]
    preset: Option<String>,
    /// Preset-format key=value file describing a shape.
    #[arg(long, conflicts_with = "field")]
    shape_file: Option<PathBuf>,
    /// Pre-built field in lsf1 format.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Grid spacing for generated shapes.
    #[arg(long, default_value_t = 1.0 / 16.0)]
    h: f64,
}

impl ShapeInput {
    fn load(&self) -> Result<(ScalarField, Option<ShapeSpec>), LsfError> {
        if let Some(path) = &self.field {
            return Ok((io::read_lsf1_file(path)?, None));
        }
        let spec = if let Some(name) = &self.preset {
            shapes::preset(name)?
        } else if let Some(path) = &self.shape_file {
            ShapeSpec::from_preset_text(&std::fs::read_to_string(path)?)?
        } else {
            return Err(LsfError::Config(
                "one of --preset, --shape-file, --field is required".into(),
            ));
        };
        let r = spec.bounding_radius()?;
        let half = r + (8.0 * self.h).max(0.3);
        let grid = UniformGrid::centered([half, half, half], self.h)?;
        let field = shapes::generate_sdf(&spec, &grid)?;
        Ok((field, Some(spec)))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Parabolic,
    Elliptic,
    Both,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    shape: ShapeInput,
    #[arg(long, value_enum, default_value = "parabolic")]
    method: MethodArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated snapshot times (parabolic only).
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    #[arg(long, default_value_t = 0.45)]
    cfl: f64,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-5)]
    residual_tol: f64,
    #[arg(long, default_value_t = 20)]
    reinit_every: usize,
    #[arg(long, default_value_t = 2_000_000)]
    max_steps: usize,
    /// Compare the two level sets over a regular time window [a,b]
    /// when both methods run (format "a,b").
    #[arg(long, value_delimiter = ',', num_args = 2)]
    compare_window: Option<Vec<f64>>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Arrival time field in lsf1 format.
    #[arg(long)]
    field: PathBuf,
    /// Ignore arrival times below this when hunting critical points
    /// (default: max(2h^2, 2% of the extinction time)).
    #[arg(long)]
    t_floor: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Cone half-angle (degrees) for the containment check at cylindrical
    /// points.
    #[arg(long, default_value_t = 30.0)]
    cone_angle: f64,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    shape: ShapeInput,
    /// Number of surface samples.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    NormalBump,
    LowFrequencyWobble,
}

#[derive(Args)]
struct PerturbArgs {
    /// Base shape preset.
    #[arg(long)]
    preset: String,
    #[arg(long, value_enum, default_value = "normal-bump")]
    mode: ModeArg,
    /// Strictly decreasing amplitude ladder, e.g. 0.04,0.02,0.01,0.
    #[arg(long, value_delimiter = ',', required = true)]
    amplitudes: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    frequency: u32,
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    #[arg(long, default_value_t = 1.0 / 16.0)]
    h: f64,
    /// Exclusion radius around the base singular set (> 4h).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    t_floor: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    seed: u64,
    threads: usize,
    grid_dims: [usize; 3],
    h: f64,
    outputs: Vec<String>,
    diagnostics: BTreeMap<String, f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("LSFLAB_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(n) = threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("warning: thread pool already initialized");
        }
    }
    let threads = rayon::current_num_threads();
    match run(cli, threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                LsfError::Config(_) | LsfError::Format(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LsfError> {
    let s = serde_json::to_string_pretty(value)
        .map_err(|e| LsfError::Format(format!("json: {e}")))?;
    std::fs::write(path, s)?;
    Ok(())
}

fn run(cli: Cli, threads: usize) -> Result<(), LsfError> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args, cli.seed, threads),
        Command::Analyze(args) => cmd_analyze(args, cli.seed, threads),
        Command::Metrics(args) => cmd_metrics(args, cli.seed),
        Command::Perturb(args) => cmd_perturb(args, cli.seed, threads),
    }
}

fn cmd_solve(args: SolveArgs, seed: u64, threads: usize) -> Result<(), LsfError> {
    let (initial, _spec) = args.shape.load()?;
    std::fs::create_dir_all(&args.out)?;
    let mut config = SolveConfig {
        cfl: args.cfl,
        residual_tol: args.residual_tol,
        reinit_every: args.reinit_every,
        max_steps: args.max_steps,
        snapshot_times: args.snapshots.clone(),
        ..SolveConfig::default()
    };
    if let Some(eps) = args.eps {
        config.epsilon_schedule = eps;
    }
    let mut outputs = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let mut failure: Option<String> = None;

    io::write_lsf1_file(&initial, &args.out.join("initial.lsf1"))?;
    outputs.push("initial.lsf1".into());

    let run_parabolic = matches!(args.method, MethodArg::Parabolic | MethodArg::Both);
    let run_elliptic = matches!(args.method, MethodArg::Elliptic | MethodArg::Both);
    let mut u_parabolic = None;
    let mut u_elliptic = None;

    if run_parabolic {
        let res = solver::solve_parabolic(&initial, &config)?;
        io::write_lsf1_file(&res.u, &args.out.join("u_parabolic.lsf1"))?;
        outputs.push("u_parabolic.lsf1".into());
        for (k, v) in &res.diagnostics {
            diagnostics.insert(format!("parabolic.{k}"), *v);
        }
        diagnostics.insert("parabolic.extinction_time".into(), res.extinction_time);
        println!("parabolic: T_ext = {:.6}", res.extinction_time);
        if !res.snapshots.is_empty() {
            let series = solver::snapshot_entropy_series(&res);
            let mut csv = String::from("t,entropy\n");
            for (t, e) in &series {
                csv.push_str(&format!("{t:.9e},{e:.9e}\n"));
            }
            std::fs::write(args.out.join("entropy_series.csv"), csv)?;
            outputs.push("entropy_series.csv".into());
            for (i, (t, field)) in res.snapshots.iter().enumerate() {
                let name = format!("snapshot_{i:02}.lsf1");
                io::write_lsf1_file(field, &args.out.join(&name))?;
                diagnostics.insert(format!("parabolic.snapshot_{i:02}_t"), *t);
                outputs.push(name);
            }
        }
        failure = failure.or(res.failure.clone());
        u_parabolic = Some(res);
    }
    if run_elliptic {
        let res = solver::solve_elliptic(&initial, &config)?;
        io::write_lsf1_file(&res.u, &args.out.join("u_elliptic.lsf1"))?;
        outputs.push("u_elliptic.lsf1".into());
        for (k, v) in &res.diagnostics {
            diagnostics.insert(format!("elliptic.{k}"), *v);
        }
        diagnostics.insert("elliptic.extinction_time".into(), res.extinction_time);
        println!("elliptic: T_ext = {:.6}", res.extinction_time);
        failure = failure.or(res.failure.clone());
        u_elliptic = Some(res);
    }
    if let (Some(up), Some(ue)) = (&u_parabolic, &u_elliptic) {
        let gap = up
            .u
            .values
            .iter()
            .zip(ue.u.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            ;
        diagnostics.insert("cross_method_sup_gap".into(), gap);
        println!("cross-method sup gap = {gap:.6}");
        if let Some(w) = &args.compare_window {
            let d = regular_interval_check(&up.u, &ue.u, w[0], w[1], &[])?;
            diagnostics.insert("cross_method_hausdorff".into(), d);
            println!("level-set Hausdorff over [{}, {}] = {d:.6}", w[0], w[1]);
        }
    }

    let manifest = RunManifest {
        command: "solve".into(),
        seed,
        threads,
        grid_dims: initial.grid.dims,
        h: initial.grid.h,
        outputs,
        diagnostics,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    if let Some(f) = failure {
        return Err(LsfError::Numerical(f));
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs, seed: u64, threads: usize) -> Result<(), LsfError> {
    let u = io::read_lsf1_file(&args.field)?;
    let t_ext = u.values.iter().cloned().fold(0.0, f64::max);
    if t_ext <= 0.0 {
        return Err(LsfError::Config("field has no positive arrival times".into()));
    }
    // low enough to keep early neck pinches, high enough to clear the
    // exterior plateau
    let t_floor = args.t_floor.unwrap_or((2.0 * u.grid.h * u.grid.h).max(0.02 * t_ext));
    std::fs::create_dir_all(&args.out)?;
    let report = singular::analyze(&u, t_floor, seed)?;
    let set = singular::detect_critical_set(&u, t_floor)?;

    let mut csv = String::from("x,y,z,time,grad_norm,class,ev0,ev1,ev2\n");
    for comp in &report.components {
        for p in &comp.points {
            csv.push_str(&format!(
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.3e},{:?},{:.4},{:.4},{:.4}\n",
                p.position[0], p.position[1], p.position[2], p.time, p.grad_norm,
                p.class, p.eigenvalues[0], p.eigenvalues[1], p.eigenvalues[2],
            ));
        }
    }
    std::fs::write(args.out.join("critical_points.csv"), csv)?;

    #[derive(Serialize)]
    struct ConeRow {
        position: [f64; 3],
        contained: bool,
    }
    let mut cone_rows = Vec::new();
    let phi = args.cone_angle.to_radians();
    for comp in &report.components {
        for p in &comp.points {
            if p.class == singular::HessianClass::Cylindrical {
                let scale = singular::cylindrical_scale_estimate(&u, p, 0.2)?;
                if scale > 0.0 {
                    let ok = singular::cone_containment(&u, &set, p, phi, 3.0 * scale)?;
                    cone_rows.push(ConeRow { position: p.position, contained: ok });
                }
            }
        }
    }

    #[derive(Serialize)]
    struct AnalyzeOut<'a> {
        extinction_time: f64,
        report: &'a singular::SingularReport,
        cone_checks: Vec<ConeRow>,
        threads: usize,
        seed: u64,
    }
    write_json(
        &args.out.join("singular.json"),
        &AnalyzeOut { extinction_time: t_ext, report: &report, cone_checks: cone_rows, threads, seed },
    )?;
    for (i, comp) in report.components.iter().enumerate() {
        println!(
            "component {i}: {:?} {:?} t_hat={:.5} spread={:.2e} points={}",
            comp.geometry, comp.sing_type, comp.singular_time, comp.time_spread,
            comp.points.len(),
        );
    }
    if report.components.is_empty() {
        println!("no singular components above t_floor = {t_floor}");
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs, _seed: u64) -> Result<(), LsfError> {
    let (field, _) = args.shape.load()?;
    let samples = shapes::surface_samples(&field, args.samples)?;
    let report = metrics::compute_metrics(&field, &samples)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| LsfError::Format(format!("json: {e}")))?;
    match args.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_perturb(args: PerturbArgs, seed: u64, threads: usize) -> Result<(), LsfError> {
    let shape = shapes::preset(&args.preset)?;
    let plan = ExperimentPlan {
        shape,
        mode: match args.mode {
            ModeArg::NormalBump => PerturbMode::NormalBump,
            ModeArg::LowFrequencyWobble => PerturbMode::LowFrequencyWobble,
        },
        frequency: args.frequency,
        phase: args.phase,
        amplitudes: args.amplitudes,
        h: args.h,
        delta: args.delta.unwrap_or(6.0 * args.h),
        t_floor: args.t_floor.unwrap_or(2.0 * args.h * args.h),
        seed,
        solve: SolveConfig::default(),
    };
    std::fs::create_dir_all(&args.out)?;
    let report = lsflab::stability::run_experiment(&plan)?;
    std::fs::write(args.out.join("stability.csv"), report.to_csv())?;
    write_json(&args.out.join("stability.json"), &report)?;
    let manifest = RunManifest {
        command: "perturb".into(),
        seed,
        threads,
        grid_dims: plan.grid()?.dims,
        h: plan.h,
        outputs: vec!["stability.csv".into(), "stability.json".into()],
        diagnostics: BTreeMap::new(),
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    for row in &report.rows {
        println!(
            "amplitude {:.4}: sup_u_gap {:.5} extinction_gap {:.5}",
            row.amplitude, row.sup_u_gap, row.extinction_gap
        );
    }
    Ok(())
}
