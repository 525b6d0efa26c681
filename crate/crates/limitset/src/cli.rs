//! Command-line front end.
//!
//! Subcommands: `simulate` (CSV trajectory), `omega` (limit-set estimate),
//! `invariance` (positive/negative test), `check-thm1`, `check-thm2`,
//! `sweep-weak-attractor`, and `examples`. Reports are JSON documents that
//! echo the fully resolved parameter set; identical inputs produce
//! byte-identical reports.
//!
//! Exit codes: 0 success/PASS, 1 input error, 2 usage error, 3 FAIL verdict,
//! 4 INCONCLUSIVE.

use crate::certify::{
    check_theorem1, check_theorem2, lie_signal, weak_attractor_sweep, LieSignal, SweepParams,
    SweepSummary, Thm1Params, Thm1Report, Thm2Params, Thm2Report,
};
use crate::expr::Expression;
use crate::invariance::{test_negative_invariance, test_positive_invariance, InvarianceReport};
use crate::odeint::{integrate, IntegratorConfig, Termination, Trajectory};
use crate::omega::{estimate_omega, OmegaEstimate, OmegaParams};
use crate::system::{builtins, resolve, SystemSpec};
use crate::vecmath::linspace;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;
use std::sync::OnceLock;

/// Run the CLI against an argument list (the first item is the program
/// name). Returns the process exit code.
pub fn run(args: impl IntoIterator<Item = String>) -> i32 {
    init_thread_pool();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

/// `LIMITSET_THREADS` caps worker parallelism (0 or unset = automatic).
fn init_thread_pool() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        if let Ok(value) = std::env::var("LIMITSET_THREADS") {
            if let Ok(threads) = value.trim().parse::<usize>() {
                if threads > 0 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build_global();
                }
            }
        }
    });
}

#[derive(Parser)]
#[command(
    name = "limitset",
    about = "Estimate omega-limit sets of ODE systems and check invariance certificates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system and dump the trajectory as CSV.
    Simulate(SimulateArgs),
    /// Estimate the omega-limit set of an initial state.
    Omega(OmegaArgs),
    /// Test a named region for positive or negative invariance.
    Invariance(InvarianceArgs),
    /// Run the invariant-set location certificate (nonvanishing Lie
    /// derivative off a negatively invariant set).
    CheckThm1(Thm1Args),
    /// Check that every bounded trajectory's limit set meets {∇V·f = 0}.
    CheckThm2(Thm2Args),
    /// Run the limit-set/{∇V·f = 0} intersection check over a grid.
    SweepWeakAttractor(SweepArgs),
    /// Trace the Lie-derivative signal p(t) = ∇V·f along one trajectory.
    LieSignal(LieSignalArgs),
    /// List the built-in example systems.
    Examples,
}

#[derive(Args)]
struct CommonArgs {
    /// System spec: a JSON file path or a built-in name (see `examples`).
    #[arg(long)]
    system: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IntegratorArgs {
    /// Integration horizon.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// State norm that counts as finite-time escape.
    #[arg(long)]
    blowup_norm: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

impl IntegratorArgs {
    fn apply(&self, mut config: IntegratorConfig) -> IntegratorConfig {
        if let Some(v) = self.t_end {
            config.t_end = v;
        }
        if let Some(v) = self.rel_tol {
            config.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            config.abs_tol = v;
        }
        if let Some(v) = self.blowup_norm {
            config.blowup_norm = v;
        }
        if let Some(v) = self.max_steps {
            config.max_steps = v;
        }
        config
    }
}

#[derive(Args)]
struct OmegaTuning {
    /// Fraction of the horizon used as the sampling tail.
    #[arg(long)]
    tail_fraction: Option<f64>,
    /// Number of tail samples.
    #[arg(long)]
    omega_samples: Option<usize>,
    /// Cluster scale for the representatives.
    #[arg(long)]
    cluster_eps: Option<f64>,
}

impl OmegaTuning {
    fn apply(&self, mut params: OmegaParams) -> OmegaParams {
        if let Some(v) = self.tail_fraction {
            params.tail_fraction = v;
        }
        if let Some(v) = self.omega_samples {
            params.sample_count = v;
        }
        if let Some(v) = self.cluster_eps {
            params.cluster_eps = v;
        }
        params
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial state, comma-separated: `--x0 3,4`.
    #[arg(long, value_parser = parse_point)]
    x0: Vec<f64>,
    #[command(flatten)]
    integrator: IntegratorArgs,
}

#[derive(Args)]
struct OmegaArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_point)]
    x0: Vec<f64>,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[command(flatten)]
    omega: OmegaTuning,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Positive,
    Negative,
}

#[derive(Args)]
struct InvarianceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Region name from the system spec.
    #[arg(long)]
    region: String,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 40)]
    sample_count: usize,
    /// Forward horizon per sample (negative mode defaults shorter: entry
    /// evidence decays toward attracting sets).
    #[arg(long)]
    horizon: Option<f64>,
    /// Allowed membership excess in positive mode; `None` derives
    /// max(2·region.tol, 1e-4).
    #[arg(long)]
    escape_tol: Option<f64>,
    /// Required clearance of outside samples in negative mode.
    #[arg(long, default_value_t = 1e-2)]
    entry_tol: f64,
}

#[derive(Args)]
struct Thm1Args {
    #[command(flatten)]
    common: CommonArgs,
    /// Positively invariant compact region (name from the spec).
    #[arg(long)]
    omega_region: String,
    /// Candidate negatively invariant region (name from the spec).
    #[arg(long)]
    a_region: String,
    /// Override the system's V expression.
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    initial_count: Option<usize>,
    #[arg(long)]
    incl_tol: Option<f64>,
    #[arg(long)]
    eps_margin: Option<f64>,
    #[arg(long)]
    sample_resolution: Option<usize>,
    #[command(flatten)]
    omega: OmegaTuning,
}

#[derive(Args)]
struct Thm2Args {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial states; repeatable: `--x0 3,4 --x0 0,1`.
    #[arg(long, value_parser = parse_point, required = true)]
    x0: Vec<Vec<f64>>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Boundedness bound on the trajectory norm.
    #[arg(long)]
    bound: Option<f64>,
    /// Intersection threshold on normalized |∇V·f|.
    #[arg(long)]
    s_tol: Option<f64>,
    /// Optional reachability grid `NxM` over the system box.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<Vec<usize>>,
    #[command(flatten)]
    omega: OmegaTuning,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid shape, e.g. `5x5`.
    #[arg(long, value_parser = parse_grid)]
    grid: Vec<usize>,
    /// Grid box as flat min,max pairs, e.g. `-2,2,-2,2`; defaults to the
    /// system box.
    #[arg(long, value_parser = parse_box)]
    grid_box: Option<Vec<[f64; 2]>>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    s_tol: Option<f64>,
    /// Random jitter of grid points, as a fraction of the cell size.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Seed for the jitter; fixed by default so runs are reproducible.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    omega: OmegaTuning,
}

#[derive(Args)]
struct LieSignalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_point)]
    x0: Vec<f64>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long, default_value_t = 1000)]
    probes: usize,
    /// Probes with |p| at or below this are sign-free.
    #[arg(long, default_value_t = 1e-9)]
    threshold: f64,
    #[command(flatten)]
    integrator: IntegratorArgs,
}

fn parse_point(text: &str) -> Result<Vec<f64>, String> {
    let values: Result<Vec<f64>, _> = text
        .split(',')
        .map(|part| part.trim().parse::<f64>())
        .collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("`{text}` is not a comma-separated list of numbers")),
    }
}

fn parse_grid(text: &str) -> Result<Vec<usize>, String> {
    let counts: Result<Vec<usize>, _> = text
        .split('x')
        .map(|part| part.trim().parse::<usize>())
        .collect();
    match counts {
        Ok(c) if !c.is_empty() && c.iter().all(|&n| n >= 2) => Ok(c),
        _ => Err(format!("`{text}` is not a grid shape like 5x5")),
    }
}

fn parse_box(text: &str) -> Result<Vec<[f64; 2]>, String> {
    let flat = parse_point(text)?;
    if flat.len() % 2 != 0 {
        return Err("box needs an even number of values (min,max per axis)".into());
    }
    Ok(flat.chunks(2).map(|c| [c[0], c[1]]).collect())
}

fn dispatch(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Omega(args) => omega(args),
        Command::Invariance(args) => invariance(args),
        Command::CheckThm1(args) => check_thm1(args),
        Command::CheckThm2(args) => check_thm2(args),
        Command::SweepWeakAttractor(args) => sweep(args),
        Command::LieSignal(args) => lie_signal_cmd(args),
        Command::Examples => examples(),
    }
}

fn load(common: &CommonArgs) -> Result<SystemSpec, String> {
    resolve(&common.system).map_err(|e| e.to_string())
}

fn resolve_v(system: &SystemSpec, flag: &Option<String>) -> Result<Expression, String> {
    match flag {
        Some(text) => Expression::parse(text, system.dimension())
            .map_err(|e| format!("--v: {e}")),
        None => system
            .v()
            .cloned()
            .ok_or_else(|| format!("system `{}` declares no V; pass --v", system.name())),
    }
}

fn write_output(common: &CommonArgs, content: &str) -> Result<(), String> {
    match &common.out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write `{}`: {e}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_report<T: Serialize>(common: &CommonArgs, report: &T) -> Result<(), String> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    json.push('\n');
    write_output(common, &json)
}

fn check_dimension(system: &SystemSpec, x0: &[f64]) -> Result<(), String> {
    if x0.len() != system.dimension() {
        return Err(format!(
            "--x0 has {} components but `{}` is {}-dimensional",
            x0.len(),
            system.name(),
            system.dimension()
        ));
    }
    Ok(())
}

fn run_trajectory(
    system: &SystemSpec,
    x0: &[f64],
    integrator: &IntegratorArgs,
) -> Result<Trajectory, String> {
    let config = integrator.apply(system.config());
    integrate(system.field(), x0, &config).map_err(|e| e.to_string())
}

fn simulate(args: SimulateArgs) -> Result<i32, String> {
    let system = load(&args.common)?;
    check_dimension(&system, &args.x0)?;
    let traj = run_trajectory(&system, &args.x0, &args.integrator)?;
    match traj.termination() {
        Termination::Horizon => {}
        Termination::Blowup { t } => eprintln!("note: trajectory blew up near t = {t}"),
        Termination::StepUnderflow { t } => {
            eprintln!("note: integration stalled at t = {t} (step underflow)")
        }
    }
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|e| e.to_string())?;
    write_output(
        &args.common,
        std::str::from_utf8(&csv).expect("csv is ascii"),
    )?;
    Ok(0)
}

/// `omega` report: the estimate plus the resolved parameters.
#[derive(Serialize)]
struct OmegaReport {
    system: String,
    x0: Vec<f64>,
    #[serde(flatten)]
    estimate: OmegaEstimate,
    termination: Termination,
    params: OmegaReportParams,
}

#[derive(Serialize)]
struct OmegaReportParams {
    #[serde(flatten)]
    omega: OmegaParams,
    integrator: IntegratorConfig,
}

fn omega(args: OmegaArgs) -> Result<i32, String> {
    let system = load(&args.common)?;
    check_dimension(&system, &args.x0)?;
    let config = args.integrator.apply(system.config());
    let traj = integrate(system.field(), &args.x0, &config).map_err(|e| e.to_string())?;
    let params = args.omega.apply(OmegaParams::default());
    let estimate = estimate_omega(&traj, &params).map_err(|e| e.to_string())?;
    let settled = estimate.settled;
    let report = OmegaReport {
        system: system.name().to_string(),
        x0: args.x0.clone(),
        estimate,
        termination: traj.termination(),
        params: OmegaReportParams {
            omega: params,
            integrator: config,
        },
    };
    write_report(&args.common, &report)?;
    Ok(if settled { 0 } else { 4 })
}

#[derive(Serialize)]
struct InvarianceCliReport {
    system: String,
    region: String,
    #[serde(flatten)]
    report: InvarianceReport,
}

fn invariance(args: InvarianceArgs) -> Result<i32, String> {
    let system = load(&args.common)?;
    let region = system.region(&args.region).map_err(|e| e.to_string())?;
    let report = match args.mode {
        Mode::Positive => {
            let escape_tol = args
                .escape_tol
                .unwrap_or_else(|| (2.0 * region.tol()).max(1e-4));
            let horizon = args.horizon.unwrap_or(20.0);
            test_positive_invariance(
                region,
                system.field(),
                args.sample_count,
                horizon,
                escape_tol,
            )
            .map_err(|e| e.to_string())?
        }
        Mode::Negative => {
            let horizon = args.horizon.unwrap_or(5.0);
            test_negative_invariance(
                region,
                system.field(),
                args.sample_count,
                horizon,
                args.entry_tol,
            )
            .map_err(|e| e.to_string())?
        }
    };
    let verdict = report.verdict;
    let wrapped = InvarianceCliReport {
        system: system.name().to_string(),
        region: args.region.clone(),
        report,
    };
    write_report(&args.common, &wrapped)?;
    Ok(verdict.exit_code())
}

#[derive(Serialize)]
struct Thm1CliReport {
    system: String,
    omega_region: String,
    a_region: String,
    v: String,
    #[serde(flatten)]
    report: Thm1Report,
}

fn check_thm1(args: Thm1Args) -> Result<i32, String> {
    let system = load(&args.common)?;
    let omega_region = system.region(&args.omega_region).map_err(|e| e.to_string())?;
    let a_region = system.region(&args.a_region).map_err(|e| e.to_string())?;
    let v = resolve_v(&system, &args.v)?;
    let mut params = Thm1Params {
        omega: args.omega.apply(OmegaParams::default()),
        ..Default::default()
    };
    if let Some(t) = args.t_end {
        params.t_end = t;
    }
    if let Some(n) = args.initial_count {
        params.initial_count = n;
    }
    if let Some(tol) = args.incl_tol {
        params.incl_tol = tol;
    }
    if let Some(eps) = args.eps_margin {
        params.eps_margin = eps;
    }
    if let Some(res) = args.sample_resolution {
        params.sample_resolution = res;
    }
    let report = check_theorem1(system.field(), &v, omega_region, a_region, &params)
        .map_err(|e| e.to_string())?;
    let verdict = report.overall;
    let wrapped = Thm1CliReport {
        system: system.name().to_string(),
        omega_region: args.omega_region.clone(),
        a_region: args.a_region.clone(),
        v: format!("{v}"),
        report,
    };
    write_report(&args.common, &wrapped)?;
    Ok(verdict.exit_code())
}

#[derive(Serialize)]
struct Thm2CliReport {
    system: String,
    v: String,
    #[serde(flatten)]
    report: Thm2Report,
}

fn check_thm2(args: Thm2Args) -> Result<i32, String> {
    let system = load(&args.common)?;
    for x0 in &args.x0 {
        check_dimension(&system, x0)?;
    }
    let v = resolve_v(&system, &args.v)?;
    let mut params = Thm2Params {
        omega: args.omega.apply(OmegaParams::default()),
        s_box: system.bounding_box().map(|b| b.to_vec()),
        ..Default::default()
    };
    if let Some(t) = args.t_end {
        params.t_end = t;
    }
    if let Some(b) = args.bound {
        params.bound = b;
    }
    if let Some(s) = args.s_tol {
        params.s_tol = s;
    }
    if let Some(counts) = &args.grid {
        let bounds = system
            .bounding_box()
            .ok_or("--grid needs a bounding box in the system spec")?;
        params.reach_grid = Some(build_grid(counts, bounds, 0.0, 42)?);
    }
    let report =
        check_theorem2(system.field(), &v, &args.x0, &params).map_err(|e| e.to_string())?;
    let verdict = report.overall;
    let wrapped = Thm2CliReport {
        system: system.name().to_string(),
        v: format!("{v}"),
        report,
    };
    write_report(&args.common, &wrapped)?;
    Ok(verdict.exit_code())
}

#[derive(Serialize)]
struct SweepCliReport {
    system: String,
    v: String,
    grid: Vec<usize>,
    grid_box: Vec<[f64; 2]>,
    jitter: f64,
    seed: u64,
    #[serde(flatten)]
    summary: SweepSummary,
}

fn sweep(args: SweepArgs) -> Result<i32, String> {
    let system = load(&args.common)?;
    let v = resolve_v(&system, &args.v)?;
    let bounds = match &args.grid_box {
        Some(b) => b.clone(),
        None => system
            .bounding_box()
            .ok_or("no --grid-box given and the system spec has no box")?
            .to_vec(),
    };
    if bounds.len() != system.dimension() {
        return Err(format!(
            "grid box has {} axes but the system is {}-dimensional",
            bounds.len(),
            system.dimension()
        ));
    }
    if args.grid.len() != system.dimension() {
        return Err(format!(
            "grid shape has {} axes but the system is {}-dimensional",
            args.grid.len(),
            system.dimension()
        ));
    }
    let grid = build_grid(&args.grid, &bounds, args.jitter, args.seed)?;
    let mut params = SweepParams {
        omega: args.omega.apply(OmegaParams::default()),
        s_box: Some(bounds.clone()),
        ..Default::default()
    };
    if let Some(t) = args.t_end {
        params.t_end = t;
    }
    if let Some(s) = args.s_tol {
        params.s_tol = s;
    }
    let summary =
        weak_attractor_sweep(system.field(), &v, &grid, &params).map_err(|e| e.to_string())?;
    let verdict = summary.verdict;
    let wrapped = SweepCliReport {
        system: system.name().to_string(),
        v: format!("{v}"),
        grid: args.grid.clone(),
        grid_box: bounds,
        jitter: args.jitter,
        seed: args.seed,
        summary,
    };
    write_report(&args.common, &wrapped)?;
    Ok(verdict.exit_code())
}

/// Row-major grid over `bounds`, optionally jittered inside each cell by a
/// seeded generator.
fn build_grid(
    counts: &[usize],
    bounds: &[[f64; 2]],
    jitter: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, String> {
    if counts.len() != bounds.len() {
        return Err("grid shape and box dimensions differ".into());
    }
    let axes: Vec<Vec<f64>> = counts
        .iter()
        .zip(bounds)
        .map(|(&n, &[lo, hi])| linspace(lo, hi, n))
        .collect();
    let mut points = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }
    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<f64> = counts
            .iter()
            .zip(bounds)
            .map(|(&n, &[lo, hi])| (hi - lo) / (n - 1) as f64)
            .collect();
        for p in points.iter_mut() {
            for (axis, v) in p.iter_mut().enumerate() {
                let half = jitter * cells[axis] / 2.0;
                *v += rng.random_range(-half..=half);
                *v = v.clamp(bounds[axis][0], bounds[axis][1]);
            }
        }
    }
    Ok(points)
}

#[derive(Serialize)]
struct LieSignalCliReport {
    system: String,
    v: String,
    x0: Vec<f64>,
    #[serde(flatten)]
    signal: LieSignal,
    integrator: IntegratorConfig,
}

fn lie_signal_cmd(args: LieSignalArgs) -> Result<i32, String> {
    let system = load(&args.common)?;
    check_dimension(&system, &args.x0)?;
    let v = resolve_v(&system, &args.v)?;
    let config = args.integrator.apply(system.config());
    let traj = integrate(system.field(), &args.x0, &config).map_err(|e| e.to_string())?;
    let signal = lie_signal(&traj, &v, system.field(), args.probes, args.threshold)
        .map_err(|e| e.to_string())?;
    let wrapped = LieSignalCliReport {
        system: system.name().to_string(),
        v: format!("{v}"),
        x0: args.x0.clone(),
        signal,
        integrator: config,
    };
    write_report(&args.common, &wrapped)?;
    Ok(0)
}

fn examples() -> Result<i32, String> {
    println!("built-in systems:");
    for system in builtins() {
        println!(
            "  {:<10} dim {}  f = [{}]  {}",
            system.name(),
            system.dimension(),
            system.field_text().join(", "),
            system.description()
        );
        let regions: Vec<&str> = system.region_names().collect();
        if !regions.is_empty() {
            println!("  {:<10} regions: {}", "", regions.join(", "));
        }
    }
    Ok(0)
}
