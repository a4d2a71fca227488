//! Command-line front end: scenario ingestion, the five experiment
//! commands, and file export.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration, 3 numerical failure,
//! 4 a verification-style check ran correctly but the inequality fails.

use clap::{error::ErrorKind, Parser, Subcommand};
use filippov::analysis;
use filippov::contraction;
use filippov::flow;
use filippov::scenario::{
    self, load_scenario, run_verify, Scenario, ScenarioError, VerifyOptions,
};
use filippov::State;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

/// Worker-count override for grid sweeps; defaults to available parallelism.
const WORKERS_ENV: &str = "FILIPPOV_WORKERS";

#[derive(Parser)]
#[command(
    name = "filippov",
    about = "Simulate a planar piecewise-smooth system with sliding, verify contraction conditions, and locate its periodic orbit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `x1,x2`, got `{s}`"));
    }
    let x: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let y: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok([x, y])
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 2 {
        return Err(format!("expected `NxM`, got `{s}`"));
    }
    let n: usize = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let m: usize = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    if n < 1 || m < 1 {
        return Err("grid dimensions must be >= 1".to_string());
    }
    Ok((n, m))
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory; writes trajectory.csv and events.csv
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Initial state `x1,x2`
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0.3,1.0")]
        x0: [f64; 2],
        /// Start time
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Integration horizon; default 5 forcing periods
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Track two trajectories; writes pair_series.csv and pair_report.json
    Pair {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0.1,1.0")]
        x0: [f64; 2],
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0.101,1.001")]
        x0b: [f64; 2],
        /// Horizon; default 5 forcing periods
        #[arg(long)]
        horizon: Option<f64>,
        /// Decay rate for the comparison bound; default half the slower
        /// decay rate
        #[arg(long)]
        nu: Option<f64>,
        /// Per-event jump factor exponent for the comparison bound
        #[arg(long, default_value_t = 0.0)]
        eps_jump: f64,
        /// Fit/comparison window `a,b`; default `[2T, horizon]`
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        fit_window: Option<[f64; 2]>,
    },
    /// Run all contraction checks; writes verify_report.json
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Contraction rate; default half the slower decay rate
        #[arg(long)]
        nu: Option<f64>,
        /// Jump margin; default the weight depth
        #[arg(long)]
        eps_jump: Option<f64>,
        /// Time-axis node count override
        #[arg(long)]
        t_count: Option<usize>,
        /// x1-axis node count override
        #[arg(long)]
        x1_count: Option<usize>,
        /// x2-axis node count override
        #[arg(long)]
        x2_count: Option<usize>,
        /// Also dump the smooth-region sweep to this CSV (plot-ready)
        #[arg(long)]
        dump_a2: Option<PathBuf>,
        /// Also dump the jump sweep to this CSV (plot-ready)
        #[arg(long)]
        dump_a3: Option<PathBuf>,
    },
    /// Locate the periodic orbit; writes orbit.json and orbit.csv
    Orbit {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "1.0,1.0")]
        x0: [f64; 2],
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        max_iters: usize,
    },
    /// Iterate the time-T map over a start grid; writes poincare.csv
    Poincare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start grid dimensions `NxM`
        #[arg(long, value_parser = parse_grid, default_value = "60x60")]
        grid: (usize, usize),
        /// Number of map iterations per start
        #[arg(long, default_value_t = 47)]
        iters: usize,
        /// Start x1 range `a,b`; default the scenario domain
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        x1_range: Option<[f64; 2]>,
        /// Start x2 range `a,b`; default the scenario domain
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        x2_range: Option<[f64; 2]>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(ScenarioError),
    Numerical(String),
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::Output(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration: {e}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::Output(msg) => write!(f, "output: {msg}"),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Config(e)
    }
}

impl From<flow::FlowError> for CliError {
    fn from(e: flow::FlowError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    ExitCode::from(EXIT_OK)
                }
                _ => {
                    eprint!("{err}");
                    ExitCode::from(EXIT_USAGE)
                }
            };
        }
    };

    if let Ok(val) = std::env::var(WORKERS_ENV) {
        match val.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // ignore failure: the pool can only be set once per process
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("{WORKERS_ENV} must be a positive integer, got `{val}`");
                return ExitCode::from(EXIT_USAGE);
            }
        }
    }

    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Simulate { scenario, out, x0, t0, horizon } => {
            let scn = load_scenario(&scenario)?;
            cmd_simulate(&scn, &out, x0.into(), t0, horizon)
        }
        Command::Pair { scenario, out, x0, x0b, horizon, nu, eps_jump, fit_window } => {
            let scn = load_scenario(&scenario)?;
            cmd_pair(&scn, &out, x0.into(), x0b.into(), horizon, nu, eps_jump, fit_window)
        }
        Command::Verify {
            scenario, out, nu, eps_jump, t_count, x1_count, x2_count, dump_a2, dump_a3,
        } => {
            let scn = load_scenario(&scenario)?;
            let opts = VerifyOptions { nu, eps_jump, t_count, x1_count, x2_count };
            cmd_verify(&scn, &out, &opts, dump_a2.as_deref(), dump_a3.as_deref())
        }
        Command::Orbit { scenario, out, x0, tol, max_iters } => {
            let scn = load_scenario(&scenario)?;
            cmd_orbit(&scn, &out, x0.into(), tol, max_iters)
        }
        Command::Poincare { scenario, out, grid, iters, x1_range, x2_range } => {
            let scn = load_scenario(&scenario)?;
            cmd_poincare(&scn, &out, grid, iters, x1_range, x2_range)
        }
    }
}

fn writer(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn finish<W: Write>(mut w: W, what: &str) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Output(format!("writing {what}: {e}")))
}

fn cmd_simulate(
    scn: &Scenario,
    out: &Path,
    x0: State,
    t0: f64,
    horizon: Option<f64>,
) -> Result<u8, CliError> {
    let horizon = horizon.unwrap_or(5.0 * scn.system.period);
    let traj = flow::simulate(&scn.system, &scn.integrator, x0, t0, t0 + horizon)?;
    let mut w = writer(out, "trajectory.csv")?;
    flow::write_trajectory_csv(&mut w, &traj)
        .map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "trajectory.csv")?;
    let mut w = writer(out, "events.csv")?;
    flow::write_events_csv(&mut w, &traj.events).map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "events.csv")?;
    println!(
        "simulate: {} samples, {} events -> {}",
        traj.samples.len(),
        traj.events.len(),
        out.display()
    );
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_pair(
    scn: &Scenario,
    out: &Path,
    x0: State,
    x0b: State,
    horizon: Option<f64>,
    nu: Option<f64>,
    eps_jump: f64,
    fit_window: Option<[f64; 2]>,
) -> Result<u8, CliError> {
    let horizon = horizon.unwrap_or(5.0 * scn.system.period);
    let nu = nu.unwrap_or_else(|| scn.default_nu());
    let window = fit_window
        .map(|w| (w[0], w[1]))
        .unwrap_or((2.0 * scn.system.period, horizon));

    let series = analysis::pair_series(&scn.system, &scn.weight, &scn.integrator, x0, x0b, horizon)?;
    let mut w = writer(out, "pair_series.csv")?;
    analysis::write_pair_csv(&mut w, &series).map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "pair_series.csv")?;

    let tail = series.restrict(window.0, window.1);
    let fit = analysis::fit_decay_rate(&series, window)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let euclid_fit = analysis::fit_euclid_decay_rate(&series, window)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let verdict = analysis::verify_comparison(&tail, nu, eps_jump);
    let report = scenario::pair_report_json(
        &fit,
        &euclid_fit,
        &verdict,
        analysis::euclidean_decay_constant(&scn.weight),
    );
    let mut w = writer(out, "pair_report.json")?;
    w.write_all(report.as_bytes())
        .map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "pair_report.json")?;

    println!(
        "pair: slope {:.6} (r2 {:.6}), comparison {} (max violation {:.3e}) -> {}",
        fit.slope,
        fit.r2,
        if verdict.passes { "passes" } else { "FAILS" },
        verdict.max_violation,
        out.display()
    );
    Ok(if verdict.passes { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_verify(
    scn: &Scenario,
    out: &Path,
    opts: &VerifyOptions,
    dump_a2: Option<&Path>,
    dump_a3: Option<&Path>,
) -> Result<u8, CliError> {
    let report = run_verify(scn, opts);
    let mut w = writer(out, "verify_report.json")?;
    w.write_all(report.to_json().as_bytes())
        .map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "verify_report.json")?;

    if let Some(path) = dump_a2 {
        dump_a2_csv(scn, opts, path)?;
    }
    if let Some(path) = dump_a3 {
        dump_a3_csv(scn, &report, path)?;
    }

    for check in [&report.a2, &report.a3, &report.a4, &report.a5] {
        println!(
            "{}: sup {:.6e} (threshold {:.3e}) skipped {} -> {}",
            check.quantity,
            check.sup_value,
            -check.nu_used,
            check.skipped_count,
            if check.passes { "pass" } else { "FAIL" }
        );
    }
    if report.all_pass {
        println!("all checks passed -> {}", out.display());
        Ok(EXIT_OK)
    } else {
        println!("verification failed -> {}", out.display());
        Ok(EXIT_CHECK_FAILED)
    }
}

fn dump_a2_csv(scn: &Scenario, opts: &VerifyOptions, path: &Path) -> Result<(), CliError> {
    let mut grid = scn.default_a2_grid();
    if let Some(n) = opts.t_count {
        grid.t.count = n;
    }
    if let Some(n) = opts.x1_count {
        grid.x1.count = n;
    }
    if let Some(n) = opts.x2_count {
        grid.x2.count = n;
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("a2_grid.csv");
    let mut w = writer(dir, name)?;
    contraction::write_a2_grid_csv(
        &mut w,
        &scn.system,
        &scn.weight,
        &grid,
        filippov::geometry::SURFACE_TOL,
    )
    .map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "a2 dump")
}

fn dump_a3_csv(
    scn: &Scenario,
    report: &scenario::VerifyReport,
    path: &Path,
) -> Result<(), CliError> {
    let (t_axis, x2_axis) = scn.default_surface_axes();
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("a3_grid.csv");
    let mut w = writer(dir, name)?;
    contraction::write_a3_grid_csv(&mut w, &scn.system, &scn.weight, t_axis, x2_axis, report.eps_jump)
        .map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "a3 dump")
}

fn cmd_orbit(
    scn: &Scenario,
    out: &Path,
    x0: State,
    tol: f64,
    max_iters: usize,
) -> Result<u8, CliError> {
    if !(tol > 0.0) {
        return Err(CliError::Numerical("tol must be > 0".to_string()));
    }
    let result = analysis::find_periodic_orbit(&scn.system, &scn.integrator, x0, tol, max_iters)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let mut w = writer(out, "orbit.csv")?;
    flow::write_trajectory_csv(&mut w, &result.orbit_samples)
        .map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "orbit.csv")?;
    let mut w = writer(out, "orbit.json")?;
    w.write_all(scenario::orbit_report_json(&result, "orbit.csv").as_bytes())
        .map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "orbit.json")?;

    println!(
        "orbit: fixed point ({:.9e}, {:.9e}), residual {:.3e}, q {:.4}, {} iterates -> {}",
        result.fixed_point.x,
        result.fixed_point.y,
        result.residual,
        result.q_est,
        result.iterates.len(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_poincare(
    scn: &Scenario,
    out: &Path,
    grid: (usize, usize),
    iters: usize,
    x1_range: Option<[f64; 2]>,
    x2_range: Option<[f64; 2]>,
) -> Result<u8, CliError> {
    let x1 = x1_range
        .map(|r| (r[0], r[1]))
        .unwrap_or((scn.domain.x1_min, scn.domain.x1_max));
    let x2 = x2_range
        .map(|r| (r[0], r[1]))
        .unwrap_or((scn.domain.x2_min, scn.domain.x2_max));
    let starts = analysis::grid_starts(x1, x2, grid.0, grid.1);
    let sequences = analysis::poincare_grid(&scn.system, &scn.integrator, &starts, iters)?;
    let mut w = writer(out, "poincare.csv")?;
    analysis::write_poincare_csv(&mut w, &sequences).map_err(|e| CliError::Output(e.to_string()))?;
    finish(w, "poincare.csv")?;
    println!(
        "poincare: {} starts x {} iterates -> {}",
        starts.len(),
        iters,
        out.display()
    );
    Ok(EXIT_OK)
}
