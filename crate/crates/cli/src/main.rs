//! `penshape` command-line interface.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use penshape::diagnostics::{eps_sweep, gradient_check, strictly_decreasing, GradientCheckOptions};
use penshape::io::{write_field_snapshot, write_history};
use penshape::{build_structured_mesh, preset, run_optimization_with, DirectionMode, Error, RunConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "penshape", version, about = "Fixed-mesh penalty shape optimization under random coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the descent loop for a preset or a config file.
    Run(RunArgs),
    /// Compare adjoint directional derivatives with finite differences.
    GradientCheck(CheckArgs),
    /// Penalty integral at the initial shape for a list of eps values.
    EpsSweep(SweepArgs),
    /// Print mesh counts, optionally exporting the mesh as text.
    MeshInfo(MeshArgs),
}

/// Problem selection shared by all subcommands. Precedence: the preset or
/// config file gives the base values, individual flags override them.
#[derive(Debug, Args)]
struct ProblemArgs {
    /// Built-in experiment (1-4); example 1 if neither this nor --config is given.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4), conflicts_with = "config")]
    example: Option<u8>,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Vertices per side of the grid.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    grid_n: Option<u64>,
    /// Number of Monte Carlo samples.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,
    #[arg(long, value_parser = positive_f64)]
    eps: Option<f64>,
    #[arg(long, value_parser = unit_interval)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the sample loop (default: available parallelism).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_parser = parse_direction)]
    direction: Option<DirectionMode>,
    /// Draw a fresh sample set after every accepted step.
    #[arg(long)]
    resample: bool,
    /// Write a shape snapshot every K iterations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    snapshot_every: Option<u64>,
    /// Write shape snapshots at these iterations.
    #[arg(long, value_delimiter = ',')]
    snapshot_at: Vec<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Number of random smooth directions.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    directions: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4, value_parser = positive_f64)]
    fd_step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-3, value_parser = positive_f64)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated eps values.
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4,1e-5", value_parser = positive_f64)]
    eps_list: Vec<f64>,
}

#[derive(Debug, Args)]
struct MeshArgs {
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(2..))]
    grid_n: u64,
    /// Write the mesh as plain text to this file.
    #[arg(long)]
    export: Option<PathBuf>,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(v),
        Ok(v) => Err(format!("must lie in [0, 1), got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_direction(s: &str) -> Result<DirectionMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl ToString) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Parse { .. } => Failure::usage(e),
            _ => Failure::runtime(e),
        }
    }
}

impl ProblemArgs {
    fn resolve(&self, base: impl FnOnce(RunConfig) -> RunConfig) -> Result<RunConfig, Failure> {
        let config = match (&self.config, self.example) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, ex) => preset(ex.unwrap_or(1))?,
        };
        let mut config = base(config);
        if let Some(n) = self.grid_n {
            config.grid_n = n as usize;
        }
        if let Some(m) = self.samples {
            config.n_samples = m as usize;
        }
        if let Some(eps) = self.eps {
            config.eps = eps;
        }
        if let Some(rho) = self.rho {
            config.rho = rho;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        let threads = self
            .threads
            .map(|t| t as usize)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(Failure::runtime)
    }
}

fn wants_snapshot(iter: usize, every: Option<u64>, at: &BTreeSet<usize>) -> bool {
    at.contains(&iter) || every.is_some_and(|k| (iter as u64).is_multiple_of(k))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let mut config = args.problem.resolve(|c| c)?;
    if let Some(k) = args.max_iters {
        config.optimizer.max_iters = k;
    }
    if let Some(d) = args.direction {
        config.direction = d;
    }
    if args.resample {
        config.resample = true;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    config.save(&out.join("config.txt"))?;

    let mesh = build_structured_mesh(config.grid_n)?;
    let at: BTreeSet<usize> = args.snapshot_at.iter().copied().collect();
    let mut last_snapshot = None;
    let outcome = args.problem.pool()?.install(|| {
        run_optimization_with(&config, |record, g| {
            println!(
                "iter {:4}  cost {:.6e}  step {:<6}  dcost {:.3e}  dg {:.3e}",
                record.iter, record.cost, record.step, record.dcost, record.dg
            );
            if wants_snapshot(record.iter, args.snapshot_every, &at) {
                write_field_snapshot(&mesh, g, record.iter, &out)?;
                last_snapshot = Some(record.iter);
            }
            Ok(())
        })
    })?;

    let history = &outcome.history;
    write_history(history, &out.join("history.csv"))?;
    let last = history.records.last().map_or(0, |r| r.iter);
    if last_snapshot != Some(last) {
        write_field_snapshot(&outcome.mesh, &outcome.final_g, last, &out)?;
    }
    println!(
        "termination={} iterations={} final_cost={:?}",
        history.termination,
        last,
        history.final_cost()
    );
    if history.termination.is_success() {
        Ok(())
    } else {
        Err(Failure::runtime(format!("run ended with {}", history.termination)))
    }
}

fn cmd_gradient_check(args: &CheckArgs) -> Result<(), Failure> {
    let base = args.problem.resolve(|c| GradientCheckOptions::coarse(c).base)?;
    let options = GradientCheckOptions {
        seed: base.seed,
        base,
        directions: args.directions as usize,
        fd_step: args.fd_step,
    };
    let report = args.problem.pool()?.install(|| gradient_check(&options))?;
    println!("{:>4} {:>22} {:>22} {:>12}", "q", "adjoint", "finite_difference", "rel_error");
    for (k, c) in report.checks.iter().enumerate() {
        println!(
            "{k:>4} {:>22.14e} {:>22.14e} {:>12.3e}",
            c.adjoint, c.finite_difference, c.relative_error
        );
    }
    let worst = report.max_relative_error();
    println!("max_relative_error={worst:.3e} tolerance={:.1e}", args.tolerance);
    if worst < args.tolerance {
        Ok(())
    } else {
        Err(Failure::runtime("finite differences disagree with the adjoint derivative"))
    }
}

fn cmd_eps_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let base = args.problem.resolve(|c| RunConfig { grid_n: 65, ..c })?;
    let rows = args.problem.pool()?.install(|| eps_sweep(&base, &args.eps_list))?;
    println!("{:>12} {:>22}", "eps", "penalty_integral");
    for r in &rows {
        println!("{:>12.3e} {:>22.14e}", r.eps, r.penalty_integral);
    }
    if strictly_decreasing(&rows) {
        Ok(())
    } else {
        Err(Failure::runtime("penalty integral is not strictly decreasing"))
    }
}

fn cmd_mesh_info(args: &MeshArgs) -> Result<(), Failure> {
    let mesh = build_structured_mesh(args.grid_n as usize)?;
    let boundary = mesh.boundary_vertex.iter().filter(|&&b| b).count();
    println!("grid_n {}", mesh.grid_n);
    println!("vertices {}", mesh.n_vertices());
    println!("triangles {}", mesh.n_triangles());
    println!("boundary_vertices {boundary}");
    println!("spacing {:?}", mesh.spacing());
    if let Some(path) = &args.export {
        mesh.write_text(Path::new(path))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::GradientCheck(a) => cmd_gradient_check(a),
        Command::EpsSweep(a) => cmd_eps_sweep(a),
        Command::MeshInfo(a) => cmd_mesh_info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
