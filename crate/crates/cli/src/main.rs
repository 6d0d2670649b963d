//! `majam`: convergence traces, parameter sweeps, invariant checks and
//! oracle comparisons for the movable-antenna anti-jamming MEC solver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use majam_core::experiments::{run_convergence, run_sweep, write_sweep, ExperimentSpec, RunConfig};
use majam_core::invariants::run_invariant_suite;
use majam_core::oracle::{block_oracles, channel_oracle, OBJECTIVE_TOL, SLACKNESS_TOL};
use majam_core::solver::Mode;
use majam_core::Error;

#[derive(Debug, Parser)]
#[command(name = "majam", version, about = "Movable-antenna anti-jamming MEC solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one scenario and write its outer-iteration trace as CSV.
    Convergence {
        /// JSON run config: {"config": {...}, "tasks": {...}, "solver": {...}}
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "convergence.csv")]
        out: PathBuf,
        /// full-ma, fpa, receive-only-ma or local-only
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run a seed-averaged sweep from a JSON experiment spec.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// First seed; the number of seeds in the sweep file is kept.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the sweep file's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this mode.
        #[arg(long)]
        mode: Option<Mode>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check descent and sub-block feasibility on random solver states.
    Validate {
        /// JSON run config for the scenario family.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        states: usize,
    },
    /// Compare the channel model and every sub-block update with brute-force oracles.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 1000)]
        channel_instances: usize,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status 1 for bad input, 2 for numeric failures.
fn failure(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::NumericFailure { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn load_run(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::from_json_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn convergence(config: Option<&Path>, seed: u64, out: &Path, mode: Option<Mode>) -> Result<ExitCode, Error> {
    let mut run = load_run(config)?;
    if let Some(m) = mode {
        run.solver.mode = m;
    }
    let outcome = run_convergence(&run.config, &run.tasks(), &run.solver, seed, out)?;
    println!(
        "{} outer iterations, converged: {}, final violation {:.3e}, max delay {:.6} s -> {}",
        outcome.outer_iterations,
        outcome.converged,
        outcome.final_violation,
        outcome.solution.max_delay,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mode: Option<Mode>,
    jobs: Option<usize>,
) -> Result<ExitCode, Error> {
    let mut spec = ExperimentSpec::from_json_file(config)?;
    if let Some(s) = seed {
        spec.seeds = (s..s + spec.seeds.len() as u64).collect();
    }
    if let Some(m) = mode {
        spec.modes = vec![m];
    }
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
    }
    let result = run_sweep(&spec, jobs)?;
    let dir = out.unwrap_or_else(|| spec.output.clone());
    let summary = write_sweep(&spec, &result, &dir)?;
    println!("{:>12} {:>16} {:>12} {:>10} {:>9} {:>8}", spec.variable.name(), "mode", "mean [s]", "stderr", "conv", "outer");
    for r in &result.rows {
        println!(
            "{:>12} {:>16} {:>12.6} {:>10.2e} {:>9.2} {:>8.1}",
            r.value,
            r.mode.name(),
            r.mean_delay,
            r.std_error,
            r.convergence_rate,
            r.mean_outer_iterations
        );
    }
    println!("summary: {}", summary.display());
    Ok(ExitCode::SUCCESS)
}

fn validate(config: Option<&Path>, seed: u64, states: usize) -> Result<ExitCode, Error> {
    let run = load_run(config)?;
    let report = run_invariant_suite(&run.config, &run.tasks(), states, seed)?;
    println!(
        "{} states, {} sweeps; worst step increase {:.2e}, worst sweep increase {:.2e}, worst constraint {:.2e}",
        report.states, report.sweeps, report.worst_step_increase, report.worst_sweep_increase, report.worst_constraint
    );
    for f in report.failures.iter().take(20) {
        println!("FAIL {f}");
    }
    if report.passed() {
        println!("all invariants hold");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} invariant failures", report.failures.len());
        Ok(ExitCode::from(2))
    }
}

fn oracle(seed: u64, instances: usize, channel_instances: usize, out: Option<&Path>) -> Result<ExitCode, Error> {
    let ch = channel_oracle(channel_instances, seed)?;
    println!(
        "channel: {} instances, uplink rel. error {:.2e}, jammer rel. error {:.2e}, {:.2} s  [{}]",
        ch.instances,
        ch.max_uplink_error,
        ch.max_jammer_error,
        ch.elapsed_secs,
        if ch.passed() { "pass" } else { "FAIL" }
    );
    let blocks = block_oracles(instances, seed)?;
    println!(
        "\n{:<40} {:<28} {:>10} {:>10} {:>10} {:>10}  (gap ≤ {OBJECTIVE_TOL:.0e}, |κg| ≤ {SLACKNESS_TOL:.0e})",
        "update", "oracle", "obj gap", "min κ", "|κ·g|", "viol."
    );
    for r in &blocks.rows {
        println!(
            "{:<40} {:<28} {:>10.2e} {:>10} {:>10.2e} {:>10.2e}  {}",
            r.op,
            r.oracle,
            r.max_objective_gap,
            r.min_multiplier.map_or("-".to_string(), |m| format!("{m:.2e}")),
            r.max_slackness,
            r.max_violation,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    println!("{} instances per update, {:.2} s", instances, blocks.elapsed_secs);
    if let Some(path) = out {
        let json = serde_json::json!({ "channel": ch, "blocks": blocks });
        std::fs::write(path, serde_json::to_string_pretty(&json).map_err(Error::from)?)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    }
    Ok(if ch.passed() && blocks.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Convergence { config, seed, out, mode } => convergence(config.as_deref(), seed, &out, mode),
        Command::Sweep { config, seed, out, mode, jobs } => sweep(&config, seed, out, mode, jobs),
        Command::Validate { config, seed, states } => validate(config.as_deref(), seed, states),
        Command::Oracle { seed, instances, channel_instances, out } => {
            oracle(seed, instances, channel_instances, out.as_deref())
        }
    };
    result.unwrap_or_else(|e| failure(&e))
}
