//! Convergence traces and seed-averaged parameter sweeps.
//!
//! A sweep writes three files into its output directory:
//! `<name>_records.csv` (one row per run), `<name>_summary.csv` (one row per
//! sweep value and mode) and `<name>_manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{dbm_to_mw, generate_scenario, SystemConfig, TaskProfile};
use crate::solver::{solve, Mode, SolveOutcome, SolverOptions};
use crate::{Error, Result};

/// Seeds per sweep point when a spec does not list its own.
pub const DEFAULT_SEEDS: u64 = 20;
/// Starts per solve in sweeps unless the sweep overrides `solver.starts`.
pub const SWEEP_STARTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumUes,
    JammerPowerDbm,
    /// Side of both antenna regions in wavelengths.
    RegionAreaNormalized,
    /// MEC budget in bits/s.
    MecBudget,
    UeDistanceM,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NumUes => "num_ues",
            SweepVariable::JammerPowerDbm => "jammer_power_dbm",
            SweepVariable::RegionAreaNormalized => "region_area_normalized",
            SweepVariable::MecBudget => "mec_budget",
            SweepVariable::UeDistanceM => "ue_distance_m",
        }
    }

    /// Base config and tasks with this variable set to `value`.
    pub fn apply(self, config: &SystemConfig, tasks: &TaskProfile, value: f64) -> Result<(SystemConfig, TaskProfile)> {
        let mut c = config.clone();
        let mut t = tasks.clone();
        match self {
            SweepVariable::NumUes => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!("num_ues sweep value {value} is not a positive integer")));
                }
                c.num_ues = value as usize;
                t = t.resized(c.num_ues);
            }
            SweepVariable::JammerPowerDbm => c.jammer_power_mw = dbm_to_mw(value),
            SweepVariable::RegionAreaNormalized => {
                c.region_side_tx_m = value * c.wavelength_m;
                c.region_side_rx_m = value * c.wavelength_m;
            }
            SweepVariable::MecBudget => t.mec_budget = value,
            SweepVariable::UeDistanceM => c.ue_distance_m = value,
        }
        c.validate()?;
        t.validate(c.num_ues)?;
        Ok((c, t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub config: SystemConfig,
    #[serde(default = "reference_tasks")]
    pub tasks: TaskProfile,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "sweep_solver")]
    pub solver: SolverOptions,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn reference_tasks() -> TaskProfile {
    TaskProfile::reference(SystemConfig::default().num_ues)
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::FullMa]
}

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_SEEDS).collect()
}

/// Default options with [`SWEEP_STARTS`] starts per solve.
pub fn sweep_solver() -> SolverOptions {
    SolverOptions {
        starts: SWEEP_STARTS,
        ..SolverOptions::default()
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, variable: SweepVariable, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            config: SystemConfig::default(),
            tasks: reference_tasks(),
            variable,
            values,
            modes: default_modes(),
            seeds: default_seeds(),
            solver: sweep_solver(),
            output: default_output(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!("experiment name {:?} is not a plain file stem", self.name)));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one mode".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("sweep value {v} is not finite")));
        }
        self.solver.validate()?;
        for &v in &self.values {
            self.variable.apply(&self.config, &self.tasks, v)?;
        }
        Ok(())
    }
}

/// Scenario and solver settings for a single run, as read from JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub config: SystemConfig,
    /// Reference tasks for `config.num_ues` UEs when absent.
    pub tasks: Option<TaskProfile>,
    pub solver: SolverOptions,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let run: Self = serde_json::from_str(&text)?;
        run.config.validate()?;
        run.tasks().validate(run.config.num_ues)?;
        run.solver.validate()?;
        Ok(run)
    }

    pub fn tasks(&self) -> TaskProfile {
        self.tasks
            .clone()
            .unwrap_or_else(|| TaskProfile::reference(self.config.num_ues))
    }
}

/// Outcome of one (value, mode, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub value: f64,
    pub mode: Mode,
    pub seed: u64,
    /// `None` when the run failed.
    pub max_delay: Option<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub mode: Mode,
    /// Mean over runs that returned a solution.
    pub mean_delay: f64,
    pub std_error: f64,
    /// Converged runs over all runs.
    pub convergence_rate: f64,
    pub mean_outer_iterations: f64,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub records: Vec<RunRecord>,
}

impl SweepResult {
    /// Mean delays of `mode` in sweep order.
    pub fn means(&self, mode: Mode) -> Vec<f64> {
        self.rows.iter().filter(|r| r.mode == mode).map(|r| r.mean_delay).collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("value,mode,mean_delay_s,std_error_s,convergence_rate,mean_outer_iterations,runs,failures\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.value,
                r.mode.name(),
                r.mean_delay,
                r.std_error,
                r.convergence_rate,
                r.mean_outer_iterations,
                r.runs,
                r.failures
            );
        }
        s
    }

    pub fn records_csv(&self) -> String {
        let mut s = String::from("value,mode,seed,max_delay_s,converged,outer_iterations,error\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.value,
                r.mode.name(),
                r.seed,
                r.max_delay.map_or(String::new(), |d| d.to_string()),
                r.converged,
                r.outer_iterations,
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        s
    }
}

fn run_one(spec: &ExperimentSpec, value: f64, mode: Mode, seed: u64) -> RunRecord {
    let outcome = spec
        .variable
        .apply(&spec.config, &spec.tasks, value)
        .and_then(|(c, t)| generate_scenario(&c, &t, seed))
        .and_then(|s| {
            solve(
                &s,
                &SolverOptions {
                    mode,
                    seed,
                    ..spec.solver.clone()
                },
            )
        });
    match outcome {
        Ok(o) => RunRecord {
            value,
            mode,
            seed,
            max_delay: Some(o.solution.max_delay),
            converged: o.converged,
            outer_iterations: o.outer_iterations,
            error: None,
        },
        Err(e) => RunRecord {
            value,
            mode,
            seed,
            max_delay: None,
            converged: false,
            outer_iterations: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Per (value, mode) statistics in spec order.  Failed runs are left out
/// of the means and count as not converged.
pub fn aggregate(spec: &ExperimentSpec, records: &[RunRecord]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &value in &spec.values {
        for &mode in &spec.modes {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.value.to_bits() == value.to_bits() && r.mode == mode)
                .collect();
            let delays: Vec<f64> = group.iter().filter_map(|r| r.max_delay).collect();
            let n = delays.len();
            let mean = if n > 0 { delays.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std_error = if n > 1 {
                let var = delays.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            let total = group.len().max(1) as f64;
            rows.push(SweepRow {
                value,
                mode,
                mean_delay: mean,
                std_error,
                convergence_rate: group.iter().filter(|r| r.converged).count() as f64 / total,
                mean_outer_iterations: group.iter().map(|r| r.outer_iterations as f64).sum::<f64>() / total,
                runs: n,
                failures: group.len() - n,
            });
        }
    }
    rows
}

/// Runs every (value, mode, seed) combination on `jobs` worker threads.
/// The result does not depend on `jobs`.
pub fn run_sweep(spec: &ExperimentSpec, jobs: usize) -> Result<SweepResult> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for &value in &spec.values {
        for &mode in &spec.modes {
            for &seed in &spec.seeds {
                tasks.push((value, mode, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {jobs} workers: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(v, m, s)| run_one(spec, v, m, s))
            .collect()
    });
    Ok(SweepResult {
        rows: aggregate(spec, &records),
        records,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a ExperimentSpec,
    seeds: &'a [u64],
    crate_version: &'static str,
    records: String,
    summary: String,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the records, summary and manifest into `dir`; returns the
/// summary path.
pub fn write_sweep(spec: &ExperimentSpec, result: &SweepResult, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records = dir.join(format!("{}_records.csv", spec.name));
    let summary = dir.join(format!("{}_summary.csv", spec.name));
    write_file(&records, &result.records_csv())?;
    write_file(&summary, &result.summary_csv())?;
    let manifest = Manifest {
        spec,
        seeds: &spec.seeds,
        crate_version: env!("CARGO_PKG_VERSION"),
        records: records.display().to_string(),
        summary: summary.display().to_string(),
    };
    write_file(
        &dir.join(format!("{}_manifest.json", spec.name)),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(summary)
}

/// Solves one scenario and streams its convergence trace to `path` as CSV.
pub fn run_convergence(
    config: &SystemConfig,
    tasks: &TaskProfile,
    options: &SolverOptions,
    seed: u64,
    path: &Path,
) -> Result<SolveOutcome> {
    let scenario = generate_scenario(config, tasks, seed)?;
    let outcome = solve(&scenario, &SolverOptions { seed, ..options.clone() })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_file(path, &outcome.trace.to_csv())?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(value: f64, seed: u64, delay: Option<f64>, converged: bool) -> RunRecord {
        RunRecord {
            value,
            mode: Mode::FullMa,
            seed,
            max_delay: delay,
            converged,
            outer_iterations: 10,
            error: delay.is_none().then(|| "boom".into()),
        }
    }

    #[test]
    fn aggregate_by_hand() {
        let spec = ExperimentSpec::new("t", SweepVariable::MecBudget, vec![1e8]);
        let recs = [
            record(1e8, 0, Some(1.0), true),
            record(1e8, 1, Some(3.0), false),
            record(1e8, 2, None, false),
        ];
        let rows = aggregate(&spec, &recs);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.mean_delay, 2.0);
        // sample sd √2, stderr √2/√2 = 1
        assert!((r.std_error - 1.0).abs() < 1e-15);
        assert!((r.convergence_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.runs, r.failures), (2, 1));
    }

    #[test]
    fn apply_sets_the_named_field() {
        let c = SystemConfig::default();
        let t = TaskProfile::reference(2);
        let (c3, t3) = SweepVariable::NumUes.apply(&c, &t, 3.0).unwrap();
        assert_eq!((c3.num_ues, t3.task_bits.len()), (3, 3));
        let (cj, _) = SweepVariable::JammerPowerDbm.apply(&c, &t, 10.0).unwrap();
        assert!((cj.jammer_power_mw - 10.0).abs() < 1e-12);
        let (ca, _) = SweepVariable::RegionAreaNormalized.apply(&c, &t, 4.0).unwrap();
        assert!((ca.region_side_rx_m - 4.0 * c.wavelength_m).abs() < 1e-15);
        assert!(SweepVariable::NumUes.apply(&c, &t, 1.5).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = ExperimentSpec::new("x", SweepVariable::MecBudget, vec![]);
        assert!(s.validate().is_err());
        s.values = vec![1e8];
        s.seeds.clear();
        assert!(s.validate().is_err());
        s.seeds = vec![0];
        assert!(s.validate().is_ok());
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"name":"a","variable":"mec_budget","values":[1],"bogus":0}"#).is_err());
    }

    #[test]
    fn local_only_sweep_is_flat_in_jammer_power() {
        let mut spec = ExperimentSpec::new("lo", SweepVariable::JammerPowerDbm, vec![-5.0, 10.0]);
        spec.modes = vec![Mode::LocalOnly];
        spec.seeds = vec![0, 1];
        let res = run_sweep(&spec, 1).unwrap();
        let m = res.means(Mode::LocalOnly);
        assert_eq!(m[0], m[1]);
    }
}
