use std::fs;

use majam_core::experiments::{aggregate, run_sweep, write_sweep, ExperimentSpec, SweepVariable};
use majam_core::scenario::SystemConfig;
use majam_core::solver::Mode;

fn small_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::new("ues", SweepVariable::NumUes, vec![1.0, 2.0]);
    spec.config = SystemConfig { rx_antennas: 4, ..SystemConfig::default() };
    spec.modes = vec![Mode::Fpa, Mode::LocalOnly];
    spec.seeds = vec![3, 4, 5];
    spec.solver.starts = 1;
    spec
}

#[test]
fn summary_is_recomputable_from_records() {
    let spec = small_spec();
    let result = run_sweep(&spec, 1).unwrap();
    assert_eq!(result.records.len(), 2 * 2 * 3);
    assert_eq!(aggregate(&spec, &result.records), result.rows);
    for row in &result.rows {
        let d: Vec<f64> = result
            .records
            .iter()
            .filter(|r| r.value == row.value && r.mode == row.mode)
            .filter_map(|r| r.max_delay)
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!((mean - row.mean_delay).abs() < 1e-12);
    }
    assert_eq!(result.means(Mode::LocalOnly), [2.5, 2.5]);
}

#[test]
fn sweep_files_round_trip() {
    let spec = small_spec();
    let result = run_sweep(&spec, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = write_sweep(&spec, &result, dir.path()).unwrap();
    assert_eq!(fs::read_to_string(&summary).unwrap(), result.summary_csv());
    let records = fs::read_to_string(dir.path().join("ues_records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + result.records.len());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ues_manifest.json")).unwrap()).unwrap();
    let back: ExperimentSpec = serde_json::from_value(manifest["spec"].clone()).unwrap();
    assert_eq!(back, spec);
    assert_eq!(manifest["seeds"], serde_json::json!([3, 4, 5]));
}
