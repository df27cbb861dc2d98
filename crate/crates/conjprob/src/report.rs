//! Machine-readable result records: the per-scenario JSON schema emitted
//! by the single-scenario estimator commands, and the benchmark export
//! bundle (JSON report plus plot-data CSVs for true-vs-predicted pairs,
//! the MSE table, and runtime samples).
//!
//! CSV files start with `#` comment lines documenting their columns, then
//! a header row. Numbers are written with Rust's shortest round-trip
//! formatting, so a re-parsed value is bit-identical to the original.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmark::{kind_label, BenchmarkReport, MseEntry, ScenarioRecord};
use crate::error::Result;
use crate::pipeline::{ConjunctionScenario, PcResult};

/// The JSON record one estimator invocation produces: an echo of the
/// inputs plus one result per method run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ConjunctionScenario,
    pub results: Vec<PcResult>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Serializes a benchmark report to pretty JSON.
pub fn report_to_json(report: &BenchmarkReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Parses a benchmark report back from JSON.
pub fn report_from_json(text: &str) -> Result<BenchmarkReport> {
    Ok(serde_json::from_str(text)?)
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per (scenario, estimator) pair, with the Monte Carlo ground
/// truth alongside. Scenarios without an MC result contribute no rows.
pub fn true_vs_predicted_csv(records: &[ScenarioRecord]) -> String {
    let mut out = String::new();
    out.push_str("# true-vs-predicted probability pairs against the Monte Carlo ground truth\n");
    out.push_str(
        "# columns: case id; back-propagation span [s]; distribution kind; requested scale; \
         estimator; MC clamped probability; estimator clamped probability; MC standard error\n",
    );
    out.push_str("case_id,back_prop_s,distribution,scale,method,p_true,p_pred,se_true\n");
    for record in records {
        let Some(mc) = record.results.iter().find(|r| r.method == "mc") else {
            continue;
        };
        for result in record.results.iter().filter(|r| r.method != "mc") {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                record.key.case_id,
                record.key.back_prop_s,
                kind_label(record.key.kind),
                record.key.scale,
                result.method,
                mc.p_clamped,
                result.p_clamped,
                opt(mc.se),
            ));
        }
    }
    out
}

/// The aggregate MSE table; `None` aggregates serialize as empty cells.
pub fn mse_table_csv(entries: &[MseEntry]) -> String {
    let mut out = String::new();
    out.push_str("# mean squared error of each estimator against the Monte Carlo ground truth\n");
    out.push_str(
        "# columns: estimator; back-propagation span [s]; distribution kind; scenario count and \
         MSE over nonzero-MC scenarios; scenario count and MSE over all compared scenarios\n",
    );
    out.push_str("method,back_prop_s,distribution,n_nonzero,mse_nonzero,n_all,mse_all\n");
    for entry in entries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            entry.method,
            entry.back_prop_s,
            kind_label(entry.kind),
            entry.n_nonzero,
            opt(entry.mse_nonzero),
            entry.n_all,
            opt(entry.mse_all),
        ));
    }
    out
}

/// One wall-clock sample per completed estimator run.
pub fn runtime_samples_csv(records: &[ScenarioRecord]) -> String {
    let mut out = String::new();
    out.push_str("# wall-clock samples of every completed estimator run\n");
    out.push_str(
        "# columns: estimator; case id; back-propagation span [s]; distribution kind; \
         requested scale; wall time [ms]\n",
    );
    out.push_str("method,case_id,back_prop_s,distribution,scale,wall_ms\n");
    for record in records {
        for result in &record.results {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                result.method,
                record.key.case_id,
                record.key.back_prop_s,
                kind_label(record.key.kind),
                record.key.scale,
                result.wall_ms,
            ));
        }
    }
    out
}

/// Writes the report bundle into a directory: `report.json`,
/// `true_vs_predicted.csv`, `mse_table.csv`, `runtime_samples.csv`.
/// Returns the paths written.
pub fn export_report(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("report.json", report_to_json(report)?),
        ("true_vs_predicted.csv", true_vs_predicted_csv(&report.records)),
        ("mse_table.csv", mse_table_csv(&report.mse)),
        ("runtime_samples.csv", runtime_samples_csv(&report.records)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a benchmark report back from `report.json`.
pub fn import_report(path: &Path) -> Result<BenchmarkReport> {
    report_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{RuntimeStats, ScenarioKey};
    use crate::dataset;
    use crate::moments::{UncertaintyKind, UncertaintySpec};
    use crate::pipeline::Diagnostics;

    fn sample_scenario() -> ConjunctionScenario {
        ConjunctionScenario::from_case(
            dataset::case(1).unwrap(),
            3600.0,
            UncertaintySpec::benchmark_normal(1.0).unwrap(),
        )
        .unwrap()
    }

    fn sample_result(method: &str, p: f64, se: Option<f64>) -> PcResult {
        PcResult {
            method: method.to_string(),
            p_raw: p,
            p_clamped: p.clamp(0.0, 1.0),
            se,
            diagnostics: Diagnostics {
                d_ca_km: Some(0.4),
                ..Diagnostics::default()
            },
            wall_ms: 12.5,
        }
    }

    fn sample_record() -> ScenarioRecord {
        ScenarioRecord {
            key: ScenarioKey {
                case_id: 1,
                back_prop_s: 3600.0,
                kind: UncertaintyKind::DiagonalNormalRtn,
                scale: 1.0,
            },
            scenario: sample_scenario(),
            results: vec![
                sample_result("mc", 0.25, Some(0.0137)),
                sample_result("moments", 0.26, None),
            ],
            failures: vec![],
        }
    }

    #[test]
    fn scenario_report_round_trips_with_expected_shape() {
        let report = ScenarioReport {
            scenario: sample_scenario(),
            results: vec![sample_result("moments", -1.2e-9, None)],
        };
        let json = report.to_json().unwrap();
        assert!(json.contains("\"scenario\""));
        assert!(json.contains("\"results\""));
        assert!(json.contains("\"p_raw\""));
        assert_eq!(ScenarioReport::from_json(&json).unwrap(), report);
        assert!(ScenarioReport::from_json("not json").is_err());
    }

    #[test]
    fn empty_report_exports_valid_empty_tables() {
        let report = BenchmarkReport {
            n_mc: 0,
            seed: 0,
            records: vec![],
            mse: vec![],
            runtimes: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let written = export_report(&report, dir.path()).unwrap();
        assert_eq!(written.len(), 4);
        for path in &written {
            assert!(path.exists(), "{path:?} missing");
        }
        let csv = std::fs::read_to_string(dir.path().join("mse_table.csv")).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert!(csv.lines().filter(|l| !l.starts_with('#')).count() == 1);
        assert_eq!(
            import_report(&dir.path().join("report.json")).unwrap(),
            report
        );
    }

    #[test]
    fn csv_rows_reflect_records_and_optional_cells() {
        let record = sample_record();

        let tvp = true_vs_predicted_csv(std::slice::from_ref(&record));
        let rows: Vec<&str> = tvp.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "case_id,back_prop_s,distribution,scale,method,p_true,p_pred,se_true");
        assert_eq!(rows[1], "1,3600,normal,1,moments,0.25,0.26,0.0137");
        assert_eq!(rows.len(), 2);

        let runtime = runtime_samples_csv(std::slice::from_ref(&record));
        let rows: Vec<&str> = runtime.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1], "mc,1,3600,normal,1,12.5");

        let entries = vec![MseEntry {
            method: "moments".into(),
            back_prop_s: 3600.0,
            kind: UncertaintyKind::UniformBoxRtn,
            n_nonzero: 0,
            mse_nonzero: None,
            n_all: 2,
            mse_all: Some(1e-4),
        }];
        let mse = mse_table_csv(&entries);
        let rows: Vec<&str> = mse.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[1], "moments,3600,uniform,0,,2,0.0001");
    }

    #[test]
    fn benchmark_report_round_trips_through_files() {
        let report = BenchmarkReport {
            n_mc: 1000,
            seed: 9,
            records: vec![sample_record()],
            mse: vec![],
            runtimes: vec![RuntimeStats {
                method: "mc".into(),
                count: 1,
                min_ms: 12.5,
                median_ms: 12.5,
                mean_ms: 12.5,
                max_ms: 12.5,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        export_report(&report, dir.path()).unwrap();
        let back = import_report(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, report);
    }
}
