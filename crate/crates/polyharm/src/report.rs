//! Machine-readable campaign output: JSONL records, CSV summaries, and
//! plain multi-column plot data.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::GrowthClass;
use crate::experiments::SweepCell;
use crate::integrate::Termination;
use crate::PolyharmError;

pub const JSONL_SCHEMA: &str = "polyharm-sweep v1";
pub const CSV_SCHEMA: &str = "polyharm-sweep-summary v1";

/// One flattened sweep record; the JSONL schema round-trips through serde.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema: String,
    pub index: usize,
    pub n: u32,
    pub m: u32,
    pub s: f64,
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub c: Option<f64>,
    pub termination: String,
    pub r_last: Option<f64>,
    pub class: String,
    /// Fitted constant of the class: α, ρ/2, quartic limit, amplitude.
    pub fitted: Option<f64>,
    pub fit_residual: f64,
    pub invariants_passed: bool,
    pub invariant_failures: Vec<String>,
    pub death_predicted: Option<f64>,
    pub death_observed: Option<f64>,
    pub mass_estimate: Option<f64>,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn from_cell(cell: &SweepCell) -> Self {
        let fitted = match cell.growth.class {
            GrowthClass::Linear { alpha } => Some(alpha),
            GrowthClass::Quadratic { half_rho } => Some(half_rho),
            GrowthClass::Quartic { limit } => Some(limit),
            GrowthClass::Power { amplitude, .. } => Some(amplitude),
            GrowthClass::LogCorrected { coefficient } => Some(coefficient),
            GrowthClass::Extinct { .. } | GrowthClass::Undetermined => None,
        };
        let termination = match cell.termination {
            Termination::ReachedRmax => "reached_rmax".to_string(),
            Termination::Extinct { last_alive, .. } => format!("extinct@{last_alive:.6e}"),
            Termination::BlowUp { r } => format!("blowup@{r:.6e}"),
            Termination::StepFailure { r } => format!("step_failure@{r:.6e}"),
        };
        SweepRecord {
            schema: JSONL_SCHEMA.to_string(),
            index: cell.index,
            n: cell.spec.n,
            m: cell.spec.m.m() as u32,
            s: cell.spec.s,
            q: cell.spec.q,
            a: cell.origin.a,
            b: cell.origin.b,
            c: cell.origin.c,
            termination,
            r_last: None,
            class: cell.growth.class.label().to_string(),
            fitted,
            fit_residual: cell.growth.fit_residual,
            invariants_passed: cell.invariants.all_passed(),
            invariant_failures: cell
                .invariants
                .failed()
                .iter()
                .map(|c| c.name.clone())
                .collect(),
            death_predicted: cell
                .forecast
                .as_ref()
                .map(|f| f.r_death_pred)
                .filter(|r| r.is_finite()),
            death_observed: cell.forecast.as_ref().and_then(|f| f.observed),
            mass_estimate: cell.forecast.as_ref().map(|f| f.mass_estimate),
            error: cell.error.clone(),
        }
    }
}

/// Write one JSON record per line.
pub fn write_jsonl(path: &Path, records: &[SweepRecord]) -> Result<(), PolyharmError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| PolyharmError::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SweepRecord>, PolyharmError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| PolyharmError::Io(e.to_string())))
        .collect()
}

/// CSV summary: class counts per q, schema-versioned header line.
pub fn write_csv_summary(path: &Path, records: &[SweepRecord]) -> Result<(), PolyharmError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {CSV_SCHEMA}")?;
    writeln!(
        out,
        "q,cells,extinct,power,log_corrected,linear,quadratic,quartic,undetermined,invariant_failures"
    )?;
    let mut qs: Vec<f64> = records.iter().map(|r| r.q).collect();
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    qs.dedup();
    for q in qs {
        let rows: Vec<&SweepRecord> = records.iter().filter(|r| r.q == q).collect();
        let count = |label: &str| rows.iter().filter(|r| r.class == label).count();
        writeln!(
            out,
            "{q},{},{},{},{},{},{},{},{},{}",
            rows.len(),
            count("extinct"),
            count("power"),
            count("log-corrected"),
            count("linear"),
            count("quadratic"),
            count("quartic"),
            count("undetermined"),
            rows.iter().filter(|r| !r.invariants_passed).count(),
        )?;
    }
    Ok(())
}

/// Plain multi-column plot data with a commented header; one row per radius.
pub fn write_plot_columns(
    path: &Path,
    header: &str,
    columns: &[(&str, &[f64])],
) -> Result<(), PolyharmError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {header}")?;
    write!(out, "#")?;
    for (name, _) in columns {
        write!(out, " {name}")?;
    }
    writeln!(out)?;
    let rows = columns.iter().map(|(_, c)| c.len()).min().unwrap_or(0);
    for i in 0..rows {
        for (j, (_, col)) in columns.iter().enumerate() {
            if j > 0 {
                write!(out, " ")?;
            }
            write!(out, "{:.17e}", col[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_sweep, SweepPlan};
    use crate::integrate::IntegrationConfig;

    fn small_sweep() -> Vec<SweepRecord> {
        let plan = SweepPlan {
            n: 2,
            m: 2,
            s: -1.0,
            q_values: vec![2.0],
            a_values: vec![1.0],
            b_values: vec![0.1, 1.0],
            c_values: None,
            cfg: IntegrationConfig::with_r_max(100.0),
        };
        run_sweep(&plan)
            .unwrap()
            .iter()
            .map(SweepRecord::from_cell)
            .collect()
    }

    #[test]
    fn jsonl_roundtrip_is_identity() {
        let records = small_sweep();
        let dir = std::env::temp_dir().join("polyharm-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cells.jsonl");
        write_jsonl(&path, &records).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn csv_summary_counts_classes() {
        let records = small_sweep();
        let dir = std::env::temp_dir().join("polyharm-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("summary.csv");
        write_csv_summary(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("# {CSV_SCHEMA}")));
        // both planar cells die
        assert!(text.lines().nth(2).unwrap().starts_with("2,2,2"));
    }
}
