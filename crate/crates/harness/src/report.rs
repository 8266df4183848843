//! CSV and JSON report writers.
//!
//! CSV files open with a `#` comment naming the columns in order, followed by the
//! header row. Every row ends with the seed and configuration hash so it can be
//! reproduced on its own.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::runs::{CrossCheckRow, IntegralRow, LocalRow, NormRow, SimulationRow, SweepRow};
use crate::{ExperimentConfig, HarnessError};

pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format!("{self:e}")
    }
}

impl Cell for Option<f64> {
    fn cell(&self) -> String {
        self.map(|v| v.cell()).unwrap_or_default()
    }
}

impl Cell for usize {
    fn cell(&self) -> String {
        self.to_string()
    }
}

impl Cell for bool {
    fn cell(&self) -> String {
        self.to_string()
    }
}

impl Cell for String {
    fn cell(&self) -> String {
        self.clone()
    }
}

impl Cell for Vec<f64> {
    fn cell(&self) -> String {
        self.iter().map(Cell::cell).collect::<Vec<_>>().join(" ")
    }
}

pub trait CsvRecord {
    fn columns() -> Vec<&'static str>;
    fn cells(&self) -> Vec<String>;
}

macro_rules! csv_record {
    ($t:ty: $($f:ident),* $(,)?) => {
        impl CsvRecord for $t {
            fn columns() -> Vec<&'static str> {
                vec![$(stringify!($f)),*]
            }
            fn cells(&self) -> Vec<String> {
                vec![$(self.$f.cell()),*]
            }
        }
    };
}

csv_record!(SweepRow: eps, dt, n_steps, wave_l2_error, density_l1_error, density_linf_error, current_l1_error,
    current_linf_error, phase_hk_error, amplitude_hk_error, wkb_l2_error, status);
csv_record!(LocalRow: eps, lambda, t, phase_norm, amplitude_norm, total, l2, wave_l2, status);
csv_record!(IntegralRow: eps, t, nodes, defect, measured_norm, relative_defect, reduction);
csv_record!(NormRow: eps, trajectory, dt, m, horizon, samples, phase_triple_sq, phase_budget, amplitude_triple_sq,
    amplitude_budget, pointwise_max, pointwise_budget, triple_margin, pointwise_margin,
    pointwise_margin_after_start, tail_warning);
csv_record!(CrossCheckRow: eps, wave_certificate, wkb_certificate, reference_gap, oracle_error, iteration_ratios,
    iteration_contracted, iteration_gap, status);
csv_record!(SimulationRow: eps, dt, n_steps, initial_mass, final_mass, commutation_gap, status);

/// CSV text for `rows`, each row tagged with the seed and config hash.
pub fn csv_string<R: CsvRecord>(rows: &[R], cfg: &ExperimentConfig) -> Result<String, HarnessError> {
    let mut columns = R::columns();
    columns.extend(["seed", "config_hash"]);
    let mut out = Vec::new();
    writeln!(out, "# columns: {}", columns.join(", ")).expect("write to vec");
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record(&columns).map_err(io)?;
    let (seed, hash) = (cfg.seed.to_string(), cfg.hash());
    for r in rows {
        let mut cells = r.cells();
        cells.push(seed.clone());
        cells.push(hash.clone());
        w.write_record(&cells).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// JSON summary: the report plus identifying metadata. Per-cell `rows` are left
/// to the CSV unless the report is small enough that they are the summary.
pub fn summary_json<T: Serialize>(task: &str, report: &T, cfg: &ExperimentConfig) -> Result<String, HarnessError> {
    let mut body = serde_json::to_value(report)?;
    if let Some(obj) = body.as_object_mut() {
        if obj.get("rows").and_then(|r| r.as_array()).is_some_and(|r| r.len() > cfg.model.epsilons.len()) {
            obj.remove("rows");
        }
    }
    let doc = serde_json::json!({
        "task": task,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "summary": body,
    });
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.to_path_buf(), e))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| HarnessError::Io(path.clone(), e))?;
    Ok(path)
}
