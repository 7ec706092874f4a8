//! Report serialization and atomic file output.

use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::engine::RunReport;
use crate::metrics::{CsvRow, StrategyOutcome};

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn to_csv(rows: &[CsvRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// One CSV row per step of the run.
pub fn run_csv_rows(report: &RunReport) -> Vec<CsvRow> {
    report
        .steps
        .iter()
        .map(|s| CsvRow::new(&report.scenario, &StrategyOutcome::from_report(s)))
        .collect()
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("reports serialize");
    out.push(b'\n');
    out
}
