//! CSV and JSON persistence. Files are written to a temporary name and
//! renamed into place.

use crate::config::Format;
use crate::error::HarnessError;
use crate::harness::ScenarioReport;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: [&str; 14] = [
    "scenario_id",
    "seed",
    "round",
    "scheme",
    "lambda",
    "snr_db",
    "loss",
    "dist_sq",
    "acc",
    "comm_cost",
    "sigma_ul2",
    "bound_convex",
    "bound_sconvex",
    "bound_nonconvex",
];

/// Per-round rows of every seed, header first.
pub fn csv_bytes(report: &ScenarioReport) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in report.rows() {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

pub fn summary_csv_bytes(report: &ScenarioReport) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &report.summary {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

pub fn json_bytes(report: &ScenarioReport) -> Result<Vec<u8>, HarnessError> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Write the report plus the config echo into `dir`; returns the paths written.
pub fn write_report(report: &ScenarioReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let id = &report.scenario_id;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<(), HarnessError> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    match format {
        Format::Csv => {
            put(format!("{id}.csv"), csv_bytes(report)?)?;
            put(format!("{id}.summary.csv"), summary_csv_bytes(report)?)?;
        }
        Format::Json => put(format!("{id}.json"), json_bytes(report)?)?,
    }
    put(format!("{id}.toml"), report.config.to_toml().into_bytes())?;
    Ok(written)
}
