//! CSV and JSON emission. Files are written to a temporary sibling and
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::analysis::ReportSeries;
use crate::error::Result;
use crate::solver::RunTrace;

pub const TRACE_HEADER: [&str; 10] = [
    "k",
    "f",
    "grad_norm",
    "iter_err",
    "deriv_err",
    "theory_iter_bound",
    "theory_deriv_envelope",
    "a_k",
    "b_k",
    "gamma_k",
];

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with [`TRACE_HEADER`]. Series entries past the trace length are
/// ignored; missing ones become empty fields.
pub fn trace_csv(trace: &RunTrace, series: Option<&ReportSeries>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    let at = |v: Option<&Vec<f64>>, k: usize| v.and_then(|s| s.get(k).copied());
    let at_opt =
        |v: Option<&Vec<Option<f64>>>, k: usize| v.and_then(|s| s.get(k).copied().flatten());
    for r in &trace.records {
        let k = r.k;
        let iter_err = at(series.and_then(|s| s.iter_err.as_ref()), k).or(r.iter_err);
        let deriv_err = at(series.and_then(|s| s.deriv_err.as_ref()), k);
        let bound = at_opt(series.map(|s| &s.theory_iter_bound), k);
        let envelope = at_opt(series.map(|s| &s.theory_deriv_envelope), k);
        w.write_record([
            k.to_string(),
            r.f.to_string(),
            r.grad_norm.to_string(),
            cell(iter_err),
            cell(deriv_err),
            cell(bound),
            cell(envelope),
            r.a_k.to_string(),
            r.b_k.to_string(),
            r.gamma_k.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Arbitrary named columns of equal length, one row per index.
pub fn columns_csv(names: &[&str], columns: &[Vec<Option<f64>>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..rows {
        let mut record = vec![k.to_string()];
        record.extend(columns.iter().map(|c| cell(c.get(k).copied().flatten())));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
