//! CSV ingestion and result persistence.
//!
//! CSV is the only matrix interchange format: comma-separated floats, one
//! sample per row, with an optional single header row. All writes go
//! through a temp-file-and-rename so failures never leave partial output.

use ndarray::Array2;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::data_model::FeatureMatrix;
use crate::error::{NrdepError, Result};
use crate::evaluation::{RetrievalReport, Table1Summary};
use crate::optimizer::RoundRecord;

/// Parses a headerless or single-header-row CSV of reals.
///
/// Every row must have the same number of fields; non-numeric cells outside
/// a first header row are reported with their line and column.
pub fn load_view_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path).map_err(|e| NrdepError::io(path.display().to_string(), e))?;
    parse_view_csv(&text)
}

/// Parsing core of `load_view_csv`, split out for direct testing.
pub fn parse_view_csv(text: &str) -> Result<FeatureMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected_cols = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let mut parsed = Vec::with_capacity(fields.len());
        let mut failure: Option<(usize, String)> = None;
        for (col, field) in fields.iter().enumerate() {
            match field.trim().parse::<f64>() {
                Ok(v) => parsed.push(v),
                Err(_) => {
                    failure = Some((col + 1, field.trim().to_string()));
                    break;
                }
            }
        }
        if let Some((col, cell)) = failure {
            // a non-numeric first line is a header row
            if rows.is_empty() && expected_cols.is_none() {
                expected_cols = Some(fields.len());
                continue;
            }
            return Err(NrdepError::ParseError {
                line: lineno,
                col,
                msg: format!("cannot parse {cell:?} as a number"),
            });
        }
        if let Some(expected) = expected_cols {
            if parsed.len() != expected {
                return Err(NrdepError::RaggedRows {
                    line: lineno,
                    got: parsed.len(),
                    expected,
                });
            }
        } else {
            expected_cols = Some(parsed.len());
        }
        rows.push(parsed);
    }
    let cols = expected_cols.unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err(NrdepError::ParseError {
            line: 1,
            col: 1,
            msg: "no data rows".into(),
        });
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / cols;
    Array2::from_shape_vec((n, cols), flat)
        .map_err(|e| NrdepError::ParseError {
            line: 1,
            col: 1,
            msg: format!("shape error: {e}"),
        })
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `contents` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| NrdepError::io(dir.display().to_string(), e))?;
    }
    let nonce = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let mut tmp: PathBuf = path.to_path_buf();
    let file_name = path
        .file_name()
        .map(|f| f.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    tmp.set_file_name(format!(".{file_name}.tmp.{}.{nonce}", std::process::id()));
    {
        let mut f =
            fs::File::create(&tmp).map_err(|e| NrdepError::io(tmp.display().to_string(), e))?;
        f.write_all(contents.as_bytes())
            .map_err(|e| NrdepError::io(tmp.display().to_string(), e))?;
        f.sync_all()
            .map_err(|e| NrdepError::io(tmp.display().to_string(), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        NrdepError::io(path.display().to_string(), e)
    })
}

/// Serializes a matrix as full-precision CSV (shortest representation that
/// round-trips exactly).
pub fn matrix_to_csv(matrix: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in matrix.rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    atomic_write(path, &matrix_to_csv(matrix))
}

/// Per-round trace CSV: round, gamma, objective parts, gradient norm, and
/// one map-norm column per view.
pub fn trace_to_csv(rounds: &[RoundRecord]) -> String {
    let n_views = rounds.first().map(|r| r.map_norms.len()).unwrap_or(0);
    let mut out = String::from("round,gamma,objective_sim,penalty_kl,total,grad_norm");
    for v in 0..n_views {
        out.push_str(&format!(",w_norm_{v}"));
    }
    out.push('\n');
    for r in rounds {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.round, r.gamma, r.objective_sim, r.penalty_kl, r.total, r.grad_norm
        ));
        for w in &r.map_norms {
            out.push_str(&format!(",{w}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_trace_csv(path: &Path, rounds: &[RoundRecord]) -> Result<()> {
    atomic_write(path, &trace_to_csv(rounds))
}

/// Curve CSV: `k_retrieved,mean_precision,mean_recall`.
pub fn curves_to_csv(report: &RetrievalReport) -> String {
    let mut out = String::from("k_retrieved,mean_precision,mean_recall\n");
    for p in &report.points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.k_retrieved, p.mean_precision, p.mean_recall
        ));
    }
    out
}

pub fn save_curves_csv(path: &Path, report: &RetrievalReport) -> Result<()> {
    atomic_write(path, &curves_to_csv(report))
}

/// Summary CSV with one row per scored method.
pub fn table1_to_csv(summary: &Table1Summary) -> String {
    let mut out = String::from("method,mean,std\n");
    out.push_str(&format!(
        "nrdep,{},{}\n",
        summary.method_mean, summary.method_std
    ));
    out.push_str(&format!("cca,{},{}\n", summary.cca_mean, summary.cca_std));
    out
}

/// Per-dataset scores CSV for a batch run.
pub fn table1_scores_to_csv(summary: &Table1Summary) -> String {
    let mut out = String::from("dataset,nrdep_score,cca_score\n");
    for (i, (m, c)) in summary
        .method_scores
        .iter()
        .zip(&summary.cca_scores)
        .enumerate()
    {
        out.push_str(&format!("{i},{m},{c}\n"));
    }
    out
}

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<String>,
    pub config: C,
}

pub fn save_manifest<C: Serialize>(path: &Path, manifest: &RunManifest<'_, C>) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| NrdepError::ParseError {
        line: 0,
        col: 0,
        msg: format!("manifest serialization failed: {e}"),
    })?;
    atomic_write(path, &json)
}
