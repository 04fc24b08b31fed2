//! CSV emission for logs and curve files.
//!
//! Float columns use Rust's shortest round-trip formatting, so a written
//! log re-parses to bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{MetricRecord, MetricsLog};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: io: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> CsvError {
    CsvError::Io { path: path.display().to_string(), source }
}

pub const LOG_HEADER: &str = "t,nll,correct,task_id,within_task_pos";

/// Write a per-position metrics log as `t,nll,correct,task_id,within_task_pos`.
pub fn write_log_csv(log: &MetricsLog, path: &Path) -> Result<(), CsvError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut emit = |s: String| w.write_all(s.as_bytes()).map_err(|e| io_err(path, e));
    emit(format!("{LOG_HEADER}\n"))?;
    for r in &log.records {
        emit(format!(
            "{},{},{},{},{}\n",
            r.position,
            r.nll,
            u8::from(r.correct),
            r.task_id,
            r.within_task_pos
        ))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Parse a log written by [`write_log_csv`]. The MAC total is not part of
/// the CSV and comes back as 0.
pub fn read_log_csv(path: &Path) -> Result<MetricsLog, CsvError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let parse_err = |line: usize, reason: String| CsvError::Parse {
        path: path.display().to_string(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == LOG_HEADER => {}
        Some((_, other)) => return Err(parse_err(1, format!("unexpected header `{other}`"))),
        None => return Err(parse_err(1, "empty file".into())),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(idx + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let fail = |what: &str| parse_err(idx + 1, format!("bad {what}"));
        records.push(MetricRecord {
            position: fields[0].parse().map_err(|_| fail("position"))?,
            nll: fields[1].parse().map_err(|_| fail("nll"))?,
            correct: match fields[2] {
                "0" => false,
                "1" => true,
                _ => return Err(fail("correct flag")),
            },
            task_id: fields[3].parse().map_err(|_| fail("task_id"))?,
            within_task_pos: fields[4].parse().map_err(|_| fail("within_task_pos"))?,
        });
    }
    Ok(MetricsLog { records, macs_total: 0 })
}

/// Write an `(x, mean, stderr)` curve file.
pub fn write_curve_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<(), CsvError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut emit = |s: String| w.write_all(s.as_bytes()).map_err(|e| io_err(path, e));
    emit("x,mean,stderr\n".to_string())?;
    for (x, mean, stderr) in rows {
        emit(format!("{x},{mean},{stderr}\n"))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
