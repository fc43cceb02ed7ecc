use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{EvalError, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(EvalError::UnknownFormat(s.to_string())),
        }
    }
}

fn stat_cells(row: &super::ReportRow) -> [String; 5] {
    match row.stats {
        Some(s) => [
            s.n.to_string(),
            format!("{:.4}", s.mean),
            format!("{:.4}", s.median),
            format!("{:.4}", s.best25),
            format!("{:.4}", s.worst25),
        ],
        None => ["0".into(), "-".into(), "-".into(), "-".into(), "-".into()],
    }
}

fn table(report: &EvalReport) -> String {
    let header = [
        "Camera",
        "Estimator",
        "Mode",
        "N",
        "Mean",
        "Median",
        "Best 25%",
        "Worst 25%",
        "Excluded",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &report.rows {
        let mut row = vec![r.camera.clone(), r.estimator.clone(), r.mode.to_string()];
        row.extend(stat_cells(r));
        row.push(r.excluded.len().to_string());
        cells.push(row);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (k, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c < 3 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if k == 0 {
            let _ = writeln!(
                out,
                "{}",
                widths
                    .iter()
                    .map(|w| "-".repeat(*w))
                    .collect::<Vec<_>>()
                    .join("  ")
            );
        }
    }
    out
}

fn csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "camera",
        "estimator",
        "mode",
        "n",
        "mean",
        "median",
        "best25",
        "worst25",
        "excluded",
    ];
    // Writing into a Vec cannot fail.
    w.write_record(header).expect("in-memory write");
    for r in &report.rows {
        let (n, stats) = match r.stats {
            Some(s) => (
                s.n.to_string(),
                [s.mean, s.median, s.best25, s.worst25].map(|v| format!("{v:?}")),
            ),
            None => ("0".into(), std::array::from_fn(|_| String::new())),
        };
        let mut rec = vec![r.camera.clone(), r.estimator.clone(), r.mode.to_string(), n];
        rec.extend(stats);
        rec.push(r.excluded.len().to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Serialize a report. Output depends only on the report contents.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String, EvalError> {
    Ok(match format {
        ReportFormat::Table => table(report),
        ReportFormat::Csv => csv(report),
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|e| EvalError::Json(e.to_string()))? + "\n"
        }
    })
}

pub fn emit_report(
    report: &EvalReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), EvalError> {
    let text = render_report(report, format)?;
    std::fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}
