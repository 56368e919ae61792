//! Report emission: a machine-readable results file (one JSON record per
//! run), an aligned markdown table, and `x,acc,p,r,f1` series files for
//! sweep plots.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::corpus::TrendLabel;
use crate::Real;

use super::{EvalError, MetricsRow, SignificanceResult};

/// One evaluated run: a label, the full config echo, metrics, and (when a
/// baseline shares the same day set) a paired significance result.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub label: String,
    pub config: serde_json::Value,
    pub positive_class: TrendLabel,
    pub metrics: MetricsRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<SignificanceVs>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignificanceVs {
    pub baseline: String,
    #[serde(flatten)]
    pub result: SignificanceResult,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write one JSON record per run, stable field order.
pub fn write_results(runs: &[RunReport], path: &Path) -> Result<(), EvalError> {
    let mut out = Vec::new();
    for run in runs {
        serde_json::to_writer(&mut out, run).expect("report serializes");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

fn fmt(v: Real) -> String {
    format!("{v:.4}")
}

/// Write the aligned human-readable table.
pub fn write_table(runs: &[RunReport], path: &Path) -> Result<(), EvalError> {
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    write_table_to(runs, &mut file).map_err(io_err(path))
}

pub fn write_table_to(runs: &[RunReport], out: &mut dyn Write) -> std::io::Result<()> {
    let mut rows = vec![[
        "run".to_string(),
        "acc".into(),
        "p".into(),
        "r".into(),
        "f1".into(),
        "n_days".into(),
        "fallback".into(),
        "p_value".into(),
    ]];
    for run in runs {
        let m = &run.metrics;
        rows.push([
            run.label.clone(),
            fmt(m.acc),
            fmt(m.precision),
            fmt(m.recall),
            fmt(m.f1),
            m.n_days.to_string(),
            fmt(m.fallback_rate),
            run.significance
                .as_ref()
                .map(|s| format!("{:.4} (vs {})", s.result.p_value, s.baseline))
                .unwrap_or_else(|| "-".into()),
        ]);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap())
        .collect();
    let positive = runs
        .first()
        .map(|r| r.positive_class.to_string())
        .unwrap_or_else(|| "Up".into());
    writeln!(out, "positive class: {positive}")?;
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        writeln!(out, "| {} |", cells.join(" | "))?;
        if i == 0 {
            let dashes: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            writeln!(out, "| {} |", dashes.join(" | "))?;
        }
    }
    Ok(())
}

/// One row of a sweep series file.
#[derive(Debug, Clone)]
pub struct SeriesRow {
    pub x: String,
    pub acc: Real,
    pub p: Real,
    pub r: Real,
    pub f1: Real,
}

impl SeriesRow {
    pub fn from_metrics(x: impl ToString, m: &MetricsRow) -> Self {
        SeriesRow {
            x: x.to_string(),
            acc: m.acc,
            p: m.precision,
            r: m.recall,
            f1: m.f1,
        }
    }
}

/// Write a `x,acc,p,r,f1` series file suitable for plotting.
pub fn write_series(rows: &[SeriesRow], path: &Path) -> Result<PathBuf, EvalError> {
    let mut text = String::from("x,acc,p,r,f1\n");
    for row in rows {
        text.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            row.x, row.acc, row.p, row.r, row.f1
        ));
    }
    std::fs::write(path, text).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(label: &str, acc: Real) -> RunReport {
        RunReport {
            label: label.into(),
            config: serde_json::json!({"method": label}),
            positive_class: TrendLabel::Up,
            metrics: MetricsRow {
                acc,
                precision: 0.9,
                recall: 0.5,
                f1: 0.642857,
                n_days: 191,
                fallback_rate: 0.0,
                zero_denominator: false,
            },
            significance: None,
        }
    }

    #[test]
    fn table_has_one_row_per_method() {
        let runs = vec![run("standard", 0.5975), run("voting", 0.6236), run("dtv", 0.6659)];
        let mut buf = Vec::new();
        write_table_to(&runs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("positive class: Up"));
        for label in ["standard", "voting", "dtv"] {
            assert_eq!(text.lines().filter(|l| l.contains(label)).count(), 1);
        }
    }

    #[test]
    fn series_file_has_expected_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let rows: Vec<SeriesRow> = [10, 20, 30, 40, 60, 80]
            .iter()
            .map(|n| SeriesRow {
                x: n.to_string(),
                acc: 0.6,
                p: 0.8,
                r: 0.6,
                f1: 0.69,
            })
            .collect();
        write_series(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,acc,p,r,f1"));
        assert_eq!(lines.count(), 6);
    }

    #[test]
    fn results_file_is_one_json_record_per_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        write_results(&[run("dtv", 0.66), run("voting", 0.62)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["label"], "dtv");
        assert_eq!(v["metrics"]["n_days"], 191);
    }
}
