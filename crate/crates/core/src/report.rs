//! Report emission: a CSV of per-lambda ratios plus a JSON summary.
//!
//! Output is byte-stable: the same report always serializes to the same
//! bytes, and the CSV round-trips through [`parse_report_csv`] without
//! losing a single bit of any float.

use crate::error::{Error, Result};
use crate::harness::SweepReport;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "lambda,inf_ratio,median_ratio";

/// Path of the JSON summary written alongside a CSV report.
pub fn summary_path_for(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.json")
}

/// Render the per-lambda table. `{:?}` on `f64` prints the shortest
/// representation that parses back to the identical bit pattern, which is
/// what makes the round-trip guarantee hold.
pub fn render_csv(report: &SweepReport) -> String {
    let mut out = String::with_capacity(64 * (report.lambdas.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, lambda) in report.lambdas.iter().enumerate() {
        writeln!(
            out,
            "{:?},{:?},{:?}",
            lambda, report.inf_ratios[i], report.median_ratios[i]
        )
        .expect("string write");
    }
    out
}

/// Render the summary record: fit results plus the full config echo.
pub fn render_summary(report: &SweepReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Write the CSV to `csv_path` and the summary next to it.
pub fn emit_report(report: &SweepReport, csv_path: &Path) -> Result<()> {
    std::fs::write(csv_path, render_csv(report))?;
    std::fs::write(summary_path_for(csv_path), render_summary(report))?;
    Ok(())
}

/// Read back a CSV written by [`emit_report`]. Strict: the header and the
/// three-column shape are enforced, and every field must parse as `f64`.
pub fn parse_report_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    parse_csv_text(&text)
}

pub fn parse_csv_text(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                col: 1,
                msg: format!(
                    "expected header {CSV_HEADER:?}, found {:?}",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                col: 1,
                msg: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 3];
        for (j, field) in fields.iter().enumerate() {
            vals[j] = field.parse::<f64>().map_err(|e| Error::Parse {
                line: idx + 1,
                col: j + 1,
                msg: format!("bad float {field:?}: {e}"),
            })?;
        }
        rows.push((vals[0], vals[1], vals[2]));
    }
    Ok(rows)
}
