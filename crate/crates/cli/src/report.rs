//! Sweep reports: one CSV row per run plus per-cell summaries.
//!
//! The first line of every report is a schema comment; bump
//! [`SCHEMA_VERSION`] whenever the columns change.

use std::io::Write;

use hypernet::models::Family;
use serde::{Deserialize, Serialize};

use crate::args::LabelMode;

pub const SCHEMA_VERSION: u32 = 1;
pub const HEADER: [&str; 9] = [
    "dataset",
    "family",
    "depth",
    "label_mode",
    "ratio",
    "seed",
    "final_acc",
    "best_acc",
    "runtime_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dataset: String,
    pub family: Family,
    pub depth: usize,
    pub label_mode: LabelMode,
    /// Label ratio the split was resampled at; `None` keeps the dataset's split.
    pub ratio: Option<f64>,
    pub seed: u64,
    /// NaN for a failed run.
    pub final_acc: f64,
    pub best_acc: f64,
    pub runtime_s: Option<f64>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.final_acc.is_nan()
    }

    fn sort_key(&self) -> (Family, usize, f64, u64) {
        (self.family, self.depth, self.ratio.unwrap_or(0.0), self.seed)
    }
}

/// On-disk form. Every field is text so the formatting is fixed here.
#[derive(Serialize, Deserialize)]
struct Record {
    dataset: String,
    family: String,
    depth: usize,
    label_mode: String,
    ratio: String,
    seed: u64,
    final_acc: String,
    best_acc: String,
    runtime_s: String,
}

fn fmt_acc(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

fn parse_f64(field: &str, what: &str) -> Result<f64, String> {
    field
        .parse()
        .map_err(|_| format!("cannot parse {what} '{field}'"))
}

impl From<&SweepRow> for Record {
    fn from(r: &SweepRow) -> Self {
        Record {
            dataset: r.dataset.clone(),
            family: r.family.to_string(),
            depth: r.depth,
            label_mode: r.label_mode.to_string(),
            ratio: r.ratio.map(|v| v.to_string()).unwrap_or_default(),
            seed: r.seed,
            final_acc: fmt_acc(r.final_acc),
            best_acc: fmt_acc(r.best_acc),
            runtime_s: r.runtime_s.map(|t| format!("{t:.3}")).unwrap_or_default(),
        }
    }
}

impl TryFrom<Record> for SweepRow {
    type Error = String;

    fn try_from(r: Record) -> Result<Self, String> {
        let label_mode = match r.label_mode.as_str() {
            "full" => LabelMode::Full,
            "balanced" => LabelMode::Balanced,
            other => return Err(format!("unknown label_mode '{other}'")),
        };
        let optional = |s: &str, what| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s, what).map(Some)
            }
        };
        Ok(SweepRow {
            dataset: r.dataset,
            family: r.family.parse().map_err(|e: hypernet::Error| e.to_string())?,
            depth: r.depth,
            label_mode,
            ratio: optional(&r.ratio, "ratio")?,
            seed: r.seed,
            final_acc: parse_f64(&r.final_acc, "final_acc")?,
            best_acc: parse_f64(&r.best_acc, "best_acc")?,
            runtime_s: optional(&r.runtime_s, "runtime_s")?,
        })
    }
}

/// Mean and sample standard deviation over the successful runs of one
/// (family, depth, ratio) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub family: Family,
    pub depth: usize,
    pub ratio: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn new(mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).expect("finite ratios"));
        Self { rows }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), String> {
        let mut out = out;
        writeln!(out, "# hypernet sweep report, schema v{SCHEMA_VERSION}").map_err(|e| e.to_string())?;
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(Record::from(row)).map_err(|e| e.to_string())?;
        }
        if self.rows.is_empty() {
            w.write_record(HEADER).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let schema = lines.next().unwrap_or_default();
        let expected = format!("schema v{SCHEMA_VERSION}");
        if !(schema.starts_with('#') && schema.ends_with(&expected)) {
            return Err(format!("missing or unsupported schema line '{schema}'"));
        }
        let body = &text[schema.len()..];
        let mut reader = csv::Reader::from_reader(body.trim_start().as_bytes());
        let header = reader.headers().map_err(|e| e.to_string())?;
        if header.iter().ne(HEADER) {
            return Err(format!("unexpected header {header:?}"));
        }
        let rows = reader
            .deserialize::<Record>()
            .enumerate()
            .map(|(i, rec)| {
                rec.map_err(|e| e.to_string())
                    .and_then(SweepRow::try_from)
                    .map_err(|e| format!("row {}: {e}", i + 1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }

    /// One summary per cell, in row order.
    pub fn cells(&self) -> Vec<CellSummary> {
        let mut cells: Vec<CellSummary> = Vec::new();
        let mut accs: Vec<Vec<f64>> = Vec::new();
        for row in &self.rows {
            let idx = cells.iter().position(|c| {
                c.family == row.family && c.depth == row.depth && c.ratio == row.ratio
            });
            let idx = idx.unwrap_or_else(|| {
                cells.push(CellSummary {
                    family: row.family,
                    depth: row.depth,
                    ratio: row.ratio,
                    runs: 0,
                    failures: 0,
                    mean: f64::NAN,
                    std: f64::NAN,
                });
                accs.push(Vec::new());
                cells.len() - 1
            });
            cells[idx].runs += 1;
            if row.failed() {
                cells[idx].failures += 1;
            } else {
                accs[idx].push(row.final_acc);
            }
        }
        for (cell, a) in cells.iter_mut().zip(&accs) {
            (cell.mean, cell.std) = mean_std(a);
        }
        cells
    }

    pub fn cell(&self, family: Family, depth: usize, ratio: Option<f64>) -> Option<CellSummary> {
        self.cells()
            .into_iter()
            .find(|c| c.family == family && c.depth == depth && c.ratio == ratio)
    }

    /// Human-readable per-cell table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in self.cells() {
            let ratio = c.ratio.map(|r| format!(" ratio={r}")).unwrap_or_default();
            let ok = c.runs - c.failures;
            let acc = if ok > 1 {
                format!("{:.4} ± {:.4}", c.mean, c.std)
            } else {
                format!("{:.4}", c.mean)
            };
            out.push_str(&format!(
                "{:<13} depth={:<3}{ratio}  acc={acc}  runs={ok}",
                c.family.as_str(),
                c.depth
            ));
            if c.failures > 0 {
                out.push_str(&format!("  failed={}", c.failures));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean and sample (n - 1) standard deviation; NaN when undefined.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(family: Family, depth: usize, seed: u64, acc: f64) -> SweepRow {
        SweepRow {
            dataset: "d".into(),
            family,
            depth,
            label_mode: LabelMode::Full,
            ratio: None,
            seed,
            final_acc: acc,
            best_acc: acc,
            runtime_s: None,
        }
    }

    #[test]
    fn rows_are_sorted_and_round_trip() {
        let report = SweepReport::new(vec![
            row(Family::ResHgnn, 2, 0, 0.5),
            row(Family::Hgnn, 4, 1, 0.25),
            row(Family::Hgnn, 4, 0, f64::NAN),
            row(Family::Hgnn, 2, 0, 0.75),
        ]);
        let order: Vec<(Family, usize, u64)> =
            report.rows.iter().map(|r| (r.family, r.depth, r.seed)).collect();
        assert_eq!(
            order,
            vec![
                (Family::Hgnn, 2, 0),
                (Family::Hgnn, 4, 0),
                (Family::Hgnn, 4, 1),
                (Family::ResHgnn, 2, 0)
            ]
        );
        let text = report.to_csv_string();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert_eq!(lines.next().unwrap(), HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "d,hgnn,2,full,,0,0.750000,0.750000,");
        assert_eq!(lines.next().unwrap(), "d,hgnn,4,full,,0,nan,nan,");

        let back = SweepReport::from_csv(&text).unwrap();
        assert_eq!(back.rows.len(), 4);
        assert!(back.rows[1].failed());
        assert_eq!(back.rows[0], report.rows[0]);
    }

    #[test]
    fn empty_report_still_has_a_header() {
        let text = SweepReport::default().to_csv_string();
        assert_eq!(text.lines().nth(1).unwrap(), HEADER.join(","));
        assert!(SweepReport::from_csv(&text).unwrap().rows.is_empty());
    }

    #[test]
    fn cells_skip_failures() {
        let report = SweepReport::new(vec![
            row(Family::Hgnn, 2, 0, 0.5),
            row(Family::Hgnn, 2, 1, 0.7),
            row(Family::Hgnn, 2, 2, f64::NAN),
        ]);
        let c = report.cell(Family::Hgnn, 2, None).unwrap();
        assert_eq!((c.runs, c.failures), (3, 1));
        assert!((c.mean - 0.6).abs() < 1e-12);
        assert!((c.std - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(report.summary().contains("failed=1"));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(SweepReport::from_csv("dataset,family\n").is_err());
        let text = format!("# x schema v{SCHEMA_VERSION}\n{}\nd,gcn,2,full,,0,0.5,0.5,\n", HEADER.join(","));
        assert!(SweepReport::from_csv(&text).is_err());
    }
}
