use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mlr_core::metrics::{mann_whitney_u, MannWhitney};
use serde::Serialize;

use crate::benchmark::ExperimentReport;
use crate::curve::CurveTable;
use crate::sweep::SweepRow;

pub const REPORT_JSON: &str = "report.json";
pub const PER_REPETITION_CSV: &str = "per_repetition.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MW_CSV: &str = "mw_matrix.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

#[derive(Serialize)]
struct MwPair<'a> {
    scenario: &'a str,
    metric: &'a str,
    procedure_a: String,
    procedure_b: String,
    p_value: f64,
}

/// Writes the full report and its flat tables; returns the paths written.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths: Vec<PathBuf> = [REPORT_JSON, PER_REPETITION_CSV, SUMMARY_CSV, MW_CSV].iter().map(|f| dir.join(f)).collect();
    write_json(&paths[0], report)?;
    write_csv(&paths[1], &report.per_repetition)?;
    write_csv(&paths[2], &report.summaries)?;
    let mut pairs = Vec::new();
    for m in &report.mw_matrix {
        for (i, a) in m.procedures.iter().enumerate() {
            for (j, b) in m.procedures.iter().enumerate().skip(i + 1) {
                let p_value = m.p_values[i][j].expect("off-diagonal entry");
                pairs.push(MwPair { scenario: &m.scenario, metric: &m.metric, procedure_a: a.to_string(), procedure_b: b.to_string(), p_value });
            }
        }
    }
    write_csv(&paths[3], &pairs)?;
    Ok(paths)
}

pub fn write_curve(dir: &Path, table: &CurveTable) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(CURVES_CSV);
    write_csv(&path, &table.rows)?;
    Ok(path)
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(SWEEP_CSV);
    write_csv(&path, rows)?;
    Ok(path)
}

/// Which two samples of a CSV file to compare.
#[derive(Debug, Clone, PartialEq)]
pub enum Columns {
    /// Two numeric columns of a wide table.
    Wide { a: String, b: String },
    /// Two procedures of a `per_repetition.csv`, on one metric, optionally
    /// restricted to one scenario.
    Long { a: String, b: String, metric: String, scenario: Option<String> },
}

fn parse_cell(raw: &str, col: &str, row: usize) -> anyhow::Result<Option<f64>> {
    if raw.trim().is_empty() {
        return Ok(None);
    }
    raw.trim().parse().map(Some).with_context(|| format!("column {col:?}, row {row}: {raw:?} is not a number"))
}

/// Two-sided rank test between two samples read from `path`. Empty cells
/// are skipped.
pub fn compare_columns(path: &Path, cols: &Columns) -> anyhow::Result<MannWhitney> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let index = |name: &str| {
        headers.iter().position(|h| h == name).with_context(|| format!("{} has no column {name:?}", path.display()))
    };
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    match cols {
        Columns::Wide { a, b } => {
            let (ia, ib) = (index(a)?, index(b)?);
            for (row, rec) in rdr.records().enumerate() {
                let rec = rec?;
                sa.extend(parse_cell(&rec[ia], a, row + 1)?);
                sb.extend(parse_cell(&rec[ib], b, row + 1)?);
            }
        }
        Columns::Long { a, b, metric, scenario } => {
            let (ip, im, is) = (index("procedure")?, index(metric)?, index("scenario")?);
            for (row, rec) in rdr.records().enumerate() {
                let rec = rec?;
                if scenario.as_deref().is_some_and(|s| s != &rec[is]) {
                    continue;
                }
                let target = if &rec[ip] == a.as_str() {
                    &mut sa
                } else if &rec[ip] == b.as_str() {
                    &mut sb
                } else {
                    continue;
                };
                target.extend(parse_cell(&rec[im], metric, row + 1)?);
            }
        }
    }
    if sa.is_empty() || sb.is_empty() {
        bail!("one of the compared samples is empty ({} vs {} values)", sa.len(), sb.len());
    }
    Ok(mann_whitney_u(&sa, &sb)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_and_long_tables() {
        let dir = tempfile::tempdir().unwrap();
        let wide = dir.path().join("w.csv");
        fs::write(&wide, "x,y\n1,10\n2,11\n3,\n").unwrap();
        let t = compare_columns(&wide, &Columns::Wide { a: "x".into(), b: "y".into() }).unwrap();
        assert_eq!(t.u, 0.0);
        assert!(t.exact);

        let long = dir.path().join("l.csv");
        fs::write(&long, "scenario,procedure,r2_test\nA,P,0.1\nA,Q,0.9\nB,P,5\nA,P,0.2\nA,Q,0.8\n").unwrap();
        let cols = |s: Option<&str>| Columns::Long {
            a: "P".into(),
            b: "Q".into(),
            metric: "r2_test".into(),
            scenario: s.map(String::from),
        };
        assert_eq!(compare_columns(&long, &cols(Some("A"))).unwrap().u, 0.0);
        assert_eq!(compare_columns(&long, &cols(None)).unwrap().u, 2.0);

        assert!(compare_columns(&wide, &Columns::Wide { a: "x".into(), b: "z".into() }).is_err());
        fs::write(&wide, "x,y\n1,oops\n").unwrap();
        let err = compare_columns(&wide, &Columns::Wide { a: "x".into(), b: "y".into() }).unwrap_err();
        assert!(format!("{err:#}").contains("\"y\", row 1"));
    }
}
