//! File formats.
//!
//! Matrices are plain text: a header line `rows cols`, then one line per row
//! of whitespace-separated values written with 17 significant digits. Masks
//! use the same layout with 0/1 entries. Fit reports are JSON documents
//! stamped with [`REPORT_FORMAT`] and [`REPORT_VERSION`]. Traces are CSV with
//! the header `iteration,objective,tol,bound,lambda_1,...,lambda_K`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskMatrix};
use crate::mm::{FitReport, Termination};

pub const REPORT_FORMAT: &str = "ardnmf-report";
pub const REPORT_VERSION: u32 = 1;

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Splits a line into (1-based column, token) pairs.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace()
        .map(move |t| (t.as_ptr() as usize - line.as_ptr() as usize + 1, t))
}

/// Parses the text matrix format without checking signs.
pub fn parse_matrix_any_sign(text: &str) -> Result<DenseMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, 1, "no rows"))?;
    let dims: Vec<(usize, &str)> = tokens(header).collect();
    if dims.len() != 2 {
        return Err(parse_err(hline, 1, "header must be `rows cols`"));
    }
    let dim = |(col, t): (usize, &str)| {
        t.parse::<usize>()
            .map_err(|_| parse_err(hline, col, format!("bad dimension `{t}`")))
    };
    let (rows, cols) = (dim(dims[0])?, dim(dims[1])?);
    if rows == 0 || cols == 0 {
        return Err(parse_err(hline, 1, "no rows"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (lineno, line) in lines {
        if seen == rows {
            return Err(parse_err(lineno, 1, format!("more than {rows} rows")));
        }
        let mut count = 0;
        for (col, t) in tokens(line) {
            let x: f64 = t
                .parse()
                .map_err(|_| parse_err(lineno, col, format!("bad number `{t}`")))?;
            if !x.is_finite() {
                return Err(parse_err(lineno, col, format!("non-finite value `{t}`")));
            }
            count += 1;
            if count > cols {
                return Err(parse_err(lineno, col, format!("more than {cols} values")));
            }
            data.push(x);
        }
        if count < cols {
            return Err(parse_err(
                lineno,
                line.len() + 1,
                format!("expected {cols} values, found {count}"),
            ));
        }
        seen += 1;
    }
    if seen < rows {
        return Err(parse_err(
            text.lines().count() + 1,
            1,
            format!("expected {rows} rows, found {seen}"),
        ));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

/// Parses a nonnegative data matrix.
pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let m = parse_matrix_any_sign(text)?;
    m.check_nonnegative()?;
    Ok(m)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        for (j, x) in m.row(r).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{x:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskMatrix> {
    MaskMatrix::from_dense(&parse_matrix_any_sign(&fs::read_to_string(path)?)?)
}

pub fn write_mask(path: impl AsRef<Path>, m: &MaskMatrix) -> Result<()> {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<&str> = (0..m.cols())
            .map(|c| if m.is_observed(r, c) { "1" } else { "0" })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// A vector of values, one per line.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let mut out = String::new();
    for x in v {
        let _ = writeln!(out, "{x:.16e}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for (col, t) in tokens(line) {
            out.push(
                t.parse()
                    .map_err(|_| parse_err(i + 1, col, format!("bad number `{t}`")))?,
            );
        }
    }
    Ok(out)
}

/// Persisted form of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format: String,
    pub version: u32,
    pub config: serde_json::Value,
    pub k_eff: usize,
    pub termination: Termination,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

impl ReportDocument {
    pub fn new(report: &FitReport, config: &impl Serialize, trace: Option<&Path>) -> Result<Self> {
        Ok(Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            config: serde_json::to_value(config)?,
            k_eff: report.k_eff,
            termination: report.termination,
            iterations: report.iterations,
            wall_time_s: report.wall_time,
            initial_objective: report.initial_objective,
            final_objective: report.final_objective(),
            lambda: report.final_lambda().map(<[f64]>::to_vec).unwrap_or_default(),
            bound: report.bound,
            trace: trace.map(|p| p.display().to_string()),
        })
    }
}

pub fn write_report(
    path: impl AsRef<Path>,
    report: &FitReport,
    config: &impl Serialize,
    trace: Option<&Path>,
) -> Result<()> {
    let doc = ReportDocument::new(report, config, trace)?;
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
    if doc.format != REPORT_FORMAT || doc.version != REPORT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported report {} v{}",
            doc.format, doc.version
        )));
    }
    Ok(doc)
}

/// Header of a trace for `k` components.
pub fn trace_header(k: usize) -> String {
    let mut h = String::from("iteration,objective,tol,bound");
    for i in 1..=k {
        let _ = write!(h, ",lambda_{i}");
    }
    h
}

/// One CSV row per iteration. `bound` is 0 for runs without a relevance bound.
pub fn write_trace(path: impl AsRef<Path>, report: &FitReport) -> Result<()> {
    let k = report.lambda_trace.first().map_or(0, Vec::len);
    if report.lambda_trace.iter().any(|l| l.len() != k)
        || report.objective_trace.len() != report.lambda_trace.len()
        || report.tol_trace.len() != report.lambda_trace.len()
    {
        return Err(Error::InvalidConfig("trace rows are not rectangular".into()));
    }
    let bound = report.bound.unwrap_or(0.0);
    let mut out = trace_header(k);
    out.push('\n');
    for (i, lambda) in report.lambda_trace.iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{},{}",
            i + 1,
            report.objective_trace[i],
            report.tol_trace[i],
            bound
        );
        for l in lambda {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn report() -> FitReport {
        FitReport {
            k_eff: 2,
            iterations: 3,
            termination: Termination::Tolerance,
            initial_objective: 10.0,
            objective_trace: vec![9.0, 8.5, 8.25],
            tol_trace: vec![0.5, 0.1, 1e-8],
            lambda_trace: vec![vec![1.0, 0.5], vec![1.1, 0.4], vec![1.2, 0.3]],
            bound: Some(0.25),
            wall_time: 0.125,
        }
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let mut rng = seeded_rng(1);
        let m = DenseMatrix::from_fn(5, 7, |_, _| rng.random::<f64>() * 10f64.powi(rng.random_range(-200..200)));
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.shape(), (5, 7));
        assert!(back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn negative_entry_names_cell() {
        match parse_matrix("2 2\n1 2\n3 -4\n") {
            Err(Error::NegativeEntry { row: 1, col: 1, value }) => assert_eq!(value, -4.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file() {
        let err = parse_matrix("").unwrap_err();
        assert!(err.to_string().contains("no rows"));
        assert!(parse_matrix("\n  \n").unwrap_err().to_string().contains("no rows"));
    }

    #[test]
    fn parse_errors_locate_the_token() {
        match parse_matrix("1 3\n1 x 3\n") {
            Err(Error::Parse { line: 2, column: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_matrix("2 2\n1 2\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_matrix("1 2\n1 2 3\n"), Err(Error::Parse { line: 2, column: 5, .. })));
        assert!(matches!(parse_matrix("1 2\n1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_matrix("1\n1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.txt");
        let m = MaskMatrix::from_vec(2, 3, vec![true, false, true, true, true, false]).unwrap();
        write_mask(&path, &m).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "2 3\n1 0 1\n1 1 0\n");
        assert_eq!(read_mask(&path).unwrap(), m);
        fs::write(&path, "1 2\n1 2\n").unwrap();
        assert!(read_mask(&path).is_err());
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trace = dir.path().join("trace.csv");
        write_trace(&trace, &report()).unwrap();
        let path = dir.path().join("report.json");
        let cfg = serde_json::json!({"beta": 1.0, "K": 2});
        write_report(&path, &report(), &cfg, Some(&trace)).unwrap();
        let doc = read_report(&path).unwrap();
        assert_eq!(doc.k_eff, 2);
        assert_eq!(doc.iterations, 3);
        assert_eq!(doc.termination, Termination::Tolerance);
        assert_eq!(doc.wall_time_s, 0.125);
        assert_eq!(doc.final_objective, 8.25);
        assert_eq!(doc.lambda, vec![1.2, 0.3]);
        assert_eq!(doc.config, cfg);
        assert!(Path::new(doc.trace.as_ref().unwrap()).exists());

        write_report(&path, &report(), &cfg, None).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains("\"trace\""));
        assert_eq!(read_report(&path).unwrap().trace, None);
    }

    #[test]
    fn trace_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace(&path, &report()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,objective,tol,bound,lambda_1,lambda_2");
        assert_eq!(lines.len(), 4);
        for line in &lines[1..] {
            let fields: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(fields.len(), 4 + 2);
            assert!(fields[4..].iter().all(|&l| l >= fields[3]));
        }
        assert_eq!(lines[3], "3,8.25,0.00000001,0.25,1.2,0.3");
    }

    #[test]
    fn vector_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = vec![0.1, 1.0 / 3.0, 2e-300];
        write_vector(&path, &v).unwrap();
        assert_eq!(read_vector(&path).unwrap(), v);
    }
}
