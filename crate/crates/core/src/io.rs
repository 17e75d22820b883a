//! CSV and JSON artifacts. Every float is written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Number, Value};

use crate::error::{Error, Result};
use crate::lyapunov::MonitorReport;
use crate::model::{Grid, ScalarField};
use crate::pde::SimulationTrace;

/// `1.2345678901234567e0` style; round-trips every finite `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number with 17 significant digits, `null` when not finite.
pub fn json_f64(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(Number::from_str(&fmt_f64(x)).expect("formatted float is a JSON number"))
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(fmt_f64).collect::<Vec<_>>().join(",")
}

/// A field as text: one row in 1D, one row per y index in 2D.
pub fn matrix_csv(field: &ScalarField) -> String {
    let grid = field.grid();
    let nx = grid.counts()[0];
    let mut out = String::new();
    for row in field.values().chunks(nx) {
        out.push_str(&join(row.iter().copied()));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, matrix_csv(field))?;
    Ok(())
}

/// Parses a CSV matrix into row-major values (rows are y, columns x).
pub fn parse_matrix(text: &str) -> Result<(Vec<f64>, usize, usize)> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for cell in line.split(',') {
            let cell = cell.trim();
            let x: f64 = cell
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad number {cell:?}", lineno + 1)))?;
            values.push(x);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Config(format!(
                    "line {}: {width} columns, expected {c}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    Ok((values, rows, cols.unwrap_or(0)))
}

/// Reads a matrix file as a field on `grid`; shape must match.
pub fn read_field(path: &Path, grid: &Grid) -> Result<ScalarField> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (values, rows, cols) = parse_matrix(&text)?;
    let counts = grid.counts();
    let expected_rows = if grid.dim() == 2 { counts[1] } else { 1 };
    if rows != expected_rows || cols != counts[0] {
        return Err(Error::GridMismatch(format!(
            "{}: {rows}x{cols} matrix, grid needs {expected_rows}x{}",
            path.display(),
            counts[0]
        )));
    }
    ScalarField::new(*grid, values)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), fmt_f64)
}

pub fn trace_csv(trace: &SimulationTrace) -> String {
    let observed = trace.has_observations();
    let mut out = String::from("t,u_min,u_max,v_min,v_max,rhs_sup");
    if observed {
        out.push_str(",G,disc_margin");
    }
    out.push('\n');
    for r in &trace.records {
        out.push_str(&join([r.t, r.u_min, r.u_max, r.v_min, r.v_max, r.rhs_sup].into_iter()));
        if observed {
            let _ = write!(out, ",{},{}", opt(r.lyapunov), opt(r.disc_margin));
        }
        out.push('\n');
    }
    out
}

pub fn monitor_csv(report: &MonitorReport) -> String {
    let mut out = String::from("t,G,dG,min_margin,min_margin_node\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.g),
            fmt_f64(r.dg),
            fmt_f64(r.min_margin),
            r.min_margin_node
        );
    }
    out
}

/// Writes `<prefix>_u_<index>.csv` and `<prefix>_v_<index>.csv` per stored state.
pub fn write_snapshots(dir: &Path, prefix: &str, trace: &SimulationTrace) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (index, state) in trace.states.iter().enumerate() {
        for (name, field) in [("u", &state.u), ("v", &state.v)] {
            let path = dir.join(format!("{prefix}_{name}_{index}.csv"));
            write_matrix(&path, field)?;
            written.push(path);
        }
    }
    Ok(written)
}
