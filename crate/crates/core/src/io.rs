//! Plain-text column files: one row per cell, the cell's left edge first,
//! then one column per control component. Blank lines, `#` comments and a
//! single non-numeric header line are skipped.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::control::{extract_minimal, AdmissibleSet, ControlError, ControlGrid};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("file has no data rows")]
    Empty,
    #[error("cannot infer the horizon: {0}")]
    Horizon(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Times and the `n × M` values of a column file.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
}

pub fn parse_columns(text: &str) -> Result<Columns, IoError> {
    let mut times = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    let mut header_seen = false;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Result<Vec<f64>, _> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let fields = match fields {
            Ok(f) => f,
            Err(_) if !header_seen && times.is_empty() => {
                header_seen = true;
                continue;
            }
            Err(e) => {
                return Err(IoError::Parse {
                    line: no + 1,
                    msg: e.to_string(),
                })
            }
        };
        if fields.len() < 2 {
            return Err(IoError::Parse {
                line: no + 1,
                msg: "expected a time and at least one value".into(),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(IoError::Parse {
                    line: no + 1,
                    msg: format!("expected {w} columns, found {}", fields.len()),
                })
            }
            _ => {}
        }
        times.push(fields[0]);
        data.extend_from_slice(&fields[1..]);
    }
    let Some(width) = width else {
        return Err(IoError::Empty);
    };
    let values = DMatrix::from_row_slice(times.len(), width - 1, &data);
    Ok(Columns { times, values })
}

/// Horizon of a uniform grid whose rows start at the cell left edges
/// `0, Δt, 2Δt, …`.
pub fn infer_horizon(times: &[f64]) -> Result<f64, IoError> {
    if times.len() < 2 {
        return Err(IoError::Horizon("a single row does not fix the cell width".into()));
    }
    let dt = times[1] - times[0];
    let n = times.len();
    let tol = 1e-9 * (dt.abs() * n as f64).max(1.0);
    if !(dt > 0.0) || times[0].abs() > tol {
        return Err(IoError::Horizon("rows must start at 0 and increase".into()));
    }
    for (k, &t) in times.iter().enumerate() {
        if (t - k as f64 * dt).abs() > tol {
            return Err(IoError::Horizon(format!("row {} is off the uniform grid", k + 1)));
        }
    }
    Ok(n as f64 * dt)
}

/// Reads an admissible control; without an explicit horizon it is inferred
/// from the row times.
pub fn read_control(
    text: &str,
    alphabet: Arc<AdmissibleSet>,
    horizon: Option<f64>,
) -> Result<ControlGrid, IoError> {
    let cols = parse_columns(text)?;
    let horizon = match horizon {
        Some(t) => t,
        None => infer_horizon(&cols.times)?,
    };
    Ok(ControlGrid::from_matrix(alphabet, horizon, &cols.values)?)
}

/// Writes rows `t v₁ … v_M` under a space-separated header.
pub fn write_columns<W: Write>(
    mut out: W,
    header: &[&str],
    times: &[f64],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> std::io::Result<()> {
    writeln!(out, "{}", header.join(" "))?;
    for (t, row) in times.iter().zip(rows) {
        write!(out, "{t}")?;
        for v in row {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes a control in the column format with a `t u1 … uM` header.
pub fn write_control<W: Write>(out: W, u: &ControlGrid) -> std::io::Result<()> {
    let names: Vec<String> = (1..=u.alphabet().dim()).map(|k| format!("u{k}")).collect();
    let mut header = vec!["t"];
    header.extend(names.iter().map(String::as_str));
    let times: Vec<f64> = u.cell_starts().collect();
    let rows = (0..u.cells()).map(|j| u.value(j).iter().map(|&x| x as f64).collect());
    write_columns(out, &header, &times, rows)
}

/// Step-plot rows of one component: one row per segment start of the
/// minimal representation, then the horizon with the final value.
pub fn step_rows(u: &ControlGrid, component: usize) -> Vec<(f64, i64)> {
    let m = extract_minimal(u);
    let mut rows = Vec::with_capacity(m.count() + 1);
    rows.push((0.0, m.level(0)[component]));
    for (j, &t) in m.times().iter().enumerate() {
        rows.push((t, m.level(j + 1)[component]));
    }
    rows.push((u.horizon(), m.level(m.count() - 1)[component]));
    rows
}
