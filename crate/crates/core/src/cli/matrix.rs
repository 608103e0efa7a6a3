//! Plain-text matrix files: one row per line, entries like `0.5-0.5i`
//! separated by whitespace or commas. `#` starts a comment.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Operator;

/// Unitarity tolerance for matrices read from text, which usually carry
/// only a few decimals.
pub const FILE_UNITARY_TOL: f64 = 1e-6;

fn parse_entry(tok: &str, line: usize) -> Result<Complex64> {
    let t = tok.trim();
    let t = t.strip_suffix('j').map(|s| format!("{s}i")).unwrap_or_else(|| t.to_string());
    t.parse::<Complex64>()
        .ok()
        .filter(|z| z.re.is_finite() && z.im.is_finite())
        .ok_or_else(|| Error::Parse { line, message: format!("bad complex entry `{tok}`") })
}

pub fn parse_matrix(text: &str) -> Result<Operator> {
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let row = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| parse_entry(t, line))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
        last_line = line;
    }
    let dim = rows.len();
    if dim == 0 {
        return Err(Error::Parse { line: 0, message: "empty matrix".into() });
    }
    if rows[0].len() != dim {
        return Err(Error::Parse {
            line: last_line,
            message: format!("matrix is {dim}x{} , not square", rows[0].len()),
        });
    }
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::Parse { line: last_line, message: format!("dimension {dim} is not a power of two") });
    }
    let op = Operator::from_rows(&rows)?;
    if !op.is_unitary(FILE_UNITARY_TOL) {
        return Err(Error::InvalidArgument("matrix is not unitary".into()));
    }
    Ok(op)
}

pub fn load_matrix(path: &Path) -> Result<Operator> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text)
}

/// Writes with enough digits to parse back exactly.
pub fn format_matrix(op: &Operator) -> String {
    let mut out = String::new();
    for r in 0..op.dim() {
        let row: Vec<String> = (0..op.dim())
            .map(|c| {
                let z = op.get(r, c);
                format!(
                    "{:?}{}{:?}i",
                    z.re,
                    if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) { "-" } else { "+" },
                    z.im.abs()
                )
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
