//! Plain `name value` assignment files used for external-solver round trips
//! and warm starts. One variable per line; `#` starts a comment.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::lp_format::lp_name;
use crate::model::{fmt_num, ModelIR, VarId};

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Sparse assignment: only the variables named in the file.
pub type Assignment = Vec<(VarId, f64)>;

pub fn write_solution(model: &ModelIR, values: &[f64]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} variables", model.num_vars());
    for (v, x) in model.vars().iter().zip(values) {
        let _ = writeln!(out, "{} {}", v.name, fmt_num(*x));
    }
    out
}

/// Parses an assignment file against `model`. Names may use either the
/// canonical bracketed form or the LP-sanitized form. Unknown names are
/// errors; variables that are absent are simply left out of the result.
pub fn read_solution(model: &ModelIR, text: &str) -> Result<Assignment, SolutionError> {
    let sanitized: HashMap<String, VarId> =
        model.vars().iter().enumerate().map(|(i, v)| (lp_name(&v.name), VarId(i))).collect();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let (Some(name), Some(value), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(SolutionError::Parse { line: i + 1, msg: "expected `name value`".into() });
        };
        let id = model
            .var_by_name(name)
            .or_else(|| sanitized.get(name).copied())
            .ok_or_else(|| SolutionError::Parse { line: i + 1, msg: format!("unknown variable `{name}`") })?;
        let x = value
            .parse::<f64>()
            .map_err(|_| SolutionError::Parse { line: i + 1, msg: format!("bad value `{value}`") })?;
        out.push((id, x));
    }
    Ok(out)
}
