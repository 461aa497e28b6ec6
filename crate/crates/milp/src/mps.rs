//! Free-format MPS reader and writer.
//!
//! The writer is deterministic: rows appear in constraint order, columns in
//! variable order, and each column lists its nonzeros in row order with the
//! objective entry first. Binaries are wrapped in `INTORG`/`INTEND` marker
//! blocks and declared `BV` in the BOUNDS section. Numbers use the shortest
//! representation that parses back to the same `f64`, so
//! `export(import(export(m)))` is byte-identical to `export(m)`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{fmt_num, LinConstraint, ModelError, ModelIR, Sense, VarId, VarSpec};

const OBJ_ROW: &str = "_obj";

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown section `{section}` at line {line}")]
    UnknownSection { line: usize, section: String },
    #[error("missing ENDATA")]
    MissingEndata,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> MpsError {
    MpsError::Parse { line, msg: msg.into() }
}

pub fn export_mps(model: &ModelIR) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", model.name);
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {OBJ_ROW}");
    for c in model.constraints() {
        let tag = match c.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        let _ = writeln!(out, " {tag} {}", c.name);
    }

    // Column-major view of the constraint matrix, rows in constraint order.
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (r, c) in model.constraints().iter().enumerate() {
        for &(v, a) in &c.terms {
            columns[v.0].push((r, a));
        }
    }
    let obj = model.objective_dense();

    out.push_str("COLUMNS\n");
    let mut in_marker = false;
    let mut marker = 0usize;
    for (j, var) in model.vars().iter().enumerate() {
        if var.is_binary() != in_marker {
            let tag = if var.is_binary() { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, " M{marker} 'MARKER' '{tag}'");
            marker += 1;
            in_marker = var.is_binary();
        }
        let mut wrote = false;
        if obj[j] != 0.0 {
            let _ = writeln!(out, " {} {OBJ_ROW} {}", var.name, fmt_num(obj[j]));
            wrote = true;
        }
        for &(r, a) in &columns[j] {
            let _ = writeln!(out, " {} {} {}", var.name, model.constraints()[r].name, fmt_num(a));
            wrote = true;
        }
        if !wrote {
            // keeps otherwise-empty columns declared
            let _ = writeln!(out, " {} {OBJ_ROW} 0", var.name);
        }
    }
    if in_marker {
        let _ = writeln!(out, " M{marker} 'MARKER' 'INTEND'");
    }

    out.push_str("RHS\n");
    for c in model.constraints() {
        if c.rhs != 0.0 {
            let _ = writeln!(out, " RHS {} {}", c.name, fmt_num(c.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for var in model.vars() {
        write_bounds(&mut out, var);
    }
    out.push_str("ENDATA\n");
    out
}

fn write_bounds(out: &mut String, var: &VarSpec) {
    let name = &var.name;
    if var.is_binary() {
        let _ = writeln!(out, " BV BND {name}");
        return;
    }
    let (lb, ub) = (var.lb, var.ub);
    if lb == ub {
        let _ = writeln!(out, " FX BND {name} {}", fmt_num(lb));
        return;
    }
    if lb == f64::NEG_INFINITY && ub == f64::INFINITY {
        let _ = writeln!(out, " FR BND {name}");
        return;
    }
    if lb == f64::NEG_INFINITY {
        let _ = writeln!(out, " MI BND {name}");
    } else if lb != 0.0 {
        let _ = writeln!(out, " LO BND {name} {}", fmt_num(lb));
    }
    if ub != f64::INFINITY {
        let _ = writeln!(out, " UP BND {name} {}", fmt_num(ub));
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

struct PendingVar {
    name: String,
    integer: bool,
    lb: Option<f64>,
    ub: Option<f64>,
    fixed_binary: bool,
}

pub fn import_mps(text: &str) -> Result<ModelIR, MpsError> {
    let mut name = String::from("model");
    let mut section = Section::None;
    let mut obj_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index = std::collections::HashMap::new();
    let mut vars: Vec<PendingVar> = Vec::new();
    let mut var_index = std::collections::HashMap::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new(); // per row: (var, coef)
    let mut objective: Vec<(usize, f64)> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut in_marker = false;
    let mut ended = false;

    let num = |tok: &str, line: usize| -> Result<f64, MpsError> {
        tok.parse::<f64>().map_err(|_| parse_err(line, format!("bad number `{tok}`")))
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            match toks[0] {
                "NAME" => {
                    if let Some(n) = toks.get(1) {
                        name = n.to_string();
                    }
                    section = Section::None;
                }
                "ROWS" => section = Section::Rows,
                "COLUMNS" => section = Section::Columns,
                "RHS" => section = Section::Rhs,
                "BOUNDS" => section = Section::Bounds,
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => {
                    return Err(MpsError::UnknownSection { line: line_no, section: other.to_string() });
                }
            }
            continue;
        }
        match section {
            Section::None => return Err(parse_err(line_no, "data line outside a section")),
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(parse_err(line_no, "ROWS entry needs a type and a name"));
                }
                let sense = match toks[0] {
                    "N" => {
                        if obj_row.is_some() {
                            return Err(parse_err(line_no, "more than one objective row"));
                        }
                        obj_row = Some(toks[1].to_string());
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    t => return Err(parse_err(line_no, format!("unknown row type `{t}`"))),
                };
                if row_index.insert(toks[1].to_string(), rows.len()).is_some() {
                    return Err(parse_err(line_no, format!("duplicate row `{}`", toks[1])));
                }
                rows.push((toks[1].to_string(), sense));
                entries.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if toks.len() == 3 && toks[1] == "'MARKER'" {
                    match toks[2] {
                        "'INTORG'" => in_marker = true,
                        "'INTEND'" => in_marker = false,
                        t => return Err(parse_err(line_no, format!("unknown marker `{t}`"))),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(parse_err(line_no, "COLUMNS entry needs 3 or 5 fields"));
                }
                let col = toks[0];
                let j = match var_index.get(col) {
                    Some(&j) => j,
                    None => {
                        let j = vars.len();
                        var_index.insert(col.to_string(), j);
                        vars.push(PendingVar {
                            name: col.to_string(),
                            integer: in_marker,
                            lb: None,
                            ub: None,
                            fixed_binary: false,
                        });
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let value = num(pair[1], line_no)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        if value != 0.0 {
                            objective.push((j, value));
                        }
                    } else {
                        let r = *row_index
                            .get(pair[0])
                            .ok_or_else(|| parse_err(line_no, format!("unknown row `{}`", pair[0])))?;
                        entries[r].push((j, value));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(parse_err(line_no, "RHS entry needs 3 or 5 fields"));
                }
                for pair in toks[1..].chunks(2) {
                    let value = num(pair[1], line_no)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        return Err(parse_err(line_no, "objective constants are not supported"));
                    }
                    let r = *row_index
                        .get(pair[0])
                        .ok_or_else(|| parse_err(line_no, format!("unknown row `{}`", pair[0])))?;
                    rhs[r] = value;
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(parse_err(line_no, "BOUNDS entry too short"));
                }
                let j = *var_index
                    .get(toks[2])
                    .ok_or_else(|| parse_err(line_no, format!("unknown column `{}`", toks[2])))?;
                let value = || -> Result<f64, MpsError> {
                    let tok = toks.get(3).ok_or_else(|| parse_err(line_no, "bound value missing"))?;
                    num(tok, line_no)
                };
                let v = &mut vars[j];
                match toks[0] {
                    "UP" => v.ub = Some(value()?),
                    "LO" => v.lb = Some(value()?),
                    "FX" => {
                        let x = value()?;
                        v.lb = Some(x);
                        v.ub = Some(x);
                    }
                    "FR" => {
                        v.lb = Some(f64::NEG_INFINITY);
                        v.ub = Some(f64::INFINITY);
                    }
                    "MI" => v.lb = Some(f64::NEG_INFINITY),
                    "PL" => v.ub = Some(f64::INFINITY),
                    "BV" => v.fixed_binary = true,
                    t => return Err(parse_err(line_no, format!("unsupported bound type `{t}`"))),
                }
            }
        }
    }
    if !ended {
        return Err(MpsError::MissingEndata);
    }

    let mut model = ModelIR::new(name);
    for v in &vars {
        let spec = if v.fixed_binary {
            VarSpec::binary(v.name.clone())
        } else if v.integer {
            let (lb, ub) = (v.lb.unwrap_or(0.0), v.ub.unwrap_or(1.0));
            if lb != 0.0 || ub != 1.0 {
                return Err(MpsError::Parse {
                    line: 0,
                    msg: format!("general integer column `{}` is not supported", v.name),
                });
            }
            VarSpec::binary(v.name.clone())
        } else {
            VarSpec::continuous(v.name.clone(), v.lb.unwrap_or(0.0), v.ub.unwrap_or(f64::INFINITY))
        };
        model.add_var(spec)?;
    }
    for (r, (row_name, sense)) in rows.into_iter().enumerate() {
        let terms = entries[r].iter().map(|&(j, a)| (VarId(j), a)).collect();
        model.add_constraint(LinConstraint::new(row_name, terms, sense, rhs[r]))?;
    }
    model.set_objective(objective.into_iter().map(|(j, a)| (VarId(j), a)).collect())?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinExpr;

    fn sample() -> ModelIR {
        let mut m = ModelIR::new("sample");
        let x = m.add_continuous("x", -1.0, 1.0).unwrap();
        let b = m.add_binary("b[0]").unwrap();
        let f = m.add_continuous("f", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let _empty = m.add_continuous("unused", 0.0, f64::INFINITY).unwrap();
        m.add_row("c0", LinExpr::new().with(x, 1.0).with(b, 0.5), Sense::Le, 1.5).unwrap();
        m.add_row("c1", LinExpr::new().with(f, -2.0).with(x, 1e-7), Sense::Ge, -3.0).unwrap();
        m.add_row("c2", LinExpr::new().with(b, 1.0).with(f, 1.0), Sense::Eq, 0.0).unwrap();
        m.set_objective(vec![(x, 1.0), (f, 0.25)]).unwrap();
        m
    }

    #[test]
    fn one_row_model_layout() {
        let mut m = ModelIR::new("one");
        let x = m.add_continuous("x", 0.0, 4.0).unwrap();
        m.add_row("c", LinExpr::new().with(x, 1.0), Sense::Ge, 1.0).unwrap();
        m.set_objective(vec![(x, 1.0)]).unwrap();
        let text = export_mps(&m);
        let rows: Vec<&str> = text
            .lines()
            .skip_while(|l| *l != "ROWS")
            .skip(1)
            .take_while(|l| l.starts_with(' '))
            .collect();
        assert_eq!(rows, vec![" N _obj", " G c"]);
        assert!(text.ends_with("ENDATA\n"));
    }

    #[test]
    fn binaries_are_wrapped_in_markers() {
        let text = export_mps(&sample());
        let lines: Vec<&str> = text.lines().collect();
        let start = lines.iter().position(|l| l.contains("'INTORG'")).unwrap();
        let end = lines.iter().position(|l| l.contains("'INTEND'")).unwrap();
        assert!(start < end);
        assert!(lines[start + 1..end].iter().all(|l| l.starts_with(" b[0] ")));
        assert!(text.contains(" BV BND b[0]"));
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = export_mps(&m);
        let back = import_mps(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(export_mps(&back), text);
    }

    #[test]
    fn missing_endata_is_an_error() {
        let text = export_mps(&sample()).replace("ENDATA\n", "");
        assert!(matches!(import_mps(&text), Err(MpsError::MissingEndata)));
    }

    #[test]
    fn unknown_section_reports_line() {
        let text = "NAME x\nROWS\n N obj\nRANGES\nENDATA\n";
        match import_mps(text) {
            Err(MpsError::UnknownSection { line, section }) => {
                assert_eq!(line, 4);
                assert_eq!(section, "RANGES");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        let text = "NAME x\nROWS\n N obj\n L c\nCOLUMNS\n x c abc\nENDATA\n";
        match import_mps(text) {
            Err(MpsError::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_rows_section_gives_no_constraints() {
        let text = "NAME e\nROWS\n N obj\nCOLUMNS\n x obj 1\nRHS\nBOUNDS\n UP BND x 2\nENDATA\n";
        let m = import_mps(text).unwrap();
        assert_eq!(m.num_constraints(), 0);
        assert_eq!(m.num_vars(), 1);
        assert_eq!(m.var(VarId(0)).ub, 2.0);
    }
}
