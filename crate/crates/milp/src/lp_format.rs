//! CPLEX-LP text writer.
//!
//! LP-format identifiers may not contain brackets, so indexed names such as
//! `alpha[0][1][2]` are written as `alpha_0_1_2` (see [`lp_name`]). The
//! solution reader in [`crate::solution`] accepts either spelling.

use std::fmt::Write as _;

use crate::model::{fmt_num, ModelIR, VarId};

const TERMS_PER_LINE: usize = 8;

/// LP-safe spelling of a model name.
pub fn lp_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for ch in name.chars() {
        match ch {
            '[' => out.push('_'),
            ']' => {}
            c => out.push(c),
        }
    }
    out
}

fn write_terms(out: &mut String, model: &ModelIR, terms: &[(VarId, f64)]) {
    for (i, &(v, a)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        if i == 0 && sign == '+' {
            let _ = write!(out, " {} {}", fmt_num(a), lp_name(&model.var(v).name));
        } else {
            let _ = write!(out, " {sign} {} {}", fmt_num(a.abs()), lp_name(&model.var(v).name));
        }
    }
}

fn bound_text(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        fmt_num(v)
    }
}

pub fn export_lp(model: &ModelIR) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str("Minimize\n obj:");
    write_terms(&mut out, model, model.objective());
    out.push_str("\nSubject To\n");
    for c in model.constraints() {
        let _ = write!(out, " {}:", lp_name(&c.name));
        if c.terms.is_empty() {
            if let Some(first) = model.vars().first() {
                let _ = write!(out, " 0 {}", lp_name(&first.name));
            }
        }
        write_terms(&mut out, model, &c.terms);
        let _ = writeln!(out, " {} {}", c.sense.symbol(), fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in model.vars().iter().filter(|v| !v.is_binary()) {
        let name = lp_name(&v.name);
        if v.lb == v.ub {
            let _ = writeln!(out, " {name} = {}", fmt_num(v.lb));
        } else if v.lb == f64::NEG_INFINITY && v.ub == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else if v.lb == 0.0 && v.ub == f64::INFINITY {
            continue;
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", bound_text(v.lb), bound_text(v.ub));
        }
    }
    let binaries: Vec<&str> = model.vars().iter().filter(|v| v.is_binary()).map(|v| v.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let names: Vec<String> = chunk.iter().map(|n| lp_name(n)).collect();
            let _ = writeln!(out, " {}", names.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, Sense};

    #[test]
    fn minimal_model_sections() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("x", 0.0, 10.0).unwrap();
        m.add_row("c0", LinExpr::new().with(x, 1.0), Sense::Ge, 1.0).unwrap();
        m.set_objective(vec![(x, 1.0)]).unwrap();
        let text = export_lp(&m);
        for needle in ["Minimize", "Subject To", "End", " c0: 1 x >= 1", " 0 <= x <= 10"] {
            assert!(text.contains(needle), "missing {needle:?} in\n{text}");
        }
    }

    #[test]
    fn binaries_listed_and_names_sanitized() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("alpha[0][1][2]", -1.0, 1.0).unwrap();
        let b = m.add_binary("h[0][0][0]").unwrap();
        m.add_row("bigm[0][0]", LinExpr::new().with(x, 1.0).with(b, -12.0), Sense::Le, 0.0).unwrap();
        let text = export_lp(&m);
        assert!(text.contains("Binaries\n h_0_0_0\n"));
        assert!(text.contains(" bigm_0_0: 1 alpha_0_1_2 - 12 h_0_0_0 <= 0"));
        assert!(!text.contains('['));
    }

    #[test]
    fn long_rows_wrap() {
        let mut m = ModelIR::new("t");
        let mut e = LinExpr::new();
        for i in 0..20 {
            let v = m.add_continuous(format!("x{i}"), 0.0, 1.0).unwrap();
            e.add(v, 1.0);
        }
        m.add_row("sum", e, Sense::Le, 5.0).unwrap();
        let text = export_lp(&m);
        assert!(text.lines().all(|l| l.len() < 255));
        assert_eq!(export_lp(&m), text);
    }
}
