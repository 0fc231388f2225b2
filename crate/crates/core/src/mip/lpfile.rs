//! CPLEX-style LP text export.

use std::fmt::Write;

use super::model::{MipModel, Sense, VarKind};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect()
}

fn term(out: &mut String, first: &mut bool, coef: f64, name: &str) {
    let _ = write!(out, " {coef:+e} {name}");
    *first = false;
}

pub fn write_lp(model: &MipModel) -> String {
    let names: Vec<String> = model.vars.iter().enumerate().map(|(j, v)| format!("{}_{j}", sanitize(&v.name))).collect();
    let mut out = String::from("\\ generated by vpo\nMinimize\n obj:");
    let mut first = true;
    for (j, &c) in model.obj.iter().enumerate() {
        if c != 0.0 {
            term(&mut out, &mut first, c, &names[j]);
        }
    }
    if model.obj_const != 0.0 {
        let _ = write!(out, " {:+e} constant", model.obj_const);
    } else if first {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    for (i, r) in model.rows.iter().enumerate() {
        let _ = write!(out, " {}_{i}:", sanitize(&r.name));
        let mut first = true;
        for &(j, a) in &r.coefs {
            term(&mut out, &mut first, a, &names[j]);
        }
        if first {
            out.push_str(" 0 constant");
        }
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {:e}", r.rhs);
    }
    out.push_str("Bounds\n");
    if model.obj_const != 0.0 {
        out.push_str(" constant = 1\n");
    }
    for (v, name) in model.vars.iter().zip(&names) {
        let lo = if v.lo == f64::NEG_INFINITY { "-inf".to_string() } else { format!("{:e}", v.lo) };
        let hi = if v.hi == f64::INFINITY { "+inf".to_string() } else { format!("{:e}", v.hi) };
        let _ = writeln!(out, " {lo} <= {name} <= {hi}");
    }
    let bins: Vec<&String> = model
        .vars
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for n in bins {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_contains_sections() {
        let mut m = MipModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY, 1.0);
        let b = m.add_binary("pick me", -2.0);
        m.add_row("cap", &[(x, 1.0), (b, 3.0)], Sense::Ge, 1.5);
        let text = write_lp(&m);
        for s in ["Minimize", "Subject To", "Bounds", "Binaries", "pick_me_1", "cap_0:", ">= 1.5e0", "+inf", "End"] {
            assert!(text.contains(s), "{s} missing in\n{text}");
        }
    }
}
