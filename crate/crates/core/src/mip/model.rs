use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Var {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub kind: VarKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Affine expression `Σ a_j x_j + c`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(j: usize) -> Self {
        Self { terms: vec![(j, 1.0)], constant: 0.0 }
    }

    pub fn add_term(&mut self, j: usize, a: f64) -> &mut Self {
        if a != 0.0 {
            self.terms.push((j, a));
        }
        self
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &LinExpr, s: f64) -> &mut Self {
        if s != 0.0 {
            self.terms.extend(other.terms.iter().map(|&(j, a)| (j, a * s)));
            self.constant += other.constant * s;
        }
        self
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        let mut e = LinExpr::default();
        e.add_scaled(self, s);
        e
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

/// Linear model `min cᵀx + c0` over bounded continuous and binary variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MipModel {
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
    pub obj: Vec<f64>,
    pub obj_const: f64,
}

impl MipModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64, cost: f64) -> usize {
        self.vars.push(Var { name: name.into(), lo, hi, kind: VarKind::Continuous });
        self.obj.push(cost);
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> usize {
        self.vars.push(Var { name: name.into(), lo: 0.0, hi: 1.0, kind: VarKind::Binary });
        self.obj.push(cost);
        self.vars.len() - 1
    }

    /// Adds a row; duplicate variable entries are merged and zeros dropped.
    pub fn add_row(&mut self, name: impl Into<String>, coefs: &[(usize, f64)], sense: Sense, rhs: f64) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        let mut sorted = coefs.to_vec();
        sorted.sort_by_key(|c| c.0);
        for (j, a) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|c| c.1 != 0.0);
        self.rows.push(Row { name: name.into(), coefs: merged, sense, rhs });
        self.rows.len() - 1
    }

    /// Adds the row `lhs (sense) rhs` between two affine expressions.
    pub fn add_constraint(&mut self, name: impl Into<String>, lhs: &LinExpr, sense: Sense, rhs: &LinExpr) -> usize {
        let mut coefs = lhs.terms.clone();
        coefs.extend(rhs.terms.iter().map(|&(j, a)| (j, -a)));
        self.add_row(name, &coefs, sense, rhs.constant - lhs.constant)
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.obj[var] = cost;
    }

    pub fn fix(&mut self, var: usize, value: f64) {
        self.vars[var].lo = value;
        self.vars[var].hi = value;
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&j| self.vars[j].kind == VarKind::Binary).collect()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.obj.len() != self.vars.len() {
            return Err(Error::Model("objective length differs from variable count".into()));
        }
        for v in &self.vars {
            if v.lo.is_nan() || v.hi.is_nan() || v.lo > v.hi {
                return Err(Error::Model(format!("variable {} has invalid bounds [{}, {}]", v.name, v.lo, v.hi)));
            }
            if v.kind == VarKind::Binary && !(v.lo >= 0.0 && v.hi <= 1.0) {
                return Err(Error::Model(format!("binary {} has bounds outside [0, 1]", v.name)));
            }
        }
        if self.obj.iter().any(|c| !c.is_finite()) || !self.obj_const.is_finite() {
            return Err(Error::Model("objective has non-finite coefficients".into()));
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(Error::Model(format!("row {} has non-finite rhs", r.name)));
            }
            for &(j, a) in &r.coefs {
                if j >= self.vars.len() || !a.is_finite() {
                    return Err(Error::Model(format!("row {} has an invalid entry", r.name)));
                }
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.obj_const + self.obj.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &xv) in self.vars.iter().zip(x) {
            worst = worst.max(v.lo - xv).max(xv - v.hi);
        }
        for (i, r) in self.rows.iter().enumerate() {
            let a = self.row_activity(i, x);
            let viol = match r.sense {
                Sense::Le => a - r.rhs,
                Sense::Ge => r.rhs - a,
                Sense::Eq => (a - r.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Adds an epigraph variable `e ≥ x²` built from secant chords of `x²` over
    /// the bounds of `x`, with `segments` equal pieces plus any `extra`
    /// breakpoints. `e` enters the objective with coefficient one.
    pub fn add_epigraph_quadratic(&mut self, var: usize, segments: usize, extra: &[f64]) -> Result<usize> {
        let (lo, hi) = (self.vars[var].lo, self.vars[var].hi);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Model(format!("variable {} must be bounded for a quadratic epigraph", self.vars[var].name)));
        }
        if segments < 2 && hi > lo {
            return Err(Error::InvalidArgument("at least two secant segments are required".into()));
        }
        let breaks = secant_breakpoints(lo, hi, segments, extra);
        let name = format!("{}_sq", self.vars[var].name);
        let cap = lo.abs().max(hi.abs());
        let e = self.add_var(name.clone(), 0.0, cap * cap, 1.0);
        if breaks.len() == 1 {
            self.fix(e, breaks[0] * breaks[0]);
            return Ok(e);
        }
        for (k, w) in breaks.windows(2).enumerate() {
            // e >= (a + b) x - a b
            self.add_row(format!("{name}_chord{k}"), &[(e, 1.0), (var, -(w[0] + w[1]))], Sense::Ge, -w[0] * w[1]);
        }
        Ok(e)
    }
}

/// Uniform breakpoints over `[lo, hi]` merged with `extra` points inside the range.
pub fn secant_breakpoints(lo: f64, hi: f64, segments: usize, extra: &[f64]) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let mut b: Vec<f64> = (0..=segments).map(|k| lo + (hi - lo) * k as f64 / segments as f64).collect();
    b[segments] = hi;
    for &x in extra {
        if x > lo && x < hi {
            b.push(x);
        }
    }
    b.sort_by(|a, c| a.partial_cmp(c).unwrap_or(std::cmp::Ordering::Equal));
    let tol = 1e-12 * (hi - lo);
    b.dedup_by(|a, c| (*a - *c).abs() <= tol);
    b
}

/// Value of the secant interpolant of `x²` with the given breakpoints.
pub fn secant_value(breaks: &[f64], x: f64) -> f64 {
    breaks
        .windows(2)
        .map(|w| (w[0] + w[1]) * x - w[0] * w[1])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(if breaks.len() == 1 { breaks[0] * breaks[0] } else { f64::NEG_INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_merge_duplicates() {
        let mut m = MipModel::new();
        let x = m.add_var("x", 0.0, 1.0, 1.0);
        m.add_row("r", &[(x, 1.0), (x, 2.0)], Sense::Le, 3.0);
        assert_eq!(m.rows[0].coefs, vec![(x, 3.0)]);
    }

    #[test]
    fn validation_catches_bad_bounds() {
        let mut m = MipModel::new();
        m.add_var("x", 1.0, 0.0, 0.0);
        assert!(m.validate().is_err());
        let mut m = MipModel::new();
        let b = m.add_binary("b", 0.0);
        m.vars[b].hi = 2.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn secant_error_bound() {
        let b = secant_breakpoints(-1.0, 1.0, 16, &[]);
        let mid = (b[3] + b[4]) / 2.0;
        let err = secant_value(&b, mid) - mid * mid;
        assert!(err <= (2.0f64 / 16.0 / 2.0).powi(2) + 1e-15);
        assert!(secant_value(&b, 0.0).abs() < 1e-15);
        assert!((secant_value(&b, b[5]) - b[5] * b[5]).abs() < 1e-15);
    }

    #[test]
    fn extra_breakpoint_is_exact() {
        let b = secant_breakpoints(-0.1, 0.1, 16, &[0.0314]);
        assert!((secant_value(&b, 0.0314) - 0.0314f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn epigraph_rows() {
        let mut m = MipModel::new();
        let q = m.add_var("q", -1.0, 1.0, 0.0);
        let e = m.add_epigraph_quadratic(q, 4, &[]).unwrap();
        assert_eq!(m.rows.len(), 4);
        assert_eq!(m.obj[e], 1.0);
        let mut m = MipModel::new();
        let q = m.add_var("q", f64::NEG_INFINITY, 1.0, 0.0);
        assert!(m.add_epigraph_quadratic(q, 4, &[]).is_err());
    }
}
