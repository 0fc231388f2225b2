//! Mixed-integer encodings of tap changers and switched capacitor banks.
//!
//! Both devices produce a bilinear product of a binary pattern and a voltage
//! variable; each product is linearized exactly with a big-M sandwich that is
//! valid while the voltage stays in `[0, v̄]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feeder::{Cap, Oltc};
use crate::mip::{LinExpr, MipModel, Sense};

/// Tap changer on one branch: `v_i = t_0² v_j + Σ_p Δv_p`.
#[derive(Clone, Debug, Serialize)]
pub struct OltcEncoding {
    /// Squared ratio at the lowest tap.
    pub t0_sq: f64,
    /// `t_p² - t_{p-1}²`, one per binary.
    pub delta_t: Vec<f64>,
    pub n_min: i32,
    pub s: Vec<usize>,
    pub dv: Vec<usize>,
    /// Affine expression for the downstream squared voltage.
    pub v_i: LinExpr,
}

impl OltcEncoding {
    /// Tap position from binary values: `n_min + Σ s_p`.
    pub fn tap_position(&self, x: &[f64]) -> i32 {
        self.n_min + self.s.iter().map(|&j| x[j].round() as i32).sum::<i32>()
    }
}

/// Squared-ratio table of a tap changer: lowest value and increments.
pub fn tap_increments(o: &Oltc) -> Result<(f64, Vec<f64>)> {
    let sq: Vec<f64> = (o.n_min..=o.n_max).map(|n| o.ratio(n).powi(2)).collect();
    let inc: Vec<f64> = sq.windows(2).map(|w| w[1] - w[0]).collect();
    if inc.iter().any(|&d| !(d > 0.0)) || sq[0] <= 0.0 {
        return Err(Error::Device("tap ratios must be positive and strictly increasing".into()));
    }
    Ok((sq[0], inc))
}

/// Emits the tap changer constraints for upstream voltage `v_j`.
///
/// Pass `shared` to reuse the binaries of an earlier encoding of the same device.
pub fn encode_oltc(
    model: &mut MipModel,
    oltc: &Oltc,
    v_j: &LinExpr,
    v_bar: f64,
    tag: &str,
    shared: Option<&[usize]>,
) -> Result<OltcEncoding> {
    let (t0_sq, delta_t) = tap_increments(oltc)?;
    if !(v_bar > 0.0) {
        return Err(Error::Device("big-M voltage must be positive".into()));
    }
    let k = delta_t.len();
    let s: Vec<usize> = match shared {
        Some(s) if s.len() == k => s.to_vec(),
        Some(_) => return Err(Error::Device("shared tap binaries have the wrong length".into())),
        None => {
            let s: Vec<usize> = (0..k).map(|p| model.add_binary(format!("{tag}_s{}", p + 1), 0.0)).collect();
            for p in 1..k {
                model.add_row(format!("{tag}_adj{}", p + 1), &[(s[p], 1.0), (s[p - 1], -1.0)], Sense::Le, 0.0);
            }
            s
        }
    };
    let mut dv = Vec::with_capacity(k);
    let mut v_i = v_j.scaled(t0_sq);
    for p in 0..k {
        let dt = delta_t[p];
        let d = model.add_var(format!("{tag}_dv{}", p + 1), 0.0, dt * v_bar, 0.0);
        dv.push(d);
        v_i.add_term(d, 1.0);
        // Δv_p ≤ s_p v̄ Δt_p
        model.add_row(format!("{tag}_big{}", p + 1), &[(d, 1.0), (s[p], -v_bar * dt)], Sense::Le, 0.0);
        // Δv_p ≤ Δt_p v_j
        let mut upper = LinExpr::var(d);
        upper.add_scaled(v_j, -dt);
        model.add_constraint(format!("{tag}_up{}", p + 1), &upper, Sense::Le, &LinExpr::constant(0.0));
        // Δv_p ≥ Δt_p (v_j - (1 - s_p) v̄)
        let mut lower = LinExpr::var(d);
        lower.add_scaled(v_j, -dt);
        lower.add_term(s[p], -dt * v_bar);
        model.add_constraint(format!("{tag}_lo{}", p + 1), &lower, Sense::Ge, &LinExpr::constant(-dt * v_bar));
    }
    Ok(OltcEncoding { t0_sq, delta_t, n_min: oltc.n_min, s, dv, v_i })
}

/// Capacitor bank at node `i`: `Q_cp = Σ_p Q_s_p` with `Q_s_p = u_p b_p v_i`.
#[derive(Clone, Debug, Serialize)]
pub struct CapEncoding {
    pub steps: Vec<f64>,
    pub u: Vec<usize>,
    pub q_s: Vec<usize>,
    pub q_cp: LinExpr,
}

impl CapEncoding {
    pub fn units(&self, x: &[f64]) -> u32 {
        self.u.iter().map(|&j| x[j].round() as u32).sum()
    }
}

/// Emits the capacitor bank constraints for nodal voltage `v_i`.
pub fn encode_cap(
    model: &mut MipModel,
    cap: &Cap,
    v_i: &LinExpr,
    v_bar: f64,
    tag: &str,
    shared: Option<&[usize]>,
) -> Result<CapEncoding> {
    if cap.steps.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Device("capacitor unit admittance must be positive".into()));
    }
    if !(v_bar > 0.0) {
        return Err(Error::Device("big-M voltage must be positive".into()));
    }
    let k = cap.steps.len();
    let u: Vec<usize> = match shared {
        Some(u) if u.len() == k => u.to_vec(),
        Some(_) => return Err(Error::Device("shared cap binaries have the wrong length".into())),
        None => {
            let u: Vec<usize> = (0..k).map(|p| model.add_binary(format!("{tag}_u{}", p + 1), 0.0)).collect();
            for p in 0..(cap.n_min as usize).min(k) {
                model.fix(u[p], 1.0);
            }
            for p in 1..k {
                model.add_row(format!("{tag}_adj{}", p + 1), &[(u[p], 1.0), (u[p - 1], -1.0)], Sense::Le, 0.0);
            }
            u
        }
    };
    let mut q_s = Vec::with_capacity(k);
    let mut q_cp = LinExpr::default();
    for p in 0..k {
        let b = cap.steps[p];
        let q = model.add_var(format!("{tag}_qs{}", p + 1), 0.0, b * v_bar, 0.0);
        q_s.push(q);
        q_cp.add_term(q, 1.0);
        // Q_s ≤ u v̄ b
        model.add_row(format!("{tag}_big{}", p + 1), &[(q, 1.0), (u[p], -v_bar * b)], Sense::Le, 0.0);
        // Q_s ≤ b v_i
        let mut upper = LinExpr::var(q);
        upper.add_scaled(v_i, -b);
        model.add_constraint(format!("{tag}_up{}", p + 1), &upper, Sense::Le, &LinExpr::constant(0.0));
        // Q_s ≥ b (v_i - (1 - u) v̄)
        let mut lower = LinExpr::var(q);
        lower.add_scaled(v_i, -b);
        lower.add_term(u[p], -b * v_bar);
        model.add_constraint(format!("{tag}_lo{}", p + 1), &lower, Sense::Ge, &LinExpr::constant(-b * v_bar));
    }
    Ok(CapEncoding { steps: cap.steps.clone(), u, q_s, q_cp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{solve_lp, LpStatus};

    fn oltc() -> Oltc {
        Oltc { branch: 0, tau: 0.00625, n_min: -16, n_max: 16 }
    }

    #[test]
    fn increments_telescope() {
        let (t0, inc) = tap_increments(&oltc()).unwrap();
        assert_eq!(inc.len(), 32);
        let top = t0 + inc.iter().sum::<f64>();
        assert!((top - 1.1f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_table_is_rejected() {
        let o = Oltc { branch: 0, tau: -0.00625, n_min: -16, n_max: 16 };
        assert!(tap_increments(&o).is_err());
    }

    #[test]
    fn oltc_patterns_give_exact_products() {
        let o = oltc();
        for n in [o.n_min, -3, 0, 7, o.n_max] {
            let mut m = MipModel::new();
            let vj = m.add_var("vj", 1.0, 1.0, 0.0);
            let enc = encode_oltc(&mut m, &o, &LinExpr::var(vj), 1.1025, "t", None).unwrap();
            let active = (n - o.n_min) as usize;
            for (p, &s) in enc.s.iter().enumerate() {
                m.fix(s, if p < active { 1.0 } else { 0.0 });
            }
            // Minimizing and maximizing v_i over the pattern must agree.
            for sign in [1.0, -1.0] {
                let mut mm = m.clone();
                for &(j, a) in &enc.v_i.terms {
                    mm.obj[j] += sign * a;
                }
                let r = solve_lp(&mm);
                assert_eq!(r.status, LpStatus::Optimal);
                let vi = enc.v_i.eval(&r.x);
                assert!((vi - o.ratio(n).powi(2)).abs() < 1e-9, "n={n} v_i={vi}");
                assert_eq!(enc.tap_position(&r.x), n);
            }
        }
    }

    #[test]
    fn cap_all_on_is_exact() {
        let cap = Cap { node: 1, y_c: 0.05, n_min: 0, n_max: 10, steps: vec![0.05; 10] };
        let mut m = MipModel::new();
        let v = m.add_var("v", 0.97, 0.97, 0.0);
        let enc = encode_cap(&mut m, &cap, &LinExpr::var(v), 1.1025, "c", None).unwrap();
        for &u in &enc.u {
            m.fix(u, 1.0);
        }
        for sign in [1.0, -1.0] {
            let mut mm = m.clone();
            for &(j, a) in &enc.q_cp.terms {
                mm.obj[j] += sign * a;
            }
            let r = solve_lp(&mm);
            assert!((enc.q_cp.eval(&r.x) - 0.97 * 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn cap_minimum_units_are_fixed() {
        let cap = Cap { node: 1, y_c: 0.05, n_min: 2, n_max: 4, steps: vec![0.05; 4] };
        let mut m = MipModel::new();
        let v = m.add_var("v", 1.0, 1.0, 0.0);
        let enc = encode_cap(&mut m, &cap, &LinExpr::var(v), 1.1025, "c", None).unwrap();
        assert_eq!(m.vars[enc.u[0]].lo, 1.0);
        assert_eq!(m.vars[enc.u[1]].lo, 1.0);
        assert_eq!(m.vars[enc.u[2]].lo, 0.0);
    }

    #[test]
    fn bad_cap_admittance() {
        let cap = Cap { node: 1, y_c: 0.0, n_min: 0, n_max: 2, steps: vec![0.0; 2] };
        let mut m = MipModel::new();
        assert!(encode_cap(&mut m, &cap, &LinExpr::constant(1.0), 1.1, "c", None).is_err());
    }
}
