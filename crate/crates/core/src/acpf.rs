//! Backward/forward sweep load flow for radial feeders.

use serde::{Deserialize, Serialize};

use crate::distflow::OperatingPoint;
use crate::error::{Error, Result};
use crate::feeder::Feeder;
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Slack allowed when classifying a voltage as inside its bounds.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Discrete and continuous device positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSetting {
    /// Tap position per tap changer, parallel to `Feeder::oltcs`.
    pub n_tr: Vec<i32>,
    /// Switched-in units per capacitor bank, parallel to `Feeder::caps`.
    pub n_cp: Vec<u32>,
    /// Reactive injection per DER, parallel to `Feeder::ders`.
    pub q_g: Vec<f64>,
}

impl DeviceSetting {
    /// DERs idle, banks at their minimum, taps neutral (or the closest allowed position).
    pub fn initial(feeder: &Feeder) -> Self {
        Self {
            n_tr: feeder.oltcs.iter().map(|o| o.neutral()).collect(),
            n_cp: feeder.caps.iter().map(|c| c.n_min).collect(),
            q_g: vec![0.0; feeder.ders.len()],
        }
    }

    pub fn validate(&self, feeder: &Feeder) -> Result<()> {
        if self.n_tr.len() != feeder.oltcs.len()
            || self.n_cp.len() != feeder.caps.len()
            || self.q_g.len() != feeder.ders.len()
        {
            return Err(Error::Dimension("device setting does not match the feeder's devices".into()));
        }
        for (o, &n) in feeder.oltcs.iter().zip(&self.n_tr) {
            if n < o.n_min || n > o.n_max {
                return Err(Error::Device(format!("tap {n} outside [{}, {}]", o.n_min, o.n_max)));
            }
        }
        for (c, &u) in feeder.caps.iter().zip(&self.n_cp) {
            if u < c.n_min || u > c.n_max {
                return Err(Error::Device(format!("cap units {u} outside [{}, {}]", c.n_min, c.n_max)));
            }
        }
        for (d, &q) in feeder.ders.iter().zip(&self.q_g) {
            if !q.is_finite() || q < d.q_min - 1e-12 || q > d.q_max + 1e-12 {
                return Err(Error::Device(format!("q_g {q} outside [{}, {}]", d.q_min, d.q_max)));
            }
        }
        Ok(())
    }

    /// Squared tap ratios, parallel to `Feeder::oltcs`.
    pub fn tap_sq(&self, feeder: &Feeder) -> Vec<f64> {
        feeder.oltcs.iter().zip(&self.n_tr).map(|(o, &n)| o.ratio(n).powi(2)).collect()
    }
}

/// Load-flow result with its convergence trace.
#[derive(Clone, Debug)]
pub struct LoadFlow<T> {
    pub op: OperatingPoint<T>,
    /// Capacitor injection per bank, consistent with the returned flows.
    pub q_cap: Vec<T>,
    /// Residual after every sweep.
    pub trace: Vec<f64>,
}

/// Solves the DistFlow equations with the given injections and device setting.
///
/// `p` and `q_uncontrolled` are nodal injections in canonical order (index `k - 1`);
/// DER and capacitor contributions are added on top of `q_uncontrolled`.
pub fn solve_loadflow<T: Scalar>(
    feeder: &Feeder,
    p: &[T],
    q_uncontrolled: &[T],
    setting: &DeviceSetting,
    tol: f64,
    max_iter: usize,
) -> Result<OperatingPoint<T>> {
    solve_loadflow_traced(feeder, p, q_uncontrolled, setting, tol, max_iter).map(|lf| lf.op)
}

pub fn solve_loadflow_traced<T: Scalar>(
    feeder: &Feeder,
    p: &[T],
    q_uncontrolled: &[T],
    setting: &DeviceSetting,
    tol: f64,
    max_iter: usize,
) -> Result<LoadFlow<T>> {
    let n = feeder.n();
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if p.len() != n || q_uncontrolled.len() != n {
        return Err(Error::Dimension(format!("injection vectors must have length {n}")));
    }
    if p.iter().chain(q_uncontrolled).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("injections must be finite".into()));
    }
    setting.validate(feeder)?;

    let v0 = T::of(feeder.v0);
    let two = T::of(2.0);
    let r: Vec<T> = feeder.branches.iter().map(|b| T::of(b.r)).collect();
    let x: Vec<T> = feeder.branches.iter().map(|b| T::of(b.x)).collect();
    let parent: Vec<usize> = feeder.branches.iter().map(|b| b.from).collect();
    let tap_sq: Vec<T> = setting.tap_sq(feeder).into_iter().map(T::of).collect();
    let mut branch_tap = vec![T::one(); n];
    for (o, t) in feeder.oltcs.iter().zip(&tap_sq) {
        branch_tap[o.branch] = *t;
    }
    let mut q_fixed: Vec<T> = q_uncontrolled.to_vec();
    for (d, &q) in feeder.ders.iter().zip(&setting.q_g) {
        q_fixed[d.node - 1] += T::of(q);
    }
    let cap_b: Vec<(usize, T)> = feeder
        .caps
        .iter()
        .zip(&setting.n_cp)
        .map(|(c, &u)| (c.node - 1, T::of(c.admittance(u))))
        .collect();

    let vpar = |v: &[T], b: usize| if parent[b] == 0 { v0 } else { v[parent[b] - 1] };

    // Flat start through the tap ratios.
    let mut v = vec![v0; n];
    for b in 0..n {
        v[b] = branch_tap[b] * vpar(&v, b);
    }
    let mut big_p = vec![T::zero(); n];
    let mut big_q = vec![T::zero(); n];
    let mut l = vec![T::zero(); n];
    let mut q_eff = q_fixed.clone();
    let mut trace = Vec::new();

    for iter in 0..max_iter {
        q_eff.clone_from(&q_fixed);
        for &(k, b) in &cap_b {
            q_eff[k] += v[k] * b;
        }
        // Backward sweep.
        big_p.clone_from_slice(p);
        big_q.clone_from(&q_eff);
        for b in (0..n).rev() {
            l[b] = (big_p[b] * big_p[b] + big_q[b] * big_q[b]) / v[b];
            let u = parent[b];
            if u > 0 {
                let (dp, dq) = (big_p[b] - r[b] * l[b], big_q[b] - x[b] * l[b]);
                big_p[u - 1] += dp;
                big_q[u - 1] += dq;
            }
        }
        // Forward sweep.
        for b in 0..n {
            let z2 = r[b] * r[b] + x[b] * x[b];
            let vb = branch_tap[b] * vpar(&v, b) + two * (r[b] * big_p[b] + x[b] * big_q[b]) - z2 * l[b];
            if !(vb > T::zero()) {
                return Err(Error::VoltageCollapse { node: feeder.node_ids[b + 1].clone(), iteration: iter + 1 });
            }
            v[b] = vb;
        }
        let mut res = 0.0f64;
        for b in 0..n {
            let s = big_p[b] * big_p[b] + big_q[b] * big_q[b];
            res = res.max((l[b] * v[b] - s).abs().as_f64());
        }
        for &(k, b) in &cap_b {
            let drift = (q_eff[k] - q_fixed[k] - v[k] * b).abs().as_f64();
            res = res.max(drift);
        }
        trace.push(res);
        if !res.is_finite() {
            return Err(Error::NonConvergence { iterations: iter + 1, residual: res });
        }
        if res <= tol {
            let q_cap = cap_b.iter().map(|&(k, _)| q_eff[k] - q_fixed[k]).collect();
            return Ok(LoadFlow {
                op: OperatingPoint {
                    p: p.to_vec(),
                    q: q_eff,
                    big_p,
                    big_q,
                    v,
                    l,
                    tap_sq,
                    v0,
                },
                q_cap,
                trace,
            });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: trace.last().copied().unwrap_or(f64::NAN) })
}

/// Margins of one node to its hard and tight bounds (positive = inside).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeMargin {
    pub node: String,
    pub v: f64,
    pub to_v_min: f64,
    pub to_v_max: f64,
    pub to_v_lo: f64,
    pub to_v_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub margins: Vec<NodeMargin>,
    pub hard_feasible: bool,
    pub tight_feasible: bool,
    pub worst_hard_node: String,
    pub worst_hard_margin: f64,
    pub worst_tight_node: String,
    pub worst_tight_margin: f64,
    /// Total violation of the tight bounds.
    pub tight_violation: f64,
}

pub fn feasibility_report<T: Scalar>(feeder: &Feeder, op: &OperatingPoint<T>) -> FeasibilityReport {
    let mut margins = Vec::with_capacity(op.n());
    let mut worst_hard = (String::new(), f64::INFINITY);
    let mut worst_tight = (String::new(), f64::INFINITY);
    let mut tight_violation = 0.0;
    for (i, v) in op.v.iter().enumerate() {
        let v = v.as_f64();
        let lim = &feeder.limits[i];
        let m = NodeMargin {
            node: feeder.node_ids[i + 1].clone(),
            v,
            to_v_min: v - lim.v_min,
            to_v_max: lim.v_max - v,
            to_v_lo: v - lim.v_lo,
            to_v_hi: lim.v_hi - v,
        };
        let hard = m.to_v_min.min(m.to_v_max);
        let tight = m.to_v_lo.min(m.to_v_hi);
        if hard < worst_hard.1 {
            worst_hard = (m.node.clone(), hard);
        }
        if tight < worst_tight.1 {
            worst_tight = (m.node.clone(), tight);
        }
        tight_violation += (-m.to_v_lo).max(0.0) + (-m.to_v_hi).max(0.0);
        margins.push(m);
    }
    FeasibilityReport {
        margins,
        hard_feasible: worst_hard.1 >= -FEASIBILITY_TOL,
        tight_feasible: worst_tight.1 >= -FEASIBILITY_TOL,
        worst_hard_node: worst_hard.0,
        worst_hard_margin: worst_hard.1,
        worst_tight_node: worst_tight.0,
        worst_tight_margin: worst_tight.1,
        tight_violation,
    }
}
