//! Volt/VAr positioning: the inner-approximation MILP and the successive
//! enhancement loop around it.
//!
//! Every iteration linearises the current-voltage relation at the last load
//! flow solution, solves the MILP for a new device setting, and checks that
//! setting with the nonlinear load flow. Voltages carry two chains: `V⁺`
//! built from the lower current bound and `V⁻` from the upper one, so any
//! setting accepted by the MILP keeps the true voltages inside `[V⁻, V⁺]`.

use std::time::Instant;

use log::{debug, info};
use serde::Serialize;

use crate::acpf::{feasibility_report, solve_loadflow_traced, DeviceSetting, FeasibilityReport};
use crate::devices::{encode_cap, encode_oltc, CapEncoding, OltcEncoding};
use crate::distflow::{build_matrices, certify_h_nonneg, DistFlowMatrices, OperatingPoint};
use crate::envelope::{build_envelopes, delta_box, taylor_at, EnvelopeBounds, EnvelopeOptions, QuadMode};
use crate::error::{Error, Result};
use crate::feeder::{Feeder, LoadProfile};
use crate::mip::{solve_mip_with_hint, LinExpr, MipModel, MipOptions, MipSolution, MipStatus, Sense};

/// Tolerance for the monotone-objective and feasibility flags.
pub const MONOTONE_TOL: f64 = 1e-9;
pub const FEASIBLE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VpoOptions {
    pub epsilon: f64,
    pub max_iters: usize,
    #[serde(skip)]
    pub envelope: EnvelopeOptions,
    /// Uniform secant pieces of each `q_g²` term.
    pub qg_segments: usize,
    #[serde(skip)]
    pub mip: MipOptions,
    pub loadflow_tol: f64,
    pub loadflow_max_iter: usize,
}

impl Default for VpoOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iters: 20,
            envelope: EnvelopeOptions::default(),
            qg_segments: 16,
            mip: MipOptions::default(),
            loadflow_tol: 1e-12,
            loadflow_max_iter: 500,
        }
    }
}

/// The point the MILP is built around.
#[derive(Clone, Copy, Debug)]
pub struct BasePoint<'a> {
    pub op: &'a OperatingPoint<f64>,
    pub setting: &'a DeviceSetting,
    pub p: &'a [f64],
    pub q_uncontrolled: &'a [f64],
}

/// Assembled MILP with the indices needed to read a solution back.
#[derive(Clone, Debug, Serialize)]
pub struct VpoProblem {
    #[serde(skip)]
    pub model: MipModel,
    pub q_g: Vec<usize>,
    pub q_g_sq: Vec<usize>,
    pub v_plus: Vec<usize>,
    pub v_minus: Vec<usize>,
    pub slack_plus: Vec<usize>,
    pub slack_minus: Vec<usize>,
    /// `l_max - l0` per branch.
    pub l_excess: Vec<usize>,
    pub oltc_plus: Vec<OltcEncoding>,
    pub oltc_minus: Vec<OltcEncoding>,
    pub cap_plus: Vec<CapEncoding>,
    pub cap_minus: Vec<CapEncoding>,
    pub num_vars: usize,
    pub num_rows: usize,
    pub num_binaries: usize,
}

/// Decoded MILP solution.
#[derive(Clone, Debug, Serialize)]
pub struct P3Solution {
    pub setting: DeviceSetting,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub slack_plus: Vec<f64>,
    pub slack_minus: Vec<f64>,
    /// Capacitor injection per bank on the `V⁺` chain.
    pub q_cap: Vec<f64>,
    pub objective: f64,
}

impl VpoProblem {
    pub fn decode(&self, feeder: &Feeder, x: &[f64]) -> P3Solution {
        let pick = |ix: &[usize]| ix.iter().map(|&j| x[j]).collect::<Vec<f64>>();
        let q_g = feeder
            .ders
            .iter()
            .zip(&self.q_g)
            .map(|(d, &j)| x[j].clamp(d.q_min, d.q_max))
            .collect();
        P3Solution {
            setting: DeviceSetting {
                n_tr: self.oltc_plus.iter().map(|e| e.tap_position(x)).collect(),
                n_cp: self.cap_plus.iter().map(|e| e.units(x)).collect(),
                q_g,
            },
            v_plus: pick(&self.v_plus),
            v_minus: pick(&self.v_minus),
            slack_plus: pick(&self.slack_plus),
            slack_minus: pick(&self.slack_minus),
            q_cap: self.cap_plus.iter().map(|e| e.q_cp.eval(x)).collect(),
            objective: self.model.objective(x),
        }
    }

    /// Binary values that reproduce `setting`, for seeding the search.
    pub fn hint(&self, setting: &DeviceSetting) -> Vec<(usize, f64)> {
        let mut h = Vec::new();
        for (e, &n) in self.oltc_plus.iter().zip(&setting.n_tr) {
            let on = (n - e.n_min) as usize;
            h.extend(e.s.iter().enumerate().map(|(p, &j)| (j, if p < on { 1.0 } else { 0.0 })));
        }
        for (e, &n) in self.cap_plus.iter().zip(&setting.n_cp) {
            h.extend(e.u.iter().enumerate().map(|(p, &j)| (j, if p < n as usize { 1.0 } else { 0.0 })));
        }
        h
    }
}

/// Objective of a setting at its load-flow solution: `Σ q_g² + Σ α (V - V̄)⁺ + α (V̲ - V)⁺`.
pub fn true_objective(feeder: &Feeder, setting: &DeviceSetting, op: &OperatingPoint<f64>) -> f64 {
    let der: f64 = setting.q_g.iter().map(|q| q * q).sum();
    der + violation_terms(feeder, op).iter().zip(&feeder.limits).map(|(v, l)| l.alpha * v).sum::<f64>()
}

/// Tight-bound violation per node.
fn violation_terms(feeder: &Feeder, op: &OperatingPoint<f64>) -> Vec<f64> {
    op.v
        .iter()
        .zip(&feeder.limits)
        .map(|(&v, l)| (v - l.v_hi).max(0.0) + (l.v_lo - v).max(0.0))
        .collect()
}

/// Builds the inner-approximation MILP around `base`.
pub fn assemble_p3(
    feeder: &Feeder,
    m: &DistFlowMatrices<f64>,
    env: &EnvelopeBounds<f64>,
    base: BasePoint<'_>,
    qg_segments: usize,
) -> Result<VpoProblem> {
    let n = feeder.n();
    let cert = certify_h_nonneg(m);
    if !cert.pass {
        return Err(Error::CertificateFailed { min_entry: cert.min_h });
    }
    if env.branches.len() != n || base.op.n() != n || base.p.len() != n || base.q_uncontrolled.len() != n {
        return Err(Error::Model("envelope data missing for some branches".into()));
    }
    base.setting.validate(feeder)?;
    let op = base.op;
    let mut model = MipModel::new();

    let mut q_g = Vec::with_capacity(feeder.ders.len());
    let mut q_g_sq = Vec::with_capacity(feeder.ders.len());
    for (i, d) in feeder.ders.iter().enumerate() {
        let j = model.add_var(format!("qg{}", feeder.node_ids[d.node]), d.q_min, d.q_max, 0.0);
        q_g_sq.push(model.add_epigraph_quadratic(j, qg_segments, &[base.setting.q_g[i]])?);
        q_g.push(j);
    }

    let mut v_plus = Vec::with_capacity(n);
    let mut v_minus = Vec::with_capacity(n);
    let mut slack_plus = Vec::with_capacity(n);
    let mut slack_minus = Vec::with_capacity(n);
    for k in 0..n {
        let id = &feeder.node_ids[k + 1];
        let lim = &feeder.limits[k];
        v_plus.push(model.add_var(format!("vp{id}"), lim.v_min, lim.v_max, 0.0));
        v_minus.push(model.add_var(format!("vm{id}"), lim.v_min, lim.v_max, 0.0));
        slack_plus.push(model.add_var(format!("sp{id}"), 0.0, (lim.v_max - lim.v_hi).max(0.0), lim.alpha));
        slack_minus.push(model.add_var(format!("sm{id}"), 0.0, (lim.v_lo - lim.v_min).max(0.0), lim.alpha));
    }
    for k in 0..n {
        let id = &feeder.node_ids[k + 1];
        let lim = &feeder.limits[k];
        model.add_row(format!("hi{id}"), &[(v_plus[k], 1.0), (slack_plus[k], -1.0)], Sense::Le, lim.v_hi);
        model.add_row(format!("lo{id}"), &[(v_minus[k], 1.0), (slack_minus[k], 1.0)], Sense::Ge, lim.v_lo);
    }

    // Tap changers: the V⁻ chain shares the binaries of the V⁺ chain.
    let mut oltc_plus = Vec::with_capacity(feeder.oltcs.len());
    let mut oltc_minus = Vec::with_capacity(feeder.oltcs.len());
    for (o, oltc) in feeder.oltcs.iter().enumerate() {
        let u = m.parent[m.oltc_branch[o]];
        let tag = format!("tap{}", feeder.branches[oltc.branch].id);
        let (up, um, v_bar) = if u == 0 {
            (LinExpr::constant(m.v0), None, m.v0)
        } else {
            (LinExpr::var(v_plus[u - 1]), Some(LinExpr::var(v_minus[u - 1])), feeder.limits[u - 1].v_max)
        };
        let plus = encode_oltc(&mut model, oltc, &up, v_bar, &tag, None)?;
        let minus = match um {
            None => plus.clone(),
            Some(um) => encode_oltc(&mut model, oltc, &um, v_bar, &format!("{tag}m"), Some(&plus.s))?,
        };
        oltc_plus.push(plus);
        oltc_minus.push(minus);
    }

    let mut cap_plus = Vec::with_capacity(feeder.caps.len());
    let mut cap_minus = Vec::with_capacity(feeder.caps.len());
    for cap in &feeder.caps {
        let k = cap.node - 1;
        let tag = format!("cap{}", feeder.node_ids[cap.node]);
        let v_bar = feeder.limits[k].v_max;
        let plus = encode_cap(&mut model, cap, &LinExpr::var(v_plus[k]), v_bar, &tag, None)?;
        let minus = encode_cap(&mut model, cap, &LinExpr::var(v_minus[k]), v_bar, &format!("{tag}m"), Some(&plus.u))?;
        cap_plus.push(plus);
        cap_minus.push(minus);
    }

    // Nodal reactive injections per chain.
    let node_q = |caps: &[CapEncoding]| {
        let mut q: Vec<LinExpr> = base.q_uncontrolled.iter().map(|&c| LinExpr::constant(c)).collect();
        for (d, &j) in feeder.ders.iter().zip(&q_g) {
            q[d.node - 1].add_term(j, 1.0);
        }
        for (c, e) in feeder.caps.iter().zip(caps) {
            q[c.node - 1].add_scaled(&e.q_cp, 1.0);
        }
        q
    };
    let q_plus = node_q(&cap_plus);
    let q_minus = node_q(&cap_minus);
    // Branch reactive flow change `C (q - q0)`; loss changes are not propagated.
    let flow_change = |q: &[LinExpr]| -> Vec<LinExpr> {
        (0..n)
            .map(|b| {
                let mut e = LinExpr::default();
                for k in 0..n {
                    if m.c[(b, k)] != 0.0 {
                        e.add_scaled(&q[k], m.c[(b, k)]);
                        e.constant -= m.c[(b, k)] * op.q[k];
                    }
                }
                e
            })
            .collect()
    };
    let dq_plus = flow_change(&q_plus);
    let dq_minus = flow_change(&q_minus);

    // Lower current bound on the V⁺ chain, as expressions.
    let l_lower: Vec<LinExpr> = (0..n)
        .map(|b| {
            let t = &env.branches[b].taylor;
            let mut e = dq_plus[b].scaled(t.j[1]);
            e.add_term(v_plus[b], t.j[2]);
            e.constant += t.l0 - t.j[2] * t.v0;
            e
        })
        .collect();

    // Upper current bound on the V⁻ chain: l0 + t with t ≥ 2|Jᵀδ| and t ≥ κ (w1² + w2²).
    let mut l_excess = Vec::with_capacity(n);
    for b in 0..n {
        let be = &env.branches[b];
        let t = &be.taylor;
        let id = &feeder.node_ids[b + 1];
        let tvar = model.add_var(format!("lx{id}"), 0.0, f64::INFINITY, 0.0);
        l_excess.push(tvar);
        let dv = {
            let mut e = LinExpr::var(v_minus[b]);
            e.constant -= t.v0;
            e
        };
        let mut g = dq_minus[b].scaled(t.j[1]);
        g.add_scaled(&dv, t.j[2]);
        let tv = LinExpr::var(tvar);
        model.add_constraint(format!("lxa{id}"), &tv, Sense::Ge, &g.scaled(2.0));
        model.add_constraint(format!("lxb{id}"), &tv, Sense::Ge, &g.scaled(-2.0));
        match env.options.mode {
            QuadMode::Const => {
                model.vars[tvar].lo = be.quad_bound.max(0.0);
            }
            QuadMode::Pwl => {
                let w1 = dv.scaled(-t.p0 / t.v0);
                let mut w2 = dq_minus[b].clone();
                w2.add_scaled(&dv, -t.q0 / t.v0);
                let mut quad = LinExpr::default();
                for (name, w, breaks) in [("w1", w1, &be.breaks1), ("w2", w2, &be.breaks2)] {
                    let lo = breaks[0];
                    let hi = breaks[breaks.len() - 1];
                    let wv = model.add_var(format!("{name}{id}"), lo, hi, 0.0);
                    model.add_constraint(format!("{name}{id}"), &LinExpr::var(wv), Sense::Eq, &w);
                    if breaks.len() < 2 {
                        continue;
                    }
                    let e = model.add_var(format!("{name}sq{id}"), 0.0, lo.abs().max(hi.abs()).powi(2), 0.0);
                    for (c, &(slope, icpt)) in crate::envelope::BranchEnvelope::<f64>::chords(breaks).iter().enumerate() {
                        model.add_row(format!("{name}sq{id}_{c}"), &[(e, 1.0), (wv, -slope)], Sense::Ge, icpt);
                    }
                    quad.add_term(e, be.kappa);
                }
                if !quad.terms.is_empty() {
                    model.add_constraint(format!("lxq{id}"), &tv, Sense::Ge, &quad);
                }
            }
        }
    }

    // Voltage chains.
    let mp_p = m.m_p_seg.matvec(base.p);
    for k in 0..n {
        let id = &feeder.node_ids[k + 1];
        for (chain, v, q, oltc) in [("vp", &v_plus, &q_plus, &oltc_plus), ("vm", &v_minus, &q_minus, &oltc_minus)] {
            let mut rhs = match m.seg_oltc[k] {
                Some(o) => oltc[o].v_i.clone(),
                None => LinExpr::constant(m.v0),
            };
            rhs.constant += mp_p[k];
            for j in 0..n {
                let a = m.m_q_seg[(k, j)];
                if a != 0.0 {
                    rhs.add_scaled(&q[j], a);
                }
            }
            for b in 0..n {
                let h = m.h_seg[(k, b)];
                if h == 0.0 {
                    continue;
                }
                if chain == "vp" {
                    rhs.add_scaled(&l_lower[b], -h);
                } else {
                    rhs.constant -= h * env.branches[b].taylor.l0;
                    rhs.add_term(l_excess[b], -h);
                }
            }
            model.add_constraint(format!("{chain}eq{id}"), &LinExpr::var(v[k]), Sense::Eq, &rhs);
        }
    }

    let num_binaries = model.binaries().len();
    Ok(VpoProblem {
        num_vars: model.num_vars(),
        num_rows: model.num_rows(),
        num_binaries,
        model,
        q_g,
        q_g_sq,
        v_plus,
        v_minus,
        slack_plus,
        slack_minus,
        l_excess,
        oltc_plus,
        oltc_minus,
        cap_plus,
        cap_minus,
    })
}

/// Builds and solves the MILP around a load-flow point.
pub fn solve_p3(
    feeder: &Feeder,
    m: &DistFlowMatrices<f64>,
    base: BasePoint<'_>,
    opts: &VpoOptions,
) -> Result<(VpoProblem, MipSolution)> {
    let taylor = taylor_at(base.op)?;
    let bx = delta_box(feeder, m, base.op, base.q_uncontrolled)?;
    let env = build_envelopes(&taylor, &bx, opts.envelope)?;
    let problem = assemble_p3(feeder, m, &env, base, opts.qg_segments)?;
    let hint = problem.hint(base.setting);
    let sol = solve_mip_with_hint(&problem.model, opts.mip, Some(&hint))?;
    Ok((problem, sol))
}

#[derive(Clone, Debug, Serialize)]
pub struct MipStats {
    pub status: MipStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_pivots: usize,
    pub wall_time: f64,
    pub num_vars: usize,
    pub num_rows: usize,
    pub num_binaries: usize,
}

impl MipStats {
    fn new(p: &VpoProblem, s: &MipSolution) -> Self {
        Self {
            status: s.status,
            objective: s.objective,
            bound: s.bound,
            gap: s.gap,
            nodes: s.nodes,
            lp_pivots: s.lp_pivots,
            wall_time: s.wall_time,
            num_vars: p.num_vars,
            num_rows: p.num_rows,
            num_binaries: p.num_binaries,
        }
    }
}

/// One pass of the enhancement loop.
#[derive(Clone, Debug, Serialize)]
pub struct Iterate {
    pub k: usize,
    pub setting: DeviceSetting,
    /// Change of DER injections made by this iterate.
    pub delta_q_g: Vec<f64>,
    /// Change of capacitor injections (at the load-flow voltages).
    pub delta_q_cap: Vec<f64>,
    pub q_cap: Vec<f64>,
    /// True objective at the load-flow solution.
    pub objective: f64,
    /// MILP objective (secant `q_g²` terms, envelope slacks).
    pub p3_objective: f64,
    pub error: f64,
    pub op: OperatingPoint<f64>,
    pub feasibility: FeasibilityReport,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    /// Largest excursion of the load-flow voltages outside `[V⁻, V⁺]`.
    pub sandwich_violation: f64,
    pub mip: MipStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct VpoRun {
    pub period: usize,
    pub initial_setting: DeviceSetting,
    pub initial_objective: f64,
    pub initial_feasibility: FeasibilityReport,
    pub iterations: Vec<Iterate>,
    /// `Σ_i q_g*(i)`.
    pub q_g: Vec<f64>,
    /// `Σ_i Q_cp*(i)`.
    pub q_cap: Vec<f64>,
    pub n_tr: Vec<i32>,
    pub n_cp: Vec<u32>,
    pub objective: f64,
    pub converged: bool,
    pub monotone: bool,
    pub feasible: bool,
    pub max_sandwich_violation: f64,
    pub options: VpoOptions,
}

impl VpoRun {
    pub fn last(&self) -> Option<&Iterate> {
        self.iterations.last()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.objective).collect()
    }

    /// Final node voltages from the load flow.
    pub fn voltages(&self) -> Vec<f64> {
        self.last().map(|i| i.op.v.clone()).unwrap_or_default()
    }

    /// Total tight-bound violation at the final setting.
    pub fn violation(&self) -> f64 {
        self.last().map_or(self.initial_feasibility.tight_violation, |i| i.feasibility.tight_violation)
    }
}

fn loadflow(
    feeder: &Feeder,
    p: &[f64],
    q_unc: &[f64],
    setting: &DeviceSetting,
    opts: &VpoOptions,
) -> Result<(OperatingPoint<f64>, Vec<f64>)> {
    let lf = solve_loadflow_traced(feeder, p, q_unc, setting, opts.loadflow_tol, opts.loadflow_max_iter)?;
    Ok((lf.op, lf.q_cap))
}

/// Runs the successive enhancement loop for one period of `profile`.
pub fn run_algorithm1(feeder: &Feeder, profile: &LoadProfile, period: usize, opts: &VpoOptions) -> Result<VpoRun> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if period >= profile.horizon() {
        return Err(Error::InvalidArgument(format!("period {period} outside a horizon of {}", profile.horizon())));
    }
    let n = feeder.n();
    if profile.p_l[period].len() != n {
        return Err(Error::Dimension("profile does not match the feeder".into()));
    }
    let p = profile.injections(period);
    let q_unc: Vec<f64> = profile.q_l[period].iter().map(|v| -v).collect();
    let m = build_matrices::<f64>(feeder)?;

    let initial_setting = DeviceSetting::initial(feeder);
    let (mut op, mut q_cap) = loadflow(feeder, &p, &q_unc, &initial_setting, opts)?;
    let initial_objective = true_objective(feeder, &initial_setting, &op);
    let initial_feasibility = feasibility_report(feeder, &op);
    let mut setting = initial_setting.clone();
    let mut f_prev = initial_objective;
    let mut iterations: Vec<Iterate> = Vec::new();
    let mut converged = false;

    for k in 1..=opts.max_iters {
        let base = BasePoint { op: &op, setting: &setting, p: &p, q_uncontrolled: &q_unc };
        let (problem, sol) = solve_p3(feeder, &m, base, opts)?;
        match sol.status {
            MipStatus::Infeasible => return Err(Error::MipInfeasible { iteration: k }),
            MipStatus::IterationLimit => {
                return Err(Error::MipNoIncumbent { iteration: k, status: format!("{:?}", sol.status) })
            }
            MipStatus::Optimal | MipStatus::GapLimit => {}
        }
        let dec = problem.decode(feeder, &sol.x);
        let (op_k, q_cap_k) = loadflow(feeder, &p, &q_unc, &dec.setting, opts)?;
        let objective = true_objective(feeder, &dec.setting, &op_k);
        let error = (objective - f_prev).abs();
        let sandwich_violation = op_k
            .v
            .iter()
            .zip(dec.v_plus.iter().zip(&dec.v_minus))
            .map(|(&v, (&hi, &lo))| (v - hi).max(lo - v).max(0.0))
            .fold(0.0, f64::max);
        let feasibility = feasibility_report(feeder, &op_k);
        debug!(
            "period {period} iterate {k}: f = {objective:.6e}, P3 = {:.6e}, taps {:?}, caps {:?}, error {error:.3e}",
            dec.objective, dec.setting.n_tr, dec.setting.n_cp
        );
        let it = Iterate {
            k,
            delta_q_g: dec.setting.q_g.iter().zip(&setting.q_g).map(|(a, b)| a - b).collect(),
            delta_q_cap: q_cap_k.iter().zip(&q_cap).map(|(a, b)| a - b).collect(),
            q_cap: q_cap_k.clone(),
            setting: dec.setting.clone(),
            objective,
            p3_objective: dec.objective,
            error,
            op: op_k.clone(),
            feasibility,
            v_plus: dec.v_plus,
            v_minus: dec.v_minus,
            sandwich_violation,
            mip: MipStats::new(&problem, &sol),
        };
        iterations.push(it);
        setting = dec.setting;
        op = op_k;
        q_cap = q_cap_k;
        f_prev = objective;
        if error < opts.epsilon {
            converged = true;
            break;
        }
    }

    let monotone = iterations.windows(2).all(|w| w[1].objective <= w[0].objective + MONOTONE_TOL);
    let feasible = iterations.iter().all(|i| i.feasibility.worst_hard_margin >= -FEASIBLE_TOL);
    let max_sandwich_violation = iterations.iter().map(|i| i.sandwich_violation).fold(0.0, f64::max);
    info!(
        "period {period}: {} iterations, f = {f_prev:.6e}, converged {converged}, monotone {monotone}, feasible {feasible}",
        iterations.len()
    );
    Ok(VpoRun {
        period,
        initial_objective,
        initial_feasibility,
        q_g: setting.q_g.iter().zip(&initial_setting.q_g).map(|(a, b)| a - b).collect(),
        q_cap: iterations.iter().fold(vec![0.0; feeder.caps.len()], |acc, it| {
            acc.iter().zip(&it.delta_q_cap).map(|(a, d)| a + d).collect()
        }),
        initial_setting,
        n_tr: setting.n_tr.clone(),
        n_cp: setting.n_cp.clone(),
        objective: f_prev,
        iterations,
        converged,
        monotone,
        feasible,
        max_sandwich_violation,
        options: *opts,
    })
}

/// Outcome of one period of a schedule.
#[derive(Clone, Debug, Serialize)]
pub struct PeriodResult {
    pub period: usize,
    pub n_tr: Vec<i32>,
    pub n_cp: Vec<u32>,
    /// Total capacitor injection.
    pub q_cap_total: f64,
    /// `Σ q_g`.
    pub q_g_total: f64,
    /// `Σ |q_g|`.
    pub q_g_abs: f64,
    pub violation: f64,
    pub objective: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub monotone: bool,
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<VpoRun>,
}

impl PeriodResult {
    fn from_run(period: usize, r: Result<VpoRun>, keep_run: bool) -> Self {
        match r {
            Ok(run) => Self {
                period,
                n_tr: run.n_tr.clone(),
                n_cp: run.n_cp.clone(),
                q_cap_total: run.last().map_or(0.0, |i| i.q_cap.iter().sum()),
                q_g_total: run.q_g.iter().sum(),
                q_g_abs: run.q_g.iter().map(|q| q.abs()).sum(),
                violation: run.violation(),
                objective: run.objective,
                iterations: run.iterations.len(),
                feasible: run.feasible,
                monotone: run.monotone,
                failure: None,
                run: keep_run.then_some(run),
            },
            Err(e) => Self {
                period,
                n_tr: Vec::new(),
                n_cp: Vec::new(),
                q_cap_total: 0.0,
                q_g_total: 0.0,
                q_g_abs: 0.0,
                violation: f64::NAN,
                objective: f64::NAN,
                iterations: 0,
                feasible: false,
                monotone: false,
                failure: Some(e.to_string()),
                run: None,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduleResult {
    pub periods: Vec<PeriodResult>,
    /// Same horizon with every capacitor bank removed.
    pub without_caps: Option<Vec<PeriodResult>>,
    pub failures: usize,
}

/// Solves `jobs` closures on scoped threads, preserving order.
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(count: usize, f: F) -> Vec<T> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count.max(1));
    if workers <= 1 {
        return (0..count).map(&f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let v = f(i);
                results.lock().expect("result slots")[i] = Some(v);
            });
        }
    });
    slots.into_iter().map(|v| v.expect("every job ran")).collect()
}

/// Independent runs for every period; with `compare_without_caps` the horizon
/// is solved a second time with all capacitor banks removed.
pub fn schedule_horizon(
    feeder: &Feeder,
    profile: &LoadProfile,
    opts: &VpoOptions,
    compare_without_caps: bool,
    keep_runs: bool,
) -> ScheduleResult {
    let solve = |f: &Feeder| {
        parallel_map(profile.horizon(), |t| PeriodResult::from_run(t, run_algorithm1(f, profile, t, opts), keep_runs))
    };
    let periods = solve(feeder);
    let without_caps = compare_without_caps.then(|| solve(&feeder.without_caps()));
    let failures = periods.iter().chain(without_caps.iter().flatten()).filter(|p| p.failure.is_some()).count();
    ScheduleResult { periods, without_caps, failures }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub nominal: bool,
    /// `Σ |q_g|`.
    pub q_g_abs: f64,
    /// Total tight-bound violation at the final setting.
    pub violation: f64,
    pub objective: f64,
    pub iterations: usize,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub violation_non_increasing: bool,
    pub q_g_non_decreasing: bool,
}

pub const NOMINAL_ALPHA: f64 = 0.001;
/// Slack allowed in the rank comparisons of a sweep.
pub const SWEEP_RANK_TOL: f64 = 1e-9;

pub fn sweep_alpha(
    feeder: &Feeder,
    profile: &LoadProfile,
    period: usize,
    alphas: &[f64],
    opts: &VpoOptions,
) -> Result<SweepResult> {
    if alphas.iter().any(|a| !(*a > 0.0)) || alphas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("alphas must be positive and sorted".into()));
    }
    let points = parallel_map(alphas.len(), |i| {
        let alpha = alphas[i];
        let nominal = (alpha - NOMINAL_ALPHA).abs() <= 1e-12;
        match run_algorithm1(&feeder.with_alpha(alpha), profile, period, opts) {
            Ok(run) => SweepPoint {
                alpha,
                nominal,
                q_g_abs: run.q_g.iter().map(|q| q.abs()).sum(),
                violation: run.violation(),
                objective: run.objective,
                iterations: run.iterations.len(),
                failure: None,
            },
            Err(e) => SweepPoint {
                alpha,
                nominal,
                q_g_abs: f64::NAN,
                violation: f64::NAN,
                objective: f64::NAN,
                iterations: 0,
                failure: Some(e.to_string()),
            },
        }
    });
    let ok = points.iter().all(|p| p.failure.is_none());
    let violation_non_increasing = ok && points.windows(2).all(|w| w[1].violation <= w[0].violation + SWEEP_RANK_TOL);
    let q_g_non_decreasing = ok && points.windows(2).all(|w| w[1].q_g_abs + SWEEP_RANK_TOL >= w[0].q_g_abs);
    Ok(SweepResult { points, violation_non_increasing, q_g_non_decreasing })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalePoint {
    pub caps: usize,
    pub ders: usize,
    pub mip: MipStats,
    /// Seconds for envelope construction, assembly and solve.
    pub wall_time: f64,
}

/// One MILP solve at the initial setting for each number of enabled banks.
pub fn scale_study(
    feeder: &Feeder,
    profile: &LoadProfile,
    period: usize,
    cap_counts: &[usize],
    opts: &VpoOptions,
) -> Result<Vec<ScalePoint>> {
    if let Some(&c) = cap_counts.iter().find(|&&c| c > feeder.caps.len()) {
        return Err(Error::InvalidArgument(format!("{c} banks requested, feeder has {}", feeder.caps.len())));
    }
    if period >= profile.horizon() {
        return Err(Error::InvalidArgument(format!("period {period} outside a horizon of {}", profile.horizon())));
    }
    let p = profile.injections(period);
    let q_unc: Vec<f64> = profile.q_l[period].iter().map(|v| -v).collect();
    let mut out = Vec::with_capacity(cap_counts.len());
    for &count in cap_counts {
        let keep: Vec<usize> = (0..count).collect();
        let f = feeder.with_cap_subset(&keep);
        let start = Instant::now();
        let m = build_matrices::<f64>(&f)?;
        let setting = DeviceSetting::initial(&f);
        let (op, _) = loadflow(&f, &p, &q_unc, &setting, opts)?;
        let base = BasePoint { op: &op, setting: &setting, p: &p, q_uncontrolled: &q_unc };
        let (problem, sol) = solve_p3(&f, &m, base, opts)?;
        out.push(ScalePoint {
            caps: count,
            ders: f.ders.len(),
            mip: MipStats::new(&problem, &sol),
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::parse_feeder_str;

    fn three_node(extra: &str) -> Feeder {
        parse_feeder_str(&format!(
            r#"{{"base_mva":1,"base_kv":4.16,"v0_pu":1.0,
                "nodes":[{{"id":1}},{{"id":2}},{{"id":3}}],
                "branches":[{{"id":"t","from":0,"to":1,"r_pu":0.005,"x_pu":0.02}},
                            {{"from":1,"to":2,"r_pu":0.02,"x_pu":0.03}},
                            {{"from":1,"to":3,"r_pu":0.01,"x_pu":0.01}}]{extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn no_devices_no_load_is_zero() {
        let f = three_node("");
        let prof = LoadProfile::zeros(3, 1);
        let run = run_algorithm1(&f, &prof, 0, &VpoOptions::default()).unwrap();
        assert_eq!(run.iterations.len(), 1);
        assert!(run.converged && run.feasible);
        assert_eq!(run.objective, 0.0);
        assert!(run.last().unwrap().p3_objective.abs() < 1e-12);
    }

    #[test]
    fn row_inventory_of_small_feeder() {
        let f = three_node(
            r#","ders":[{"node":2,"q_min_pu":-0.1,"q_max_pu":0.1}],
               "caps":[{"node":3,"y_c_pu":0.03,"n_max":3}]"#,
        );
        let prof = LoadProfile::single(vec![0.3, 0.2, 0.1], vec![0.1, 0.1, 0.05]);
        let p = prof.injections(0);
        let q: Vec<f64> = prof.q_l[0].iter().map(|v| -v).collect();
        let s = DeviceSetting::initial(&f);
        let opts = VpoOptions::default();
        let (op, _) = loadflow(&f, &p, &q, &s, &opts).unwrap();
        let m = build_matrices::<f64>(&f).unwrap();
        let t = taylor_at(&op).unwrap();
        let bx = delta_box(&f, &m, &op, &q).unwrap();
        for mode in [QuadMode::Const, QuadMode::Pwl] {
            let env = build_envelopes(&t, &bx, EnvelopeOptions { mode, segments: 8 }).unwrap();
            let prob = assemble_p3(&f, &m, &env, BasePoint { op: &op, setting: &s, p: &p, q_uncontrolled: &q }, 16).unwrap();
            // Epigraph of q_g: 16 uniform chords, plus one where the current value splits a piece.
            let qg_rows = 16;
            let slack_rows = 2 * 3;
            let cap_rows = 2 * 3 * 3 + 2;
            let branch_rows = match mode {
                QuadMode::Const => 3 * 2,
                QuadMode::Pwl => {
                    let chord_rows: usize = env
                        .branches
                        .iter()
                        .map(|b| b.breaks1.len().saturating_sub(1) + b.breaks2.len().saturating_sub(1))
                        .sum();
                    let quad_rows = env.branches.iter().filter(|b| b.breaks1.len() > 1 || b.breaks2.len() > 1).count();
                    3 * (2 + 2) + chord_rows + quad_rows
                }
            };
            let voltage_rows = 2 * 3;
            assert_eq!(prob.num_rows, qg_rows + slack_rows + cap_rows + branch_rows + voltage_rows, "{mode:?}");
            assert_eq!(prob.num_binaries, 3);
        }
    }

    #[test]
    fn loaded_feeder_keeps_every_iterate_feasible() {
        let f = three_node(
            r#","ders":[{"node":2,"q_min_pu":-0.2,"q_max_pu":0.2}],
               "caps":[{"node":3,"y_c_pu":0.03,"n_max":3}]"#,
        );
        let prof = LoadProfile::single(vec![0.3, 0.6, 0.3], vec![0.15, 0.3, 0.15]);
        let run = run_algorithm1(&f, &prof, 0, &VpoOptions::default()).unwrap();
        assert!(run.feasible, "{:?}", run.iterations.iter().map(|i| i.feasibility.worst_hard_margin).collect::<Vec<_>>());
        assert!(run.monotone, "{:?}", run.objectives());
        assert!(run.converged);
        assert!(run.max_sandwich_violation < 1e-6, "{}", run.max_sandwich_violation);
        assert!(run.objective <= run.initial_objective + MONOTONE_TOL);
    }

    #[test]
    fn bad_arguments() {
        let f = three_node("");
        let prof = LoadProfile::zeros(3, 1);
        let opts = VpoOptions { epsilon: 0.0, ..Default::default() };
        assert!(run_algorithm1(&f, &prof, 0, &opts).is_err());
        assert!(run_algorithm1(&f, &prof, 1, &VpoOptions::default()).is_err());
        assert!(sweep_alpha(&f, &prof, 0, &[0.1, 0.01], &VpoOptions::default()).is_err());
        assert!(scale_study(&f, &prof, 0, &[1], &VpoOptions::default()).is_err());
    }
}
