//! Second-order expansion of the branch current relation `l = (P² + Q²) / v`
//! and the resulting bounds on `l` and on nodal voltages.
//!
//! Around a base point `(P0, Q0, v0)` the remainder has the closed form
//!
//! ```text
//! l = l0 + Jᵀδ + (w1² + w2²) / v,   w1 = ΔP - (P0/v0) Δv,   w2 = ΔQ - (Q0/v0) Δv,
//! ```
//!
//! with `½ δᵀ H_e δ = (w1² + w2²) / v0`. Hence `l0 + Jᵀδ` is a lower bound for
//! every `v > 0`, and with `ρ = v0 / v_lo` over the admissible box
//! `l ≤ l0 + max{2|Jᵀδ|, ρ δᵀH_eδ}`.

use serde::{Deserialize, Serialize};

use crate::distflow::{DistFlowMatrices, OperatingPoint, H_NONNEG_TOL};
use crate::error::{Error, Result};
use crate::feeder::Feeder;
use crate::matrix::symmetric_eigenvalues3;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuadMode {
    /// Constant over-estimate of the quadratic term over the box.
    #[default]
    Const,
    /// Secant piecewise-linear over-estimate, exact at `δ = 0`.
    Pwl,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub mode: QuadMode,
    /// Secant pieces per `w` component in `pwl` mode.
    pub segments: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self { mode: QuadMode::Const, segments: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn point(v: T) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn new(lo: T, hi: T) -> Self {
        Self { lo: lo.min(hi), hi: lo.max(hi) }
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn contains(&self, v: T, tol: T) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn hull(&self, o: &Self) -> Self {
        Self { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    fn add(self, o: Self) -> Self {
        Self { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    fn sub(self, o: Self) -> Self {
        Self { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }

    fn scale(self, s: T) -> Self {
        Self::new(self.lo * s, self.hi * s)
    }

    fn mul(self, o: Self) -> Self {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Self {
            lo: c.iter().fold(T::infinity(), |m, &v| m.min(v)),
            hi: c.iter().fold(T::neg_infinity(), |m, &v| m.max(v)),
        }
    }

    fn sq(self) -> Self {
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        let hi = a.max(b);
        let lo = if self.lo <= T::zero() && self.hi >= T::zero() { T::zero() } else { a.min(b) };
        Self { lo, hi }
    }

    fn pad(self, rel: T, abs: T) -> Self {
        let w = self.width() * rel + abs;
        Self { lo: self.lo - w, hi: self.hi + w }
    }
}

/// Expansion data for one branch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchTaylor<T> {
    pub l0: T,
    pub p0: T,
    pub q0: T,
    /// Sending-end squared voltage at the base point.
    pub v0: T,
    /// `[∂l/∂P, ∂l/∂Q, ∂l/∂v]`.
    pub j: [T; 3],
    pub h_e: [[T; 3]; 3],
    /// Eigenvalues of `H_e`, ascending.
    pub eigenvalues: [T; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorData<T> {
    pub branches: Vec<BranchTaylor<T>>,
    pub psd: bool,
}

pub fn taylor_at<T: Scalar>(op: &OperatingPoint<T>) -> Result<TaylorData<T>> {
    let two = T::of(2.0);
    let mut psd = true;
    let mut branches = Vec::with_capacity(op.n());
    for b in 0..op.n() {
        let v = op.v[b];
        if !(v > T::zero()) {
            return Err(Error::NonPositiveVoltage { node: b + 1, value: v.as_f64() });
        }
        let (p, q) = (op.big_p[b], op.big_q[b]);
        let s = p * p + q * q;
        let j = [two * p / v, two * q / v, -s / (v * v)];
        let hpv = -two * p / (v * v);
        let hqv = -two * q / (v * v);
        let h_e = [
            [two / v, T::zero(), hpv],
            [T::zero(), two / v, hqv],
            [hpv, hqv, two * s / (v * v * v)],
        ];
        let eigenvalues = symmetric_eigenvalues3(h_e);
        let scale = eigenvalues[2].abs().max(T::one());
        let tol = T::of(1e-10f64.max(T::epsilon().as_f64() * 100.0)) * scale;
        if eigenvalues[0].abs() > tol || !(eigenvalues[1] > tol) {
            psd = false;
        }
        branches.push(BranchTaylor { l0: op.l[b], p0: p, q0: q, v0: v, j, h_e, eigenvalues });
    }
    Ok(TaylorData { branches, psd })
}

impl<T: Scalar> BranchTaylor<T> {
    pub fn linear(&self, d: &[T; 3]) -> T {
        self.j[0] * d[0] + self.j[1] * d[1] + self.j[2] * d[2]
    }

    pub fn quadratic(&self, d: &[T; 3]) -> T {
        let mut s = T::zero();
        for i in 0..3 {
            for k in 0..3 {
                s += d[i] * self.h_e[i][k] * d[k];
            }
        }
        s
    }

    /// `(w1, w2)` for a deviation `δ`.
    pub fn w(&self, d: &[T; 3]) -> (T, T) {
        (d[0] - self.p0 / self.v0 * d[2], d[1] - self.q0 / self.v0 * d[2])
    }
}

/// Admissible deviations per branch.
#[derive(Clone, Debug, Serialize)]
pub struct BranchBox<T> {
    pub dp: Interval<T>,
    pub dq: Interval<T>,
    pub dv: Interval<T>,
    /// Sending-end squared voltage.
    pub v: Interval<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalBox<T> {
    pub branches: Vec<BranchBox<T>>,
    pub iterations: usize,
}

const BOX_MAX_ITER: usize = 2000;
const BOX_REL_PAD: f64 = 0.01;
const BOX_ABS_PAD: f64 = 1e-12;

/// Encloses the flows and voltages reachable by the declared devices.
///
/// Interval backward/forward sweeps are iterated from the base point, taking
/// the hull after each pass, until no bound moves. DER ranges, capacitor
/// admittance ranges and tap ratio ranges enter as intervals; the change in
/// losses is carried through the sweep. The result is padded by one percent of
/// each width.
pub fn delta_box<T: Scalar>(
    feeder: &Feeder,
    m: &DistFlowMatrices<T>,
    op: &OperatingPoint<T>,
    q_uncontrolled: &[T],
) -> Result<IntervalBox<T>> {
    let n = m.n;
    if op.n() != n || q_uncontrolled.len() != n {
        return Err(Error::Dimension("operating point does not match the feeder".into()));
    }
    let two = T::of(2.0);
    let v0 = Interval::point(m.v0);
    let mut q_fixed: Vec<Interval<T>> = q_uncontrolled.iter().map(|&q| Interval::point(q)).collect();
    for d in &feeder.ders {
        q_fixed[d.node - 1] = q_fixed[d.node - 1].add(Interval::new(T::of(d.q_min), T::of(d.q_max)));
    }
    let caps: Vec<(usize, Interval<T>)> = feeder
        .caps
        .iter()
        .map(|c| (c.node - 1, Interval::new(T::of(c.admittance(c.n_min)), T::of(c.admittance(c.n_max)))))
        .collect();
    let mut tap = vec![Interval::point(T::one()); n];
    for o in &feeder.oltcs {
        let a = T::of(o.ratio(o.n_min).powi(2));
        let b = T::of(o.ratio(o.n_max).powi(2));
        tap[o.branch] = Interval::new(a, b);
    }

    let mut big_p: Vec<Interval<T>> = op.big_p.iter().map(|&v| Interval::point(v)).collect();
    let mut big_q: Vec<Interval<T>> = op.big_q.iter().map(|&v| Interval::point(v)).collect();
    let mut v: Vec<Interval<T>> = op.v.iter().map(|&x| Interval::point(x)).collect();
    let mut l: Vec<Interval<T>> = op.l.iter().map(|&x| Interval::point(x)).collect();
    let r: Vec<T> = (0..n).map(|b| m.r[(b, b)]).collect();
    let x: Vec<T> = (0..n).map(|b| m.x[(b, b)]).collect();

    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut q_node = q_fixed.clone();
        for &(k, b) in &caps {
            q_node[k] = q_node[k].add(b.mul(v[k]));
        }
        let mut np: Vec<Interval<T>> = op.p.iter().map(|&p| Interval::point(p)).collect();
        let mut nq = q_node;
        let mut nl = vec![Interval::point(T::zero()); n];
        for b in (0..n).rev() {
            if !(v[b].lo > T::zero()) {
                return Err(Error::NonPositiveVoltage { node: b + 1, value: v[b].lo.as_f64() });
            }
            let s = np[b].sq().add(nq[b].sq());
            nl[b] = Interval { lo: s.lo / v[b].hi, hi: s.hi / v[b].lo };
            let u = m.parent[b];
            if u > 0 {
                let dp = np[b].sub(nl[b].scale(r[b]));
                let dq = nq[b].sub(nl[b].scale(x[b]));
                np[u - 1] = np[u - 1].add(dp);
                nq[u - 1] = nq[u - 1].add(dq);
            }
        }
        let mut nv = v.clone();
        for b in 0..n {
            let up = if m.parent[b] == 0 { v0 } else { nv[m.parent[b] - 1] };
            let z2 = r[b] * r[b] + x[b] * x[b];
            nv[b] = tap[b]
                .mul(up)
                .add(np[b].scale(two * r[b]))
                .add(nq[b].scale(two * x[b]))
                .sub(nl[b].scale(z2));
        }
        let mut grew = false;
        let mut merge = |old: &mut Vec<Interval<T>>, new: &[Interval<T>]| {
            for (o, nw) in old.iter_mut().zip(new) {
                let h = o.hull(nw);
                let scale = T::one().max(h.lo.abs()).max(h.hi.abs());
                if (h.lo - o.lo).abs() > T::epsilon() * scale * T::of(4.0)
                    || (h.hi - o.hi).abs() > T::epsilon() * scale * T::of(4.0)
                {
                    grew = true;
                }
                *o = h;
            }
        };
        merge(&mut big_p, &np);
        merge(&mut big_q, &nq);
        merge(&mut l, &nl);
        merge(&mut v, &nv);
        if !grew || iterations >= BOX_MAX_ITER {
            break;
        }
    }

    let rel = T::of(BOX_REL_PAD);
    let abs = T::of(BOX_ABS_PAD);
    let branches = (0..n)
        .map(|b| {
            let vb = v[b].pad(rel, abs);
            BranchBox {
                dp: big_p[b].sub(Interval::point(op.big_p[b])).pad(rel, abs),
                dq: big_q[b].sub(Interval::point(op.big_q[b])).pad(rel, abs),
                dv: v[b].sub(Interval::point(op.v[b])).pad(rel, abs),
                v: Interval { lo: vb.lo.max(v[b].lo * T::of(0.5)), hi: vb.hi },
            }
        })
        .collect();
    Ok(IntervalBox { branches, iterations })
}

/// A zero-width box (no controllable devices).
pub fn point_box<T: Scalar>(op: &OperatingPoint<T>) -> IntervalBox<T> {
    let z = Interval::point(T::zero());
    IntervalBox {
        branches: op.v.iter().map(|&v| BranchBox { dp: z, dq: z, dv: z, v: Interval::point(v) }).collect(),
        iterations: 0,
    }
}

/// Bound data for one branch.
#[derive(Clone, Debug, Serialize)]
pub struct BranchEnvelope<T> {
    pub taylor: BranchTaylor<T>,
    pub rho: T,
    /// `2ρ / v0`, so that `κ (w1² + w2²) = ρ δᵀH_eδ`.
    pub kappa: T,
    /// Constant over-estimate `ρ · max_vertex δᵀH_eδ`.
    pub quad_bound: T,
    pub w1: Interval<T>,
    pub w2: Interval<T>,
    pub breaks1: Vec<T>,
    pub breaks2: Vec<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeBounds<T> {
    pub branches: Vec<BranchEnvelope<T>>,
    pub options: EnvelopeOptions,
}

/// Secant breakpoints over `[lo, hi]`, always including zero.
fn secant_breaks<T: Scalar>(r: Interval<T>, segments: usize) -> Vec<T> {
    let (lo, hi) = (r.lo.min(T::zero()), r.hi.max(T::zero()));
    if hi - lo <= T::zero() {
        return vec![T::zero()];
    }
    let segments = segments.max(1);
    let (mut neg, mut pos) = if lo < T::zero() && hi > T::zero() {
        let share = (-lo / (hi - lo)).as_f64() * segments as f64;
        let neg = (share.round() as usize).clamp(1, segments.max(2) - 1);
        (neg, segments.max(2) - neg)
    } else if lo < T::zero() {
        (segments, 0)
    } else {
        (0, segments)
    };
    neg = neg.max(usize::from(lo < T::zero()));
    pos = pos.max(usize::from(hi > T::zero()));
    let mut out = Vec::with_capacity(neg + pos + 1);
    for i in 0..neg {
        out.push(lo * T::of((neg - i) as f64 / neg as f64));
    }
    out.push(T::zero());
    for i in 1..=pos {
        out.push(hi * T::of(i as f64 / pos as f64));
    }
    out
}

impl<T: Scalar> BranchEnvelope<T> {
    /// Chord lines `(slope, intercept)` of `w²` between consecutive breakpoints.
    pub fn chords(breaks: &[T]) -> Vec<(T, T)> {
        breaks.windows(2).map(|w| (w[0] + w[1], -w[0] * w[1])).collect()
    }

    fn secant(breaks: &[T], w: T) -> T {
        Self::chords(breaks).iter().fold(T::zero(), |m, &(a, c)| m.max(a * w + c))
    }

    pub fn l_min(&self, d: &[T; 3]) -> T {
        self.taylor.l0 + self.taylor.linear(d)
    }

    /// Upper bound used by the optimisation model in the configured mode.
    pub fn l_max(&self, d: &[T; 3], mode: QuadMode) -> T {
        let lin = T::of(2.0) * self.taylor.linear(d).abs();
        let quad = match mode {
            QuadMode::Const => self.quad_bound,
            QuadMode::Pwl => {
                let (w1, w2) = self.taylor.w(d);
                self.kappa * (Self::secant(&self.breaks1, w1) + Self::secant(&self.breaks2, w2))
            }
        };
        self.taylor.l0 + lin.max(quad)
    }

    /// `l0 + max{2|Jᵀδ|, ρ δᵀH_eδ}` with the exact quadratic.
    pub fn l_max_quadratic(&self, d: &[T; 3]) -> T {
        let lin = T::of(2.0) * self.taylor.linear(d).abs();
        self.taylor.l0 + lin.max(self.rho * self.taylor.quadratic(d))
    }
}

pub fn build_envelopes<T: Scalar>(t: &TaylorData<T>, bx: &IntervalBox<T>, options: EnvelopeOptions) -> Result<EnvelopeBounds<T>> {
    if !t.psd {
        return Err(Error::Model("expansion Hessian failed the spectral check".into()));
    }
    if t.branches.len() != bx.branches.len() {
        return Err(Error::Dimension("box and expansion sizes differ".into()));
    }
    let two = T::of(2.0);
    let branches = t
        .branches
        .iter()
        .zip(&bx.branches)
        .map(|(tb, bb)| {
            let v_lo = bb.v.lo.min(tb.v0);
            let rho = tb.v0 / v_lo;
            let kappa = two * rho / tb.v0;
            let mut vmax = T::zero();
            for mask in 0..8u8 {
                let d = [
                    if mask & 1 == 0 { bb.dp.lo } else { bb.dp.hi },
                    if mask & 2 == 0 { bb.dq.lo } else { bb.dq.hi },
                    if mask & 4 == 0 { bb.dv.lo } else { bb.dv.hi },
                ];
                vmax = vmax.max(tb.quadratic(&d));
            }
            let w1 = bb.dp.sub(bb.dv.scale(tb.p0 / tb.v0));
            let w2 = bb.dq.sub(bb.dv.scale(tb.q0 / tb.v0));
            BranchEnvelope {
                taylor: tb.clone(),
                rho,
                kappa,
                quad_bound: rho * vmax,
                breaks1: secant_breaks(w1, options.segments),
                breaks2: secant_breaks(w2, options.segments),
                w1,
                w2,
            }
        })
        .collect();
    Ok(EnvelopeBounds { branches, options })
}

impl<T: Scalar> EnvelopeBounds<T> {
    /// Deviations of `op` from the expansion point, per branch.
    pub fn deltas(&self, op: &OperatingPoint<T>) -> Vec<[T; 3]> {
        self.branches
            .iter()
            .enumerate()
            .map(|(b, e)| [op.big_p[b] - e.taylor.p0, op.big_q[b] - e.taylor.q0, op.v[b] - e.taylor.v0])
            .collect()
    }

    pub fn l_bounds(&self, deltas: &[[T; 3]]) -> (Vec<T>, Vec<T>) {
        let lo = self.branches.iter().zip(deltas).map(|(e, d)| e.l_min(d)).collect();
        let hi = self.branches.iter().zip(deltas).map(|(e, d)| e.l_max(d, self.options.mode)).collect();
        (lo, hi)
    }
}

/// `V⁺` (from `l_min`) and `V⁻` (from `l_max`) for numeric injections and tap ratios.
pub fn voltage_envelopes<T: Scalar>(
    m: &DistFlowMatrices<T>,
    p: &[T],
    q: &[T],
    tap_sq: &[T],
    l_min: &[T],
    l_max: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let min_h = m.h.min_entry().min(m.h_seg.min_entry()).as_f64();
    if min_h < H_NONNEG_TOL {
        return Err(Error::CertificateFailed { min_entry: min_h });
    }
    Ok((m.voltages(p, q, l_min, tap_sq), m.voltages(p, q, l_max, tap_sq)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acpf::{solve_loadflow, DeviceSetting};
    use crate::distflow::build_matrices;
    use crate::feeder::parse_feeder_str;

    fn op_with(p: f64, q: f64, v: f64) -> OperatingPoint<f64> {
        OperatingPoint {
            p: vec![0.0],
            q: vec![0.0],
            big_p: vec![p],
            big_q: vec![q],
            v: vec![v],
            l: vec![(p * p + q * q) / v],
            tap_sq: vec![],
            v0: 1.0,
        }
    }

    #[test]
    fn jacobian_closed_form() {
        let t = taylor_at(&op_with(1.0, 0.5, 1.0)).unwrap();
        assert_eq!(t.branches[0].j, [2.0, 1.0, -1.25]);
        assert!(t.psd);
    }

    #[test]
    fn no_load_hessian() {
        let t = taylor_at(&op_with(0.0, 0.0, 1.0)).unwrap();
        let b = &t.branches[0];
        assert_eq!(b.j, [0.0, 0.0, 0.0]);
        assert_eq!(b.h_e, [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(b.eigenvalues[0].abs() < 1e-12);
    }

    #[test]
    fn non_positive_voltage_is_rejected() {
        assert!(matches!(taylor_at(&op_with(0.1, 0.1, 0.0)), Err(Error::NonPositiveVoltage { .. })));
    }

    #[test]
    fn remainder_identity() {
        let t = taylor_at(&op_with(0.7, -0.3, 0.96)).unwrap();
        let b = &t.branches[0];
        let d = [0.05, 0.11, -0.03];
        let (w1, w2) = b.w(&d);
        assert!((0.5 * b.quadratic(&d) - (w1 * w1 + w2 * w2) / b.v0).abs() < 1e-14);
        let (p, q, v) = (0.75, -0.19, 0.93);
        let exact = (p * p + q * q) / v;
        let rebuilt = b.l0 + b.linear(&d) + (w1 * w1 + w2 * w2) / v;
        assert!((exact - rebuilt).abs() < 1e-14);
    }

    #[test]
    fn zero_width_box_collapses_bounds() {
        let op = op_with(0.4, 0.2, 0.98);
        let t = taylor_at(&op).unwrap();
        for mode in [QuadMode::Const, QuadMode::Pwl] {
            let env = build_envelopes(&t, &point_box(&op), EnvelopeOptions { mode, segments: 2 }).unwrap();
            let z = [0.0; 3];
            assert_eq!(env.branches[0].l_min(&z), op.l[0]);
            assert_eq!(env.branches[0].l_max(&z, mode), op.l[0]);
        }
    }

    #[test]
    fn secant_breaks_include_zero() {
        let b = secant_breaks(Interval::new(-1.0, 3.0), 4);
        assert_eq!(b, vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
        let b = secant_breaks(Interval::new(-0.5, 0.5), 2);
        assert_eq!(b, vec![-0.5, 0.0, 0.5]);
        for w in [-0.5, -0.2, 0.0, 0.3, 0.5] {
            assert!(BranchEnvelope::secant(&b, w) >= w * w - 1e-15);
        }
    }

    #[test]
    fn single_der_box_on_one_branch() {
        let f = parse_feeder_str(
            r#"{"base_mva":1,"base_kv":4.16,"v0_pu":1.0,"nodes":[{"id":1}],
                "branches":[{"from":0,"to":1,"r_pu":0.01,"x_pu":0.02}],
                "ders":[{"node":1,"q_min_pu":-0.1,"q_max_pu":0.1}]}"#,
        )
        .unwrap();
        let m = build_matrices::<f64>(&f).unwrap();
        let s = DeviceSetting::initial(&f);
        let op = solve_loadflow(&f, &[-0.2], &[-0.05], &s, 1e-12, 100).unwrap();
        let bx = delta_box(&f, &m, &op, &[-0.05]).unwrap();
        let b = &bx.branches[0];
        assert!(b.dq.contains(-0.1, 1e-12) && b.dq.contains(0.1, 1e-12));
        assert!(b.dq.width() < 0.2 * 1.02 + 1e-9);
        let mq = m.m_q[(0, 0)];
        assert!(b.dv.lo <= -0.1 * mq + 1e-3 && b.dv.hi >= 0.1 * mq - 1e-3);
        assert!((b.dv.width() - 0.2 * mq).abs() < 0.2 * mq * 0.1);
    }
}
