//! DistFlow operator matrices and the compact voltage relation.
//!
//! Branch `b` connects node `b + 1` (sending end) to its parent. With
//! `A = B_n - I` and `C = (I - A)^-1`, entry `C[a][k-1]` is one exactly when
//! node `k` lies in the subtree fed by branch `a`, so
//!
//! ```text
//! P = C p - D_R l,   Q = C q - D_X l,   V = v0 1 + M_p p + M_q q - H l.
//! ```
//!
//! Tap changers are ideal ratios at the parent end of their branch. For each
//! node the matrices also exist in a "segment" form that only sums over the
//! path below the nearest upstream tap changer; that form is what the
//! optimisation model uses when taps are free.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feeder::{Feeder, ReactanceClass};
use crate::matrix::Matrix;
use crate::scalar::{norm_inf, Scalar};

/// Tolerance on the non-negativity of `H`.
pub const H_NONNEG_TOL: f64 = -1e-12;

#[derive(Clone, Debug)]
pub struct DistFlowMatrices<T> {
    pub n: usize,
    pub v0: T,
    /// Unsigned node-branch incidence, `(n+1) x n`.
    pub b: Matrix<T>,
    pub b_n: Matrix<T>,
    pub a: Matrix<T>,
    pub c: Matrix<T>,
    pub d_r: Matrix<T>,
    pub d_x: Matrix<T>,
    pub r: Matrix<T>,
    pub x: Matrix<T>,
    pub z2: Matrix<T>,
    pub m_p: Matrix<T>,
    pub m_q: Matrix<T>,
    pub h: Matrix<T>,
    /// `Cseg[a][k-1] = 1` when branch `a` is on the path from the nearest
    /// upstream tap changer (or the substation) down to node `k`.
    pub c_seg: Matrix<T>,
    pub m_p_seg: Matrix<T>,
    pub m_q_seg: Matrix<T>,
    pub h_seg: Matrix<T>,
    /// Nearest upstream tap changer of each node `k` (index `k-1`), as an index into `Feeder::oltcs`.
    pub seg_oltc: Vec<Option<usize>>,
    /// Branch index of every tap changer, parallel to `Feeder::oltcs`.
    pub oltc_branch: Vec<usize>,
    /// Parent node of every branch.
    pub parent: Vec<usize>,
    pub class: ReactanceClass,
}

/// State `x = [P Q V l]` together with the injections that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatingPoint<T> {
    pub p: Vec<T>,
    /// Net reactive injection, including DER and capacitor contributions.
    pub q: Vec<T>,
    #[serde(rename = "P")]
    pub big_p: Vec<T>,
    #[serde(rename = "Q")]
    pub big_q: Vec<T>,
    #[serde(rename = "V")]
    pub v: Vec<T>,
    pub l: Vec<T>,
    /// Squared tap ratio per tap changer (parallel to `Feeder::oltcs`).
    pub tap_sq: Vec<T>,
    pub v0: T,
}

impl<T: Scalar> OperatingPoint<T> {
    /// Flat no-load point.
    pub fn no_load(n: usize, v0: T, oltcs: usize) -> Self {
        Self {
            p: vec![T::zero(); n],
            q: vec![T::zero(); n],
            big_p: vec![T::zero(); n],
            big_q: vec![T::zero(); n],
            v: vec![v0; n],
            l: vec![T::zero(); n],
            tap_sq: vec![T::one(); oltcs],
            v0,
        }
    }

    /// Squared voltage at the parent end of branch `b` (the substation for `b`'s root).
    pub fn parent_voltage(&self, parent: usize) -> T {
        if parent == 0 {
            self.v0
        } else {
            self.v[parent - 1]
        }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// Off-diagonal entries of `I - A` are all `<= 0`.
    pub z_matrix: bool,
    /// `I - A` is upper triangular with unit diagonal, so every eigenvalue is one.
    pub unit_eigenvalues: bool,
    pub determinant: f64,
    /// `max |(I - A) C - I|`.
    pub inverse_residual: f64,
    pub c_nonneg: bool,
    pub min_h: f64,
    pub min_m_p: f64,
    pub min_m_q: f64,
    pub class: ReactanceClass,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub flow_p: f64,
    pub flow_q: f64,
    pub voltage: f64,
    pub current: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.flow_p.max(self.flow_q).max(self.voltage).max(self.current)
    }
}

pub fn build_matrices<T: Scalar>(feeder: &Feeder) -> Result<DistFlowMatrices<T>> {
    let n = feeder.n();
    if n == 0 {
        return Err(Error::Dimension("feeder has no branches".into()));
    }
    let parent: Vec<usize> = feeder.branches.iter().map(|b| b.from).collect();
    let mut b = Matrix::zeros(n + 1, n);
    for (bi, br) in feeder.branches.iter().enumerate() {
        b[(br.from, bi)] = T::one();
        b[(br.to, bi)] = T::one();
    }
    let b_n = Matrix::from_fn(n, n, |i, j| b[(i + 1, j)]);
    let identity = Matrix::identity(n);
    let a = b_n.sub(&identity);
    let i_minus_a = identity.sub(&a);
    if !i_minus_a.is_upper_triangular() || (0..n).any(|i| i_minus_a[(i, i)] != T::one()) {
        return Err(Error::Singular);
    }
    let c = i_minus_a.upper_triangular_inverse().ok_or(Error::Singular)?;

    let r_vec: Vec<T> = feeder.branches.iter().map(|br| T::of(br.r)).collect();
    let x_vec: Vec<T> = feeder.branches.iter().map(|br| T::of(br.x)).collect();
    let z2_vec: Vec<T> = r_vec.iter().zip(&x_vec).map(|(&r, &x)| r * r + x * x).collect();
    let r = Matrix::diag(&r_vec);
    let x = Matrix::diag(&x_vec);
    let z2 = Matrix::diag(&z2_vec);
    let two = T::of(2.0);

    let ca = c.matmul(&a);
    let d_r = ca.matmul(&r);
    let d_x = ca.matmul(&x);
    let ct = c.transpose();
    let rc = r.matmul(&c);
    let xc = x.matmul(&c);
    let m_p = ct.matmul(&rc).scale(two);
    let m_q = ct.matmul(&xc).scale(two);
    let inner = r.matmul(&d_r).add(&x.matmul(&d_x)).scale(two).add(&z2);
    let h = ct.matmul(&inner);

    let oltc_branch: Vec<usize> = feeder.oltcs.iter().map(|o| o.branch).collect();
    let mut seg_oltc = vec![None; n];
    let mut c_seg = Matrix::zeros(n, n);
    for k in 1..=n {
        let bk = k - 1;
        let own = oltc_branch.iter().position(|&m| m == bk);
        seg_oltc[bk] = match own {
            Some(o) => Some(o),
            None if parent[bk] == 0 => None,
            None => seg_oltc[parent[bk] - 1],
        };
        // Path from the segment root down to k.
        let mut node = k;
        loop {
            let br = node - 1;
            c_seg[(br, bk)] = T::one();
            if oltc_branch.contains(&br) || parent[br] == 0 {
                break;
            }
            node = parent[br];
        }
    }
    let c_seg_t = c_seg.transpose();
    let m_p_seg = c_seg_t.matmul(&rc).scale(two);
    let m_q_seg = c_seg_t.matmul(&xc).scale(two);
    let h_seg = c_seg_t.matmul(&inner);

    Ok(DistFlowMatrices {
        n,
        v0: T::of(feeder.v0),
        b,
        b_n,
        a,
        c,
        d_r,
        d_x,
        r,
        x,
        z2,
        m_p,
        m_q,
        h,
        c_seg,
        m_p_seg,
        m_q_seg,
        h_seg,
        seg_oltc,
        oltc_branch,
        parent,
        class: feeder.class,
    })
}

impl<T: Scalar> DistFlowMatrices<T> {
    /// Branch flows `P = C p - D_R l`, `Q = C q - D_X l`.
    pub fn flows(&self, p: &[T], q: &[T], l: &[T]) -> (Vec<T>, Vec<T>) {
        let cp = self.c.matvec(p);
        let cq = self.c.matvec(q);
        let dl_r = self.d_r.matvec(l);
        let dl_x = self.d_x.matvec(l);
        (
            cp.iter().zip(&dl_r).map(|(&a, &b)| a - b).collect(),
            cq.iter().zip(&dl_x).map(|(&a, &b)| a - b).collect(),
        )
    }

    /// Compact voltage relation with neutral taps: `v0 1 + M_p p + M_q q - H l`.
    pub fn voltages_neutral(&self, p: &[T], q: &[T], l: &[T]) -> Vec<T> {
        let a = self.m_p.matvec(p);
        let b = self.m_q.matvec(q);
        let c = self.h.matvec(l);
        (0..self.n).map(|k| self.v0 + a[k] + b[k] - c[k]).collect()
    }

    /// Voltage relation with tap ratios: each node starts from `t_m^2 V_u(m)`
    /// of its nearest upstream tap changer `m`, or from `v0`.
    pub fn voltages(&self, p: &[T], q: &[T], l: &[T], tap_sq: &[T]) -> Vec<T> {
        let a = self.m_p_seg.matvec(p);
        let b = self.m_q_seg.matvec(q);
        let c = self.h_seg.matvec(l);
        let mut v = vec![T::zero(); self.n];
        for k in 0..self.n {
            v[k] = self.segment_base(k, &v, tap_sq) + a[k] + b[k] - c[k];
        }
        v
    }

    /// `t_m^2 V_u(m)` for the segment containing node `k + 1`, or `v0`.
    /// Reads `v` only at nodes upstream of `k + 1`.
    pub fn segment_base(&self, k: usize, v: &[T], tap_sq: &[T]) -> T {
        match self.seg_oltc[k] {
            None => self.v0,
            Some(o) => {
                let u = self.parent[self.oltc_branch[o]];
                let vu = if u == 0 { self.v0 } else { v[u - 1] };
                tap_sq[o] * vu
            }
        }
    }

    /// Upstream node whose voltage feeds the segment of node `k + 1` (0 = substation), if a tap changer bounds it.
    pub fn segment_source(&self, k: usize) -> Option<(usize, usize)> {
        self.seg_oltc[k].map(|o| (o, self.parent[self.oltc_branch[o]]))
    }
}

pub fn certify_h_nonneg<T: Scalar>(m: &DistFlowMatrices<T>) -> Certificate {
    let n = m.n;
    let i_minus_a = Matrix::identity(n).sub(&m.a);
    let mut z_matrix = true;
    let mut unit = i_minus_a.is_upper_triangular();
    let mut det = 1.0;
    for i in 0..n {
        det *= i_minus_a[(i, i)].as_f64();
        if i_minus_a[(i, i)] != T::one() {
            unit = false;
        }
        for j in 0..n {
            if i != j && i_minus_a[(i, j)] > T::zero() {
                z_matrix = false;
            }
        }
    }
    let inverse_residual = i_minus_a.matmul(&m.c).sub(&Matrix::identity(n)).max_abs().as_f64();
    let c_nonneg = m.c.min_entry() >= T::zero();
    let min_h = m.h.min_entry().as_f64();
    let pass = z_matrix && unit && c_nonneg && min_h >= H_NONNEG_TOL;
    Certificate {
        z_matrix,
        unit_eigenvalues: unit,
        determinant: det,
        inverse_residual,
        c_nonneg,
        min_h,
        min_m_p: m.m_p.min_entry().as_f64(),
        min_m_q: m.m_q.min_entry().as_f64(),
        class: m.class,
        pass,
    }
}

pub fn residuals<T: Scalar>(m: &DistFlowMatrices<T>, op: &OperatingPoint<T>) -> Result<ResidualReport> {
    let n = m.n;
    for (name, len) in [
        ("p", op.p.len()),
        ("q", op.q.len()),
        ("P", op.big_p.len()),
        ("Q", op.big_q.len()),
        ("V", op.v.len()),
        ("l", op.l.len()),
    ] {
        if len != n {
            return Err(Error::Dimension(format!("{name} has length {len}, expected {n}")));
        }
    }
    if op.tap_sq.len() != m.oltc_branch.len() {
        return Err(Error::Dimension(format!(
            "tap_sq has length {}, expected {}",
            op.tap_sq.len(),
            m.oltc_branch.len()
        )));
    }
    let (pf, qf) = m.flows(&op.p, &op.q, &op.l);
    let diff = |a: &[T], b: &[T]| -> f64 {
        let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        norm_inf(&d).as_f64()
    };
    let vm = m.voltages(&op.p, &op.q, &op.l, &op.tap_sq);
    let current: Vec<T> = (0..n)
        .map(|b| op.l[b] * op.v[b] - op.big_p[b] * op.big_p[b] - op.big_q[b] * op.big_q[b])
        .collect();
    Ok(ResidualReport {
        flow_p: diff(&op.big_p, &pf),
        flow_q: diff(&op.big_q, &qf),
        voltage: diff(&op.v, &vm),
        current: norm_inf(&current).as_f64(),
    })
}
