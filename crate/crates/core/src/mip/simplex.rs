//! Dense-tableau bounded-variable simplex.
//!
//! Every row `i` gets a slack `s_i` so that `a_i x + s_i = b_i`, with
//! `s_i ∈ [0, ∞)` for `≤`, `(-∞, 0]` for `≥` and `[0, 0]` for `=`. Phase one
//! starts from a slack basis and, where the slack cannot absorb the residual,
//! from an artificial `σ_i e_i`. Artificial columns are never stored: they
//! coincide with `σ_i` times the slack column and are dropped once they leave
//! the basis.

use serde::Serialize;

use super::model::{MipModel, Sense};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpOptions {
    pub max_pivots: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            max_pivots: 200_000,
            primal_tol: 1e-9,
            dual_tol: 1e-10,
            pivot_tol: 1e-7,
            refactor_every: 200,
            bland_after: 50,
        }
    }
}

/// Smallest pivot accepted when rebuilding the tableau of a known basis.
const REFACTOR_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c - Aᵀy` the reduced costs.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

/// Basis snapshot used to warm-start a later solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    basic: Vec<usize>,
    state: Vec<State>,
    sigma: Vec<f64>,
}

pub struct Simplex<'a> {
    model: &'a MipModel,
    opts: LpOptions,
    m: usize,
    n: usize,
    /// Stored columns: structural then slack, plus the right-hand side.
    width: usize,
    tab: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    basic: Vec<usize>,
    state: Vec<State>,
    sigma: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    /// The stored tableau does not correspond to `basic`.
    stale: bool,
    scratch: Vec<usize>,
}

impl<'a> Simplex<'a> {
    pub fn new(model: &'a MipModel, opts: LpOptions) -> Self {
        let lo: Vec<f64> = model.vars.iter().map(|v| v.lo).collect();
        let hi: Vec<f64> = model.vars.iter().map(|v| v.hi).collect();
        Self::with_bounds(model, &lo, &hi, opts)
    }

    pub fn with_bounds(model: &'a MipModel, lo: &[f64], hi: &[f64], opts: LpOptions) -> Self {
        let m = model.rows.len();
        let n = model.vars.len();
        let cols = n + 2 * m;
        let mut all_lo = vec![0.0; cols];
        let mut all_hi = vec![0.0; cols];
        all_lo[..n].copy_from_slice(lo);
        all_hi[..n].copy_from_slice(hi);
        for (i, r) in model.rows.iter().enumerate() {
            let (l, h) = match r.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            all_lo[n + i] = l;
            all_hi[n + i] = h;
        }
        let mut cost = vec![0.0; cols];
        cost[..n].copy_from_slice(&model.obj);
        let width = n + m + 1;
        Self {
            model,
            opts,
            m,
            n,
            width,
            tab: vec![0.0; m * width],
            lo: all_lo,
            hi: all_hi,
            cost,
            x: vec![0.0; cols],
            d: vec![0.0; n + m],
            basic: vec![0; m],
            state: vec![State::Lower; cols],
            sigma: vec![1.0; m],
            pivots: 0,
            since_refactor: 0,
            stale: true,
            scratch: Vec::new(),
        }
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lo[var] = lo;
        self.hi[var] = hi;
        if self.state[var] != State::Basic {
            self.place_nonbasic(var);
        }
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    fn is_art(&self, j: usize) -> bool {
        j >= self.n + self.m
    }

    /// Tableau entry, resolving virtual artificial columns.
    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        if self.is_art(j) {
            let row = j - self.n - self.m;
            self.sigma[row] * self.tab[i * self.width + self.n + row]
        } else {
            self.tab[i * self.width + j]
        }
    }

    fn place_nonbasic(&mut self, j: usize) {
        let (l, h) = (self.lo[j], self.hi[j]);
        let st = match self.state[j] {
            State::Upper if h.is_finite() => State::Upper,
            _ if l.is_finite() => State::Lower,
            _ if h.is_finite() => State::Upper,
            _ => State::Zero,
        };
        self.state[j] = st;
        self.x[j] = match st {
            State::Lower => l,
            State::Upper => h,
            _ => 0.0,
        };
    }

    fn load_raw(&mut self) {
        let (n, w) = (self.n, self.width);
        self.tab.iter_mut().for_each(|v| *v = 0.0);
        for (i, r) in self.model.rows.iter().enumerate() {
            let row = &mut self.tab[i * w..(i + 1) * w];
            for &(j, a) in &r.coefs {
                row[j] = a;
            }
            row[n + i] = 1.0;
            row[w - 1] = r.rhs;
        }
    }

    /// Slack/artificial starting basis.
    fn cold_start(&mut self) {
        let (n, m) = (self.n, self.m);
        self.load_raw();
        for j in 0..n {
            self.state[j] = State::Lower;
            self.place_nonbasic(j);
        }
        for i in 0..m {
            let mut act = 0.0;
            for &(j, a) in &self.model.rows[i].coefs {
                act += a * self.x[j];
            }
            let s = self.model.rows[i].rhs - act;
            let slack = n + i;
            let art = n + m + i;
            if s >= self.lo[slack] - self.opts.primal_tol && s <= self.hi[slack] + self.opts.primal_tol {
                self.basic[i] = slack;
                self.state[slack] = State::Basic;
                self.x[slack] = s;
                self.state[art] = State::Lower;
                self.lo[art] = 0.0;
                self.hi[art] = 0.0;
                self.x[art] = 0.0;
                self.sigma[i] = 1.0;
            } else {
                let target = if s < self.lo[slack] { self.lo[slack] } else { self.hi[slack] };
                self.state[slack] = if s < self.lo[slack] { State::Lower } else { State::Upper };
                self.x[slack] = target;
                let resid = s - target;
                self.sigma[i] = resid.signum();
                self.basic[i] = art;
                self.state[art] = State::Basic;
                self.lo[art] = 0.0;
                self.hi[art] = f64::INFINITY;
                self.x[art] = resid.abs();
                // Row i of B⁻¹[A I b] for B = diag(σ).
                if self.sigma[i] < 0.0 {
                    let w = self.width;
                    for v in &mut self.tab[i * w..(i + 1) * w] {
                        *v = -*v;
                    }
                }
            }
        }
        self.since_refactor = 0;
        self.stale = false;
    }

    fn compute_duals(&mut self, phase_one: bool) {
        let cols = self.n + self.m;
        let w = self.width;
        for j in 0..cols {
            self.d[j] = if phase_one { 0.0 } else { self.cost[j] };
        }
        for r in 0..self.m {
            let b = self.basic[r];
            let cb = if phase_one {
                if self.is_art(b) {
                    1.0
                } else {
                    0.0
                }
            } else if self.is_art(b) {
                0.0
            } else {
                self.cost[b]
            };
            if cb != 0.0 {
                let row = &self.tab[r * w..r * w + cols];
                for (dj, &t) in self.d.iter_mut().zip(row) {
                    *dj -= cb * t;
                }
            }
        }
        for r in 0..self.m {
            let b = self.basic[r];
            if b < cols {
                self.d[b] = 0.0;
            }
        }
    }

    fn recompute_basic_values(&mut self) {
        let w = self.width;
        let cols = self.n + self.m;
        for r in 0..self.m {
            let row = &self.tab[r * w..(r + 1) * w];
            let mut v = row[w - 1];
            for j in 0..cols {
                if self.state[j] != State::Basic && row[j] != 0.0 && self.x[j] != 0.0 {
                    v -= row[j] * self.x[j];
                }
            }
            self.x[self.basic[r]] = v;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.entry(r, q);
        let inv = 1.0 / p;
        // Column factors before the pivot.
        let factors: Vec<f64> = (0..self.m).map(|i| if i == r { 0.0 } else { self.entry(i, q) }).collect();
        {
            let row = &mut self.tab[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        self.scratch.clear();
        for j in 0..w {
            if self.tab[r * w + j] != 0.0 {
                self.scratch.push(j);
            }
        }
        let (before, rest) = self.tab.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for (i, &f) in factors.iter().enumerate() {
            if f == 0.0 || i == r {
                continue;
            }
            let row = if i < r { &mut before[i * w..(i + 1) * w] } else { &mut after[(i - r - 1) * w..(i - r) * w] };
            for &j in &self.scratch {
                row[j] -= f * pivot_row[j];
            }
        }
        if q < self.n + self.m {
            let dq = self.d[q];
            if dq != 0.0 {
                for &j in &self.scratch {
                    if j < self.n + self.m {
                        self.d[j] -= dq * pivot_row[j];
                    }
                }
            }
        }
        if self.is_art(q) {
            // Stored slack column must equal σ e_r so that the artificial reads e_r.
            let slack = self.n + (q - self.n - self.m);
            for i in 0..self.m {
                self.tab[i * w + slack] = if i == r { self.sigma[q - self.n - self.m] } else { 0.0 };
            }
        }
        self.basic[r] = q;
        self.state[q] = State::Basic;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    /// Rebuilds the tableau for the current basis from the raw rows.
    fn refactor(&mut self) -> bool {
        let basic = self.basic.clone();
        self.load_raw();
        let m = self.m;
        let mut assigned = vec![false; m];
        let mut new_basic = vec![usize::MAX; m];
        let mut order: Vec<usize> = basic.clone();
        // Structural columns first, slack and artificial columns afterwards.
        order.sort_by_key(|&j| (j >= self.n, j));
        for &j in &order {
            // Column in the current partially reduced tableau.
            let mut best = None;
            let mut best_abs = REFACTOR_TOL;
            for i in 0..m {
                if assigned[i] {
                    continue;
                }
                let a = if self.is_art(j) {
                    let row = j - self.n - self.m;
                    self.sigma[row] * self.tab[i * self.width + self.n + row]
                } else {
                    self.tab[i * self.width + j]
                };
                if a.abs() > best_abs {
                    best_abs = a.abs();
                    best = Some(i);
                }
            }
            let Some(r) = best else {
                return false;
            };
            self.basic[r] = j;
            self.elim(r, j);
            assigned[r] = true;
            new_basic[r] = j;
        }
        self.basic = new_basic;
        self.since_refactor = 0;
        self.stale = false;
        self.recompute_basic_values();
        true
    }

    fn elim(&mut self, r: usize, q: usize) {
        let saved_pivots = self.pivots;
        let d_backup = std::mem::take(&mut self.d);
        self.d = vec![0.0; self.n + self.m];
        self.pivot(r, q);
        self.d = d_backup;
        self.pivots = saved_pivots;
    }

    fn primal_infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] {
            self.lo[j] - v
        } else if v > self.hi[j] {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    fn is_primal_feasible(&self) -> bool {
        self.basic.iter().all(|&b| self.primal_infeasibility(b) <= self.opts.primal_tol)
    }

    /// Makes the basis dual feasible by flipping boxed nonbasics; false if impossible.
    fn make_dual_feasible(&mut self) -> bool {
        let dt = self.opts.dual_tol;
        let mut ok = true;
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if st == State::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            match st {
                State::Lower if dj < -dt => {
                    if self.hi[j].is_finite() {
                        self.state[j] = State::Upper;
                        self.x[j] = self.hi[j];
                    } else {
                        ok = false;
                    }
                }
                State::Upper if dj > dt => {
                    if self.lo[j].is_finite() {
                        self.state[j] = State::Lower;
                        self.x[j] = self.lo[j];
                    } else {
                        ok = false;
                    }
                }
                State::Zero if dj.abs() > dt => ok = false,
                _ => {}
            }
        }
        ok
    }

    /// Primal simplex on the current objective. Returns `None` when optimal.
    fn primal_loop(&mut self, phase_one: bool) -> Option<LpStatus> {
        let dt = self.opts.dual_tol;
        let pt = self.opts.pivot_tol;
        let mut degenerate = 0usize;
        let mut verified = usize::MAX;
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Some(LpStatus::IterationLimit);
            }
            if self.since_refactor >= self.opts.refactor_every {
                if !self.refactor() {
                    return Some(LpStatus::IterationLimit);
                }
                self.compute_duals(phase_one);
            }
            let bland = degenerate >= self.opts.bland_after;
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..self.n + self.m {
                let st = self.state[j];
                if st == State::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let dj = self.d[j];
                let dir = match st {
                    State::Lower if dj < -dt => 1.0,
                    State::Upper if dj > dt => -1.0,
                    State::Zero if dj.abs() > dt => -dj.signum(),
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                // Confirm optimality against freshly computed duals.
                if self.since_refactor == 0 || verified == self.pivots {
                    return None;
                }
                verified = self.pivots;
                if !self.refactor() {
                    return Some(LpStatus::IterationLimit);
                }
                self.compute_duals(phase_one);
                continue;
            };
            // Ratio test: exact under Bland's rule, otherwise two passes that
            // prefer the largest pivot among rows blocking within a tolerance.
            let range = if self.lo[q].is_finite() && self.hi[q].is_finite() { self.hi[q] - self.lo[q] } else { f64::INFINITY };
            let mut theta = range;
            let mut leave: Option<(usize, bool)> = None;
            let blocking = |s: &Self, r: usize, slack: f64| -> Option<(f64, bool, f64)> {
                let t = s.entry(r, q);
                if t.abs() <= pt {
                    return None;
                }
                let rate = -t * dir;
                let b = s.basic[r];
                if rate < 0.0 {
                    s.lo[b].is_finite().then(|| (((s.x[b] - s.lo[b] + slack) / -rate).max(0.0), false, t.abs()))
                } else {
                    s.hi[b].is_finite().then(|| (((s.hi[b] - s.x[b] + slack) / rate).max(0.0), true, t.abs()))
                }
            };
            if bland {
                for r in 0..self.m {
                    let Some((limit, to_upper, _)) = blocking(self, r, 0.0) else { continue };
                    if limit < theta || (limit == theta && leave.map_or(true, |(lr, _)| self.basic[r] < self.basic[lr])) {
                        theta = limit;
                        leave = Some((r, to_upper));
                    }
                }
            } else {
                let harris = self.opts.primal_tol * 0.5;
                let mut bound = f64::INFINITY;
                for r in 0..self.m {
                    if let Some((limit, _, _)) = blocking(self, r, harris) {
                        bound = bound.min(limit);
                    }
                }
                if range > bound {
                    let mut leave_abs = 0.0;
                    for r in 0..self.m {
                        let Some((limit, to_upper, a)) = blocking(self, r, 0.0) else { continue };
                        if limit <= bound && a > leave_abs {
                            leave_abs = a;
                            theta = limit;
                            leave = Some((r, to_upper));
                        }
                    }
                }
            }
            if theta == f64::INFINITY {
                return Some(LpStatus::Unbounded);
            }
            degenerate = if theta <= 1e-12 { degenerate + 1 } else { 0 };
            // Move.
            self.x[q] += dir * theta;
            for r in 0..self.m {
                let t = self.entry(r, q);
                if t != 0.0 {
                    let b = self.basic[r];
                    self.x[b] -= t * dir * theta;
                }
            }
            match leave {
                None => {
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.pivots += 1;
                }
                Some((r, to_upper)) => {
                    let b = self.basic[r];
                    self.pivot(r, q);
                    self.retire(b, to_upper);
                }
            }
        }
    }

    /// Sets the state of a variable that just left the basis.
    fn retire(&mut self, b: usize, to_upper: bool) {
        if self.is_art(b) {
            self.lo[b] = 0.0;
            self.hi[b] = 0.0;
            self.state[b] = State::Lower;
            self.x[b] = 0.0;
            return;
        }
        self.state[b] = if to_upper { State::Upper } else { State::Lower };
        self.x[b] = if to_upper { self.hi[b] } else { self.lo[b] };
        if !self.x[b].is_finite() {
            self.state[b] = State::Zero;
            self.x[b] = 0.0;
        }
    }

    /// Dual simplex from a dual feasible basis. Returns `None` when optimal.
    fn dual_loop(&mut self) -> Option<LpStatus> {
        let pt = self.opts.pivot_tol;
        let ptol = self.opts.primal_tol;
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Some(LpStatus::IterationLimit);
            }
            if self.since_refactor >= self.opts.refactor_every {
                if !self.refactor() {
                    return Some(LpStatus::IterationLimit);
                }
                self.compute_duals(false);
            }
            let mut leave = None;
            let mut worst = ptol;
            for r in 0..self.m {
                let inf = self.primal_infeasibility(self.basic[r]);
                if inf > worst {
                    worst = inf;
                    leave = Some(r);
                }
            }
            let Some(r) = leave else {
                return None;
            };
            let b = self.basic[r];
            let below = self.x[b] < self.lo[b];
            let target = if below { self.lo[b] } else { self.hi[b] };
            // Candidates whose move pushes x_b toward `target`, with their
            // dual ratio and pivot size.
            let candidates: Vec<(usize, f64, f64)> = (0..self.n + self.m)
                .filter_map(|j| {
                    let st = self.state[j];
                    if st == State::Basic || self.lo[j] == self.hi[j] {
                        return None;
                    }
                    let t = self.tab[r * self.width + j];
                    if t.abs() <= pt {
                        return None;
                    }
                    let ok = match st {
                        State::Lower => (below && t < 0.0) || (!below && t > 0.0),
                        State::Upper => (below && t > 0.0) || (!below && t < 0.0),
                        State::Zero => true,
                        State::Basic => false,
                    };
                    ok.then(|| (j, self.d[j].abs(), t.abs()))
                })
                .collect();
            let dt = self.opts.dual_tol * 0.5;
            let bound = candidates.iter().map(|&(_, d, t)| (d + dt) / t).fold(f64::INFINITY, f64::min);
            let mut enter = None;
            let mut best_abs = 0.0;
            for &(j, d, t) in &candidates {
                if d / t <= bound && t > best_abs {
                    best_abs = t;
                    enter = Some(j);
                }
            }
            let Some(q) = enter else {
                return Some(LpStatus::Infeasible);
            };
            let t = self.entry(r, q);
            let delta = (self.x[b] - target) / t;
            self.x[q] += delta;
            for i in 0..self.m {
                let ti = self.entry(i, q);
                if ti != 0.0 {
                    let bi = self.basic[i];
                    self.x[bi] -= ti * delta;
                }
            }
            self.pivot(r, q);
            self.retire(b, !below);
        }
    }

    /// Solves from a slack/artificial starting basis.
    pub fn solve(&mut self) -> LpStatus {
        self.cold_start();
        self.compute_duals(true);
        if let Some(st) = self.primal_loop(true) {
            return if st == LpStatus::Unbounded { LpStatus::Infeasible } else { st };
        }
        let art_sum: f64 = (0..self.m)
            .filter(|&r| self.is_art(self.basic[r]))
            .map(|r| self.x[self.basic[r]])
            .sum();
        if art_sum > self.opts.primal_tol * (1.0 + self.m as f64).sqrt() {
            return LpStatus::Infeasible;
        }
        for r in 0..self.m {
            let b = self.basic[r];
            if self.is_art(b) {
                self.lo[b] = 0.0;
                self.hi[b] = 0.0;
            }
        }
        self.compute_duals(false);
        self.primal_loop(false).unwrap_or(LpStatus::Optimal)
    }

    /// Re-optimizes after bound changes, starting from the current basis.
    pub fn resolve(&mut self) -> LpStatus {
        for j in 0..self.n + self.m {
            if self.state[j] != State::Basic {
                self.place_nonbasic(j);
            }
        }
        if self.stale {
            if !self.refactor() {
                return self.solve();
            }
        } else {
            self.recompute_basic_values();
        }
        self.compute_duals(false);
        if self.make_dual_feasible() {
            self.recompute_basic_values();
            match self.dual_loop() {
                None => {}
                Some(LpStatus::IterationLimit) => return LpStatus::IterationLimit,
                Some(LpStatus::Infeasible) => return LpStatus::Infeasible,
                Some(_) => return self.solve(),
            }
            // Polish: the dual loop ends primal and dual feasible up to tolerance.
            self.compute_duals(false);
            return self.primal_loop(false).unwrap_or(LpStatus::Optimal);
        }
        if self.is_primal_feasible() {
            return self.primal_loop(false).unwrap_or(LpStatus::Optimal);
        }
        self.solve()
    }

    pub fn basis(&self) -> Basis {
        Basis { basic: self.basic.clone(), state: self.state.clone(), sigma: self.sigma.clone() }
    }

    /// Loads a basis snapshot; bounds are kept as currently set.
    pub fn load_basis(&mut self, b: &Basis) {
        self.basic.clone_from(&b.basic);
        self.state.clone_from(&b.state);
        self.sigma.clone_from(&b.sigma);
        self.stale = true;
        let first_art = self.n + self.m;
        for j in first_art..self.state.len() {
            if self.state[j] != State::Basic {
                self.lo[j] = 0.0;
                self.hi[j] = 0.0;
                self.x[j] = 0.0;
            } else {
                self.lo[j] = 0.0;
                self.hi[j] = 0.0;
            }
        }
    }

    pub fn result(&self, status: LpStatus) -> LpResult {
        let n = self.n;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = self.model.objective(&x);
        let duals = (0..self.m).map(|i| -self.d[n + i]).collect();
        LpResult { status, x, objective, duals, reduced_costs: self.d[..n].to_vec(), pivots: self.pivots }
    }
}

pub fn solve_lp(model: &MipModel) -> LpResult {
    solve_lp_with(model, LpOptions::default())
}

pub fn solve_lp_with(model: &MipModel, opts: LpOptions) -> LpResult {
    let mut s = Simplex::new(model, opts);
    let st = s.solve();
    s.result(st)
}

/// Lagrangian dual value `bᵀy + Σ_j min_{x_j ∈ [l_j, u_j]} (c_j - a_jᵀy) x_j`
/// for row multipliers `y`; `-∞` when a multiplier has the wrong sign.
pub fn dual_objective(model: &MipModel, y: &[f64], tol: f64) -> f64 {
    let mut val = model.obj_const;
    for (r, &yi) in model.rows.iter().zip(y) {
        let bad = match r.sense {
            Sense::Le => yi > tol,
            Sense::Ge => yi < -tol,
            Sense::Eq => false,
        };
        if bad {
            return f64::NEG_INFINITY;
        }
        val += r.rhs * yi;
    }
    let mut d = model.obj.clone();
    for (r, &yi) in model.rows.iter().zip(y) {
        for &(j, a) in &r.coefs {
            d[j] -= a * yi;
        }
    }
    for (v, &dj) in model.vars.iter().zip(&d) {
        if dj > tol {
            if !v.lo.is_finite() {
                return f64::NEG_INFINITY;
            }
            val += dj * v.lo;
        } else if dj < -tol {
            if !v.hi.is_finite() {
                return f64::NEG_INFINITY;
            }
            val += dj * v.hi;
        } else if dj != 0.0 {
            let bound = if dj > 0.0 { v.lo } else { v.hi };
            if bound.is_finite() {
                val += dj * bound;
            }
        }
    }
    val
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_lower_bound_row() {
        let mut m = MipModel::new();
        let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        m.add_row("r", &[(x, 1.0)], Sense::Ge, 3.0);
        let r = solve_lp(&m);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_case() {
        let mut m = MipModel::new();
        let x = m.add_var("x", 0.0, 1.0, -1.0);
        let y = m.add_var("y", 0.0, 1.0, -1.0);
        m.add_row("r", &[(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let r = solve_lp(&m);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut m = MipModel::new();
        let x = m.add_var("x", 0.0, 1.0, 1.0);
        m.add_row("r", &[(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&m).status, LpStatus::Infeasible);
        let mut m = MipModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY, -1.0);
        m.add_row("r", &[(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&m).status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_duals() {
        // min 2x + 3y s.t. x + y = 4, x - y <= 1, x,y >= 0
        let mut m = MipModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY, 2.0);
        let y = m.add_var("y", 0.0, f64::INFINITY, 3.0);
        m.add_row("sum", &[(x, 1.0), (y, 1.0)], Sense::Eq, 4.0);
        m.add_row("diff", &[(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        let r = solve_lp(&m);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 2.5).abs() < 1e-12 && (r.x[1] - 1.5).abs() < 1e-12);
        assert!((r.objective - 9.5).abs() < 1e-12);
        let dual = dual_objective(&m, &r.duals, 1e-9);
        assert!((dual - r.objective).abs() < 1e-9);
    }

    #[test]
    fn warm_resolve_after_bound_change() {
        let mut m = MipModel::new();
        let x = m.add_var("x", 0.0, 1.0, -1.0);
        let y = m.add_var("y", 0.0, 1.0, -2.0);
        m.add_row("r", &[(x, 1.0), (y, 1.0)], Sense::Le, 1.5);
        let mut s = Simplex::new(&m, LpOptions::default());
        assert_eq!(s.solve(), LpStatus::Optimal);
        let r = s.result(LpStatus::Optimal);
        assert!((r.objective + 2.5).abs() < 1e-12);
        s.set_bounds(y, 0.0, 0.25);
        let st = s.resolve();
        let r = s.result(st);
        assert_eq!(st, LpStatus::Optimal);
        assert!((r.objective + 1.5).abs() < 1e-12, "{r:?}");
        let basis = s.basis();
        s.set_bounds(x, 0.0, 0.0);
        s.load_basis(&basis);
        let st = s.resolve();
        assert!((s.result(st).objective + 0.5).abs() < 1e-12);
    }
}
