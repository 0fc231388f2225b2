//! Best-first branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use serde::Serialize;

use super::model::MipModel;
use super::simplex::{Basis, LpOptions, LpStatus, Simplex};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MipOptions {
    /// Relative gap at which the search stops.
    pub gap_limit: f64,
    /// Absolute gap floor, so a zero relative limit still terminates.
    pub abs_gap: f64,
    pub node_limit: usize,
    pub int_tol: f64,
    pub lp: LpOptions,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self { gap_limit: 1e-4, abs_gap: 1e-10, node_limit: 200_000, int_tol: 1e-6, lp: LpOptions::default() }
    }
}

/// `Optimal`: proven within the gap limit. `GapLimit`: node limit reached with
/// an incumbent outside the gap limit. `IterationLimit`: stopped without an
/// incumbent. `Infeasible`: no integer-feasible point exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MipStatus {
    Optimal,
    Infeasible,
    GapLimit,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_pivots: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl MipSolution {
    pub fn has_solution(&self) -> bool {
        matches!(self.status, MipStatus::Optimal | MipStatus::GapLimit)
    }
}

struct Node {
    id: usize,
    parent: usize,
    fixes: Vec<(usize, f64)>,
    basis: Option<Rc<Basis>>,
}

#[derive(PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    // Reversed so that the max-heap pops the smallest bound, then the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

pub fn solve_mip(model: &MipModel, opts: MipOptions) -> Result<MipSolution> {
    solve_mip_with_hint(model, opts, None)
}

/// Branch-and-bound; `hint` gives binary values (by variable index) whose LP
/// completion seeds the incumbent.
pub fn solve_mip_with_hint(model: &MipModel, opts: MipOptions, hint: Option<&[(usize, f64)]>) -> Result<MipSolution> {
    model.validate()?;
    let start = Instant::now();
    let binaries = model.binaries();
    let root_lo: Vec<f64> = model.vars.iter().map(|v| v.lo).collect();
    let root_hi: Vec<f64> = model.vars.iter().map(|v| v.hi).collect();
    let mut lp = Simplex::new(model, opts.lp);

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let tol_gap = |inc: f64| (opts.gap_limit * inc.abs()).max(opts.abs_gap);
    let finish = |status: MipStatus, incumbent: Option<(f64, Vec<f64>)>, bound: f64, nodes: usize, pivots: usize| {
        let (objective, x) = incumbent.unwrap_or((f64::INFINITY, Vec::new()));
        let gap = if objective.is_finite() && bound.is_finite() {
            ((objective - bound) / objective.abs().max(1e-12)).max(0.0)
        } else {
            f64::INFINITY
        };
        Ok(MipSolution { status, x, objective, bound, gap, nodes, lp_pivots: pivots, wall_time: start.elapsed().as_secs_f64() })
    };

    let root_status = lp.solve();
    match root_status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return finish(MipStatus::Infeasible, None, f64::INFINITY, 1, lp.pivots()),
        _ => return finish(MipStatus::IterationLimit, None, f64::NEG_INFINITY, 1, lp.pivots()),
    }
    let root = lp.result(root_status);
    let root_basis = Rc::new(lp.basis());

    if let Some(hint) = hint {
        for &(j, v) in hint {
            lp.set_bounds(j, v, v);
        }
        let st = lp.resolve();
        if st == LpStatus::Optimal {
            let r = lp.result(st);
            let mut x = r.x;
            for &j in &binaries {
                x[j] = x[j].round();
            }
            incumbent = Some((model.objective(&x), x));
        }
        for &(j, _) in hint {
            lp.set_bounds(j, root_lo[j], root_hi[j]);
        }
        lp.load_basis(&root_basis);
    }

    let mut heap = BinaryHeap::new();
    let mut nodes: Vec<Option<Node>> = Vec::new();
    nodes.push(Some(Node { id: 0, parent: usize::MAX, fixes: Vec::new(), basis: None }));
    heap.push(Key(root.objective, 0));
    let mut solved = 0usize;
    let mut last_solved = usize::MAX;
    let mut root_result = Some(root);
    let mut applied: Vec<(usize, f64)> = Vec::new();
    let mut lp_trouble = false;

    while let Some(Key(bound, id)) = heap.pop() {
        let node = nodes[id].take().expect("queued node");
        if let Some(inc) = incumbent.as_ref().map(|i| i.0) {
            if inc - bound <= tol_gap(inc) {
                return finish(MipStatus::Optimal, incumbent, bound.min(inc), solved, lp.pivots());
            }
        }
        if solved >= opts.node_limit {
            let status = if incumbent.is_some() { MipStatus::GapLimit } else { MipStatus::IterationLimit };
            return finish(status, incumbent, bound, solved, lp.pivots());
        }
        solved += 1;

        let result = if id == 0 {
            root_result.take().expect("root solved once")
        } else {
            for &(j, _) in &applied {
                lp.set_bounds(j, root_lo[j], root_hi[j]);
            }
            for &(j, v) in &node.fixes {
                lp.set_bounds(j, v, v);
            }
            applied.clone_from(&node.fixes);
            if last_solved != node.parent {
                if let Some(b) = &node.basis {
                    lp.load_basis(b);
                }
            }
            let st = lp.resolve();
            last_solved = id;
            if st != LpStatus::Optimal {
                if st != LpStatus::Infeasible {
                    lp_trouble = true;
                }
                continue;
            }
            lp.result(st)
        };
        if id == 0 {
            last_solved = 0;
        }
        if let Some((inc, _)) = &incumbent {
            if result.objective >= *inc - tol_gap(*inc) {
                continue;
            }
        }
        // Most fractional binary, ties to the lowest index.
        let mut branch = None;
        let mut best = opts.int_tol;
        for &j in &binaries {
            let f = result.x[j] - result.x[j].floor();
            let frac = f.min(1.0 - f);
            if frac > best {
                best = frac;
                branch = Some(j);
            }
        }
        match branch {
            None => {
                let mut x = result.x;
                for &j in &binaries {
                    x[j] = x[j].round();
                }
                let obj = model.objective(&x);
                if incumbent.as_ref().map_or(true, |(inc, _)| obj < *inc) {
                    incumbent = Some((obj, x));
                }
            }
            Some(j) => {
                let basis = Rc::new(lp.basis());
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    let cid = nodes.len();
                    nodes.push(Some(Node { id: cid, parent: node.id, fixes, basis: Some(basis.clone()) }));
                    heap.push(Key(result.objective, cid));
                }
            }
        }
    }
    match incumbent {
        Some((inc, _)) => {
            let status = if lp_trouble { MipStatus::GapLimit } else { MipStatus::Optimal };
            finish(status, incumbent, inc, solved, lp.pivots())
        }
        None if lp_trouble => finish(MipStatus::IterationLimit, None, f64::NEG_INFINITY, solved, lp.pivots()),
        None => finish(MipStatus::Infeasible, None, f64::INFINITY, solved, lp.pivots()),
    }
}
