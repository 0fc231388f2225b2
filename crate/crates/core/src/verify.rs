//! Seeded Monte-Carlo checks of the current envelopes around one load-flow point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::acpf::{solve_loadflow, DeviceSetting};
use crate::distflow::{build_matrices, certify_h_nonneg, Certificate};
use crate::envelope::{build_envelopes, delta_box, taylor_at, voltage_envelopes, EnvelopeOptions, QuadMode};
use crate::error::Result;
use crate::feeder::Feeder;

pub const SANDWICH_V_TOL: f64 = 1e-8;
pub const SANDWICH_L_TOL: f64 = 1e-10;
pub const UNDERBOUND_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub envelope: EnvelopeOptions,
    pub loadflow_tol: f64,
    pub loadflow_max_iter: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples: 1000, seed: 0, envelope: EnvelopeOptions::default(), loadflow_tol: 1e-12, loadflow_max_iter: 500 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub samples: usize,
    /// Samples whose load flow failed to converge.
    pub skipped: usize,
    pub voltage_violations: usize,
    pub current_violations: usize,
    /// Largest `max(V⁻ - V, V - V⁺)` seen, negative when strictly inside.
    pub worst_voltage_excursion: f64,
    pub worst_current_excursion: f64,
    /// Samples whose deviation left the δ-box.
    pub box_escapes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct UnderboundReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `l_min - l_true`.
    pub worst: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub mode: QuadMode,
    pub certificate: Certificate,
    pub sandwich: SandwichReport,
    pub underbound: UnderboundReport,
    pub pass: bool,
}

/// Uniform draw from the declared device ranges.
pub fn random_setting<R: Rng>(feeder: &Feeder, rng: &mut R) -> DeviceSetting {
    DeviceSetting {
        n_tr: feeder.oltcs.iter().map(|o| rng.gen_range(o.n_min..=o.n_max)).collect(),
        n_cp: feeder.caps.iter().map(|c| rng.gen_range(c.n_min..=c.n_max)).collect(),
        q_g: feeder.ders.iter().map(|d| if d.q_max > d.q_min { rng.gen_range(d.q_min..=d.q_max) } else { d.q_min }).collect(),
    }
}

/// Builds the envelopes at the initial setting, then samples device settings
/// (sandwich suite) and box deviations (underbound suite).
pub fn verify_envelopes(feeder: &Feeder, p: &[f64], q_uncontrolled: &[f64], opts: &VerifyOptions) -> Result<VerifyReport> {
    let m = build_matrices::<f64>(feeder)?;
    let certificate = certify_h_nonneg(&m);
    let base = solve_loadflow(feeder, p, q_uncontrolled, &DeviceSetting::initial(feeder), opts.loadflow_tol, opts.loadflow_max_iter)?;
    let taylor = taylor_at(&base)?;
    let bx = delta_box(feeder, &m, &base, q_uncontrolled)?;
    let env = build_envelopes(&taylor, &bx, opts.envelope)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut sw = SandwichReport {
        samples: opts.samples,
        skipped: 0,
        voltage_violations: 0,
        current_violations: 0,
        worst_voltage_excursion: f64::NEG_INFINITY,
        worst_current_excursion: f64::NEG_INFINITY,
        box_escapes: 0,
    };
    for _ in 0..opts.samples {
        let s = random_setting(feeder, &mut rng);
        let Ok(op) = solve_loadflow(feeder, p, q_uncontrolled, &s, opts.loadflow_tol, opts.loadflow_max_iter) else {
            sw.skipped += 1;
            continue;
        };
        let deltas = env.deltas(&op);
        let inside = deltas.iter().zip(&bx.branches).all(|(d, b)| {
            b.dp.contains(d[0], SANDWICH_L_TOL) && b.dq.contains(d[1], SANDWICH_L_TOL) && b.dv.contains(d[2], SANDWICH_L_TOL)
        });
        if !inside {
            sw.box_escapes += 1;
        }
        let (lmin, lmax) = env.l_bounds(&deltas);
        let l_exc = (0..feeder.n()).map(|b| (lmin[b] - op.l[b]).max(op.l[b] - lmax[b])).fold(f64::NEG_INFINITY, f64::max);
        let (vp, vm) = voltage_envelopes(&m, &op.p, &op.q, &op.tap_sq, &lmin, &lmax)?;
        let v_exc = (0..feeder.n()).map(|i| (vm[i] - op.v[i]).max(op.v[i] - vp[i])).fold(f64::NEG_INFINITY, f64::max);
        sw.worst_current_excursion = sw.worst_current_excursion.max(l_exc);
        sw.worst_voltage_excursion = sw.worst_voltage_excursion.max(v_exc);
        if l_exc > SANDWICH_L_TOL {
            sw.current_violations += 1;
        }
        if v_exc > SANDWICH_V_TOL {
            sw.voltage_violations += 1;
        }
    }

    let mut ub = UnderboundReport { samples: 0, violations: 0, worst: f64::NEG_INFINITY };
    for (e, b) in env.branches.iter().zip(&bx.branches) {
        let t = &e.taylor;
        for _ in 0..opts.samples {
            let d = [
                b.dp.lo + rng.gen::<f64>() * b.dp.width(),
                b.dq.lo + rng.gen::<f64>() * b.dq.width(),
                b.dv.lo + rng.gen::<f64>() * b.dv.width(),
            ];
            let (pp, qq, vv) = (t.p0 + d[0], t.q0 + d[1], t.v0 + d[2]);
            let gap = e.l_min(&d) - (pp * pp + qq * qq) / vv;
            ub.worst = ub.worst.max(gap);
            if gap > UNDERBOUND_TOL {
                ub.violations += 1;
            }
            ub.samples += 1;
        }
    }

    let pass = certificate.pass
        && sw.voltage_violations == 0
        && sw.current_violations == 0
        && sw.box_escapes == 0
        && sw.skipped == 0
        && ub.violations == 0;
    Ok(VerifyReport { seed: opts.seed, mode: opts.envelope.mode, certificate, sandwich: sw, underbound: ub, pass })
}
