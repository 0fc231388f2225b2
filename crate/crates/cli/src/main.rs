//! `vpo`: command-line harness for the voltage positioning toolkit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use vpo_core::acpf::{feasibility_report, solve_loadflow, DeviceSetting};
use vpo_core::distflow::{build_matrices, certify_h_nonneg, OperatingPoint};
use vpo_core::envelope::{build_envelopes, delta_box, taylor_at, QuadMode};
use vpo_core::feeder::{load_feeder, load_profile};
use vpo_core::mip::write_lp;
use vpo_core::verify::{verify_envelopes, VerifyOptions};
use vpo_core::vpo::{assemble_p3, run_algorithm1, scale_study, schedule_horizon, sweep_alpha, BasePoint, VpoOptions};
use vpo_core::{fixtures, Feeder, LoadProfile, Matrix64};

#[derive(Parser, Debug)]
#[command(name = "vpo", version, about = "Voltage positioning optimization on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump the DistFlow matrices as CSV and the H certificate as JSON.
    Matrices(Common),
    /// Run the load flow for one period and device setting.
    Acpf(AcpfArgs),
    /// Run the enhancement loop for one period.
    Solve(Common),
    /// Solve every period of a profile independently.
    Schedule(ScheduleArgs),
    /// Sweep the violation weight alpha.
    Sweep(SweepArgs),
    /// Monte-Carlo sandwich and underbound checks of the envelopes.
    Verify(VerifyArgs),
    /// Single-iteration solve time against the number of capacitor banks.
    Scale(ScaleArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Const,
    Pwl,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Feeder JSON file, or a bundled name (ieee13, ieee37, one-branch, three-node, three-node-cap).
    #[arg(long)]
    feeder: String,
    /// Load profile CSV file, or a bundled name (ieee13-peak, ieee13-24h, ieee13-high-pv, ieee37-peak, ieee37-24h).
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, default_value_t = 0)]
    period: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Relative MIP gap.
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    /// Secant pieces of each DER quadratic cost.
    #[arg(long, default_value_t = 16)]
    segments: usize,
    #[arg(long, value_enum, default_value_t = Mode::Const)]
    quad_mode: Mode,
    /// Output directory for JSON and CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the first MILP in LP format to the output directory.
    #[arg(long)]
    dump_lp: bool,
    /// Remove every capacitor bank from the feeder.
    #[arg(long)]
    no_caps: bool,
}

#[derive(Args, Debug)]
struct AcpfArgs {
    #[command(flatten)]
    common: Common,
    /// Tap positions, comma separated.
    #[arg(long, value_delimiter = ',')]
    taps: Option<Vec<i32>>,
    /// Switched-in units per bank, comma separated.
    #[arg(long, value_delimiter = ',')]
    caps: Option<Vec<u32>>,
    /// DER reactive injections (pu), comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    qg: Option<Vec<f64>>,
    #[arg(long, default_value_t = vpo_core::acpf::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[command(flatten)]
    common: Common,
    /// Also solve the horizon with every capacitor bank removed.
    #[arg(long)]
    compare: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1e-5)]
    alpha_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    alpha_max: f64,
    /// Log-spaced points between the two ends.
    #[arg(long, default_value_t = 9)]
    points: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

#[derive(Args, Debug)]
struct ScaleArgs {
    #[command(flatten)]
    common: Common,
    /// Bank counts as `a..b` (inclusive) or a comma list; defaults to every count from one.
    #[arg(long)]
    caps: Option<String>,
}

impl Common {
    fn options(&self) -> Result<VpoOptions> {
        if !(self.epsilon > 0.0) || !(self.gap >= 0.0) || self.segments < 2 {
            bail!("epsilon must be positive, gap non-negative and segments at least 2");
        }
        let mut o = VpoOptions { epsilon: self.epsilon, qg_segments: self.segments, ..Default::default() };
        o.mip.gap_limit = self.gap;
        o.envelope.mode = match self.quad_mode {
            Mode::Const => QuadMode::Const,
            Mode::Pwl => QuadMode::Pwl,
        };
        Ok(o)
    }

    fn feeder(&self) -> Result<Feeder> {
        let f = if Path::new(&self.feeder).is_file() {
            load_feeder(&self.feeder).with_context(|| format!("reading feeder {}", self.feeder))?
        } else if let Some(f) = fixtures::feeder(&self.feeder) {
            f?
        } else {
            bail!("feeder {} is neither a file nor a bundled fixture", self.feeder);
        };
        Ok(if self.no_caps { f.without_caps() } else { f })
    }

    /// The named profile; without one, the bundled peak profile of a bundled
    /// feeder, else a single no-load period.
    fn profile(&self, f: &Feeder) -> Result<LoadProfile> {
        let name = match &self.profile {
            Some(p) => p.clone(),
            None if matches!(self.feeder.as_str(), "ieee13" | "ieee37") => format!("{}-peak", self.feeder),
            None => {
                warn!("no profile given, using a single no-load period");
                return Ok(LoadProfile::zeros(f.n(), 1));
            }
        };
        let p = if Path::new(&name).is_file() {
            load_profile(&name, f).with_context(|| format!("reading profile {name}"))?
        } else if let Some(p) = fixtures::profile(&name, f) {
            p?
        } else {
            bail!("profile {name} is neither a file nor a bundled fixture");
        };
        if self.period >= p.horizon() {
            bail!("period {} outside a horizon of {}", self.period, p.horizon());
        }
        Ok(p)
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(d) = &self.out {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(self.out.as_deref())
    }

    fn reject_dump_lp(&self) -> Result<()> {
        if self.dump_lp {
            bail!("--dump-lp is only supported by solve");
        }
        Ok(())
    }
}

fn uncontrolled(profile: &LoadProfile, t: usize) -> (Vec<f64>, Vec<f64>) {
    (profile.injections(t), profile.q_l[t].iter().map(|v| -v).collect())
}

fn write_json<T: Serialize>(dir: Option<&Path>, name: &str, value: &T) -> Result<()> {
    if let Some(d) = dir {
        let path = d.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_csv(dir: Option<&Path>, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<Option<PathBuf>> {
    let Some(d) = dir else { return Ok(None) };
    let path = d.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(Some(path))
}

fn matrix_rows(m: &Matrix64) -> Vec<Vec<String>> {
    (0..m.rows()).map(|i| m.row(i).iter().map(|v| format!("{v:e}")).collect()).collect()
}

fn cmd_matrices(c: &Common) -> Result<serde_json::Value> {
    c.reject_dump_lp()?;
    let f = c.feeder()?;
    let m = build_matrices::<f64>(&f)?;
    let cert = certify_h_nonneg(&m);
    let dir = c.out_dir()?;
    let mut files = Vec::new();
    for (name, mat) in [
        ("B_n", &m.b_n),
        ("A", &m.a),
        ("C", &m.c),
        ("D_R", &m.d_r),
        ("D_X", &m.d_x),
        ("M_p", &m.m_p),
        ("M_q", &m.m_q),
        ("H", &m.h),
    ] {
        let header: Vec<String> = (1..=mat.cols()).map(|k| f.node_ids[k].clone()).collect();
        if let Some(p) = write_csv(dir, &format!("{name}.csv"), &header, &matrix_rows(mat))? {
            files.push(p.display().to_string());
        }
    }
    write_json(dir, "certificate.json", &cert)?;
    Ok(json!({ "nodes": &f.node_ids[1..], "certificate": cert, "files": files }))
}

fn operating_point_rows(f: &Feeder, op: &OperatingPoint<f64>) -> Vec<Vec<String>> {
    (0..op.n())
        .map(|i| {
            vec![
                f.node_ids[i + 1].clone(),
                f.node_ids[f.branches[i].from].clone(),
                format!("{:e}", op.p[i]),
                format!("{:e}", op.q[i]),
                format!("{:e}", op.big_p[i]),
                format!("{:e}", op.big_q[i]),
                format!("{:e}", op.v[i]),
                format!("{:e}", op.l[i]),
            ]
        })
        .collect()
}

fn cmd_acpf(a: &AcpfArgs) -> Result<serde_json::Value> {
    let c = &a.common;
    c.reject_dump_lp()?;
    let f = c.feeder()?;
    let profile = c.profile(&f)?;
    let mut s = DeviceSetting::initial(&f);
    if let Some(t) = &a.taps {
        s.n_tr = t.clone();
    }
    if let Some(u) = &a.caps {
        s.n_cp = u.clone();
    }
    if let Some(q) = &a.qg {
        s.q_g = q.clone();
    }
    let (p, q) = uncontrolled(&profile, c.period);
    let op = solve_loadflow(&f, &p, &q, &s, a.tol, vpo_core::acpf::DEFAULT_MAX_ITER)?;
    let report = feasibility_report(&f, &op);
    let dir = c.out_dir()?;
    let header: Vec<String> = ["node", "parent", "p", "q", "P", "Q", "V", "l"].map(String::from).to_vec();
    write_csv(dir, "operating_point.csv", &header, &operating_point_rows(&f, &op))?;
    write_json(dir, "feasibility.json", &report)?;
    Ok(json!({ "period": c.period, "setting": s, "feasibility": report }))
}

fn cmd_solve(c: &Common) -> Result<serde_json::Value> {
    if c.dump_lp && c.out.is_none() {
        bail!("--dump-lp needs --out");
    }
    let f = c.feeder()?;
    let profile = c.profile(&f)?;
    let opts = c.options()?;
    let dir = c.out_dir()?;
    if c.dump_lp {
        let (p, q) = uncontrolled(&profile, c.period);
        let s = DeviceSetting::initial(&f);
        let m = build_matrices::<f64>(&f)?;
        let op = solve_loadflow(&f, &p, &q, &s, opts.loadflow_tol, opts.loadflow_max_iter)?;
        let env = build_envelopes(&taylor_at(&op)?, &delta_box(&f, &m, &op, &q)?, opts.envelope)?;
        let problem = assemble_p3(&f, &m, &env, BasePoint { op: &op, setting: &s, p: &p, q_uncontrolled: &q }, opts.qg_segments)?;
        let path = dir.expect("checked above").join("p3.lp");
        fs::write(&path, write_lp(&problem.model)).with_context(|| format!("writing {}", path.display()))?;
        info!("wrote {}", path.display());
    }
    let run = run_algorithm1(&f, &profile, c.period, &opts)?;
    write_json(dir, "run.json", &run)?;
    let mut header = vec!["node".to_string(), "initial".to_string()];
    header.extend(run.iterations.iter().map(|i| format!("k{}", i.k)));
    let initial = solve_loadflow(
        &f,
        &profile.injections(c.period),
        &profile.q_l[c.period].iter().map(|v| -v).collect::<Vec<_>>(),
        &run.initial_setting,
        opts.loadflow_tol,
        opts.loadflow_max_iter,
    )?;
    let rows: Vec<Vec<String>> = (0..f.n())
        .map(|i| {
            let mut r = vec![f.node_ids[i + 1].clone(), format!("{:e}", initial.v[i])];
            r.extend(run.iterations.iter().map(|it| format!("{:e}", it.op.v[i])));
            r
        })
        .collect();
    write_csv(dir, "voltages.csv", &header, &rows)?;
    Ok(serde_json::to_value(&run)?)
}

fn cmd_schedule(a: &ScheduleArgs) -> Result<serde_json::Value> {
    let c = &a.common;
    c.reject_dump_lp()?;
    if a.compare && c.no_caps {
        bail!("--compare and --no-caps cannot be combined");
    }
    let f = c.feeder()?;
    let profile = c.profile(&f)?;
    let opts = c.options()?;
    let s = schedule_horizon(&f, &profile, &opts, a.compare, false);
    let dir = c.out_dir()?;
    write_json(dir, "schedule.json", &s)?;
    let mut header: Vec<String> =
        ["period", "n_tr", "n_cp", "q_cap_total", "q_g_total", "q_g_abs", "violation", "objective", "iterations", "failure"]
            .map(String::from)
            .to_vec();
    if a.compare {
        header.extend(["q_g_abs_no_caps", "violation_no_caps"].map(String::from));
    }
    let join = |v: &[String]| v.join(" ");
    let rows: Vec<Vec<String>> = s
        .periods
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let mut r = vec![
                p.period.to_string(),
                join(&p.n_tr.iter().map(|n| n.to_string()).collect::<Vec<_>>()),
                join(&p.n_cp.iter().map(|n| n.to_string()).collect::<Vec<_>>()),
                format!("{:e}", p.q_cap_total),
                format!("{:e}", p.q_g_total),
                format!("{:e}", p.q_g_abs),
                format!("{:e}", p.violation),
                format!("{:e}", p.objective),
                p.iterations.to_string(),
                p.failure.clone().unwrap_or_default(),
            ];
            if let Some(w) = &s.without_caps {
                r.push(format!("{:e}", w[t].q_g_abs));
                r.push(format!("{:e}", w[t].violation));
            }
            r
        })
        .collect();
    write_csv(dir, "dispatch.csv", &header, &rows)?;
    Ok(serde_json::to_value(&s)?)
}

fn cmd_sweep(a: &SweepArgs) -> Result<serde_json::Value> {
    let c = &a.common;
    c.reject_dump_lp()?;
    if !(a.alpha_min > 0.0 && a.alpha_max >= a.alpha_min) || a.points == 0 {
        bail!("need 0 < alpha-min <= alpha-max and at least one point");
    }
    let f = c.feeder()?;
    let profile = c.profile(&f)?;
    let opts = c.options()?;
    let alphas: Vec<f64> = if a.points == 1 {
        vec![a.alpha_min]
    } else {
        let (lo, hi) = (a.alpha_min.log10(), a.alpha_max.log10());
        (0..a.points).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (a.points - 1) as f64)).collect()
    };
    let r = sweep_alpha(&f, &profile, c.period, &alphas, &opts)?;
    let dir = c.out_dir()?;
    write_json(dir, "sweep.json", &r)?;
    let header: Vec<String> = ["alpha", "q_g_abs", "violation", "objective", "iterations", "failure"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = r
        .points
        .iter()
        .map(|p| {
            vec![
                format!("{:e}", p.alpha),
                format!("{:e}", p.q_g_abs),
                format!("{:e}", p.violation),
                format!("{:e}", p.objective),
                p.iterations.to_string(),
                p.failure.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(dir, "sweep.csv", &header, &rows)?;
    Ok(serde_json::to_value(&r)?)
}

fn cmd_verify(a: &VerifyArgs) -> Result<(serde_json::Value, bool)> {
    let c = &a.common;
    c.reject_dump_lp()?;
    let f = c.feeder()?;
    let profile = c.profile(&f)?;
    let opts = c.options()?;
    let (p, q) = uncontrolled(&profile, c.period);
    let vo = VerifyOptions { samples: a.samples, seed: c.seed, envelope: opts.envelope, ..Default::default() };
    let r = verify_envelopes(&f, &p, &q, &vo)?;
    write_json(c.out_dir()?, "verify.json", &r)?;
    Ok((serde_json::to_value(&r)?, r.pass))
}

fn parse_counts(text: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().with_context(|| format!("bad count {s:?}"))).collect()
}

fn cmd_scale(a: &ScaleArgs) -> Result<serde_json::Value> {
    let c = &a.common;
    c.reject_dump_lp()?;
    if c.no_caps {
        bail!("--no-caps cannot be combined with scale");
    }
    let f = c.feeder()?;
    let profile = c.profile(&f)?;
    let opts = c.options()?;
    let counts = match &a.caps {
        Some(s) => parse_counts(s)?,
        None => (1..=f.caps.len()).collect(),
    };
    let pts = scale_study(&f, &profile, c.period, &counts, &opts)?;
    let dir = c.out_dir()?;
    write_json(dir, "scale.json", &pts)?;
    let header: Vec<String> = ["caps", "ders", "binaries", "nodes", "lp_pivots", "wall_time", "status"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| {
            vec![
                p.caps.to_string(),
                p.ders.to_string(),
                p.mip.num_binaries.to_string(),
                p.mip.nodes.to_string(),
                p.mip.lp_pivots.to_string(),
                format!("{:.6}", p.wall_time),
                format!("{:?}", p.mip.status),
            ]
        })
        .collect();
    write_csv(dir, "scale.csv", &header, &rows)?;
    Ok(serde_json::to_value(&pts)?)
}

fn run(cli: &Cli) -> Result<bool> {
    let (value, ok) = match &cli.command {
        Command::Matrices(c) => (cmd_matrices(c)?, true),
        Command::Acpf(a) => (cmd_acpf(a)?, true),
        Command::Solve(c) => (cmd_solve(c)?, true),
        Command::Schedule(a) => (cmd_schedule(a)?, true),
        Command::Sweep(a) => (cmd_sweep(a)?, true),
        Command::Verify(a) => cmd_verify(a)?,
        Command::Scale(a) => (cmd_scale(a)?, true),
    };
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(&value)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(ok),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VPO_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", json!({ "error": chain[0], "causes": &chain[1..] }));
            ExitCode::from(2)
        }
    }
}
