//! Radial feeder description and time-series net demand.
//!
//! Documents are parsed into per-unit quantities and re-indexed so that every
//! branch's parent node precedes its child node. Node `0` is the substation and
//! branch `b` always feeds node `b + 1`.

use std::collections::{HashMap, VecDeque};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TAP_STEP: f64 = 0.00625;
pub const DEFAULT_TAP_MIN: i32 = -16;
pub const DEFAULT_TAP_MAX: i32 = 16;
pub const DEFAULT_V_LO: f64 = 0.98 * 0.98;
pub const DEFAULT_V_HI: f64 = 1.02 * 1.02;
pub const DEFAULT_V_MIN: f64 = 0.95 * 0.95;
pub const DEFAULT_V_MAX: f64 = 1.05 * 1.05;
pub const DEFAULT_ALPHA: f64 = 0.001;

/// Sign class of the branch reactances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReactanceClass {
    Inductive,
    Capacitive,
    Resistive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub id: String,
    /// Canonical parent node.
    pub from: usize,
    /// Canonical child node, always `index + 1`.
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

/// Per-node squared-voltage limits and objective weight (all in pu²).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Der {
    pub node: usize,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Oltc {
    pub branch: usize,
    pub tau: f64,
    pub n_min: i32,
    pub n_max: i32,
}

impl Oltc {
    /// Tap ratio `1 + tau * n`.
    pub fn ratio(&self, n: i32) -> f64 {
        1.0 + self.tau * n as f64
    }

    /// Number of binary segments (`n_max - n_min`).
    pub fn segments(&self) -> usize {
        (self.n_max - self.n_min) as usize
    }

    pub fn neutral(&self) -> i32 {
        0.clamp(self.n_min, self.n_max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cap {
    pub node: usize,
    pub y_c: f64,
    pub n_min: u32,
    pub n_max: u32,
    /// Admittance of each switchable unit, length `n_max`.
    pub steps: Vec<f64>,
}

impl Cap {
    /// Total admittance with the first `units` steps switched in.
    pub fn admittance(&self, units: u32) -> f64 {
        self.steps.iter().take(units as usize).sum()
    }
}

/// Validated radial feeder in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct Feeder {
    pub base_mva: f64,
    pub base_kv: f64,
    /// Substation squared voltage (pu²).
    pub v0: f64,
    /// Document id of every canonical node, substation first.
    pub node_ids: Vec<String>,
    /// Branch `b` feeds node `b + 1`.
    pub branches: Vec<Branch>,
    /// Limits of nodes `1..=n`, stored at index `k - 1`.
    pub limits: Vec<NodeLimits>,
    pub ders: Vec<Der>,
    pub oltcs: Vec<Oltc>,
    pub caps: Vec<Cap>,
    pub class: ReactanceClass,
    /// Canonical index of the i-th non-substation node of the source document.
    pub document_order: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl Feeder {
    /// Number of non-substation nodes (= number of branches).
    pub fn n(&self) -> usize {
        self.branches.len()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        (node > 0).then(|| self.branches[node - 1].from)
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn limits_of(&self, node: usize) -> &NodeLimits {
        &self.limits[node - 1]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    /// OLTC index located on `branch`, if any.
    pub fn oltc_on(&self, branch: usize) -> Option<usize> {
        self.oltcs.iter().position(|o| o.branch == branch)
    }

    /// Nodes on the path from the substation to `node` (inclusive, excluding 0), root first.
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut k = node;
        while k != 0 {
            path.push(k);
            k = self.branches[k - 1].from;
        }
        path.reverse();
        path
    }

    /// Returns a copy with the capacitor banks removed.
    pub fn without_caps(&self) -> Feeder {
        Feeder { caps: Vec::new(), ..self.clone() }
    }

    /// Returns a copy keeping only the listed capacitor banks (by position in `caps`).
    pub fn with_cap_subset(&self, keep: &[usize]) -> Feeder {
        let caps = keep.iter().filter_map(|&i| self.caps.get(i).cloned()).collect();
        Feeder { caps, ..self.clone() }
    }

    /// Returns a copy with every node's objective weight set to `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Feeder {
        let mut f = self.clone();
        for l in &mut f.limits {
            l.alpha = alpha;
        }
        f
    }

    pub fn der_at(&self, node: usize) -> Option<&Der> {
        self.ders.iter().find(|d| d.node == node)
    }

    /// Serializes back into the document schema (canonical order, pu values).
    pub fn to_document(&self) -> FeederDocument {
        let id = |k: usize| self.node_ids[k].clone();
        FeederDocument {
            base_mva: self.base_mva,
            base_kv: self.base_kv,
            v0_pu: self.v0,
            substation: Some(id(0)),
            nodes: (1..=self.n())
                .map(|k| {
                    let l = self.limits_of(k);
                    NodeDoc {
                        id: id(k),
                        v_min: Some(l.v_min),
                        v_max: Some(l.v_max),
                        v_lo: Some(l.v_lo),
                        v_hi: Some(l.v_hi),
                        alpha: Some(l.alpha),
                    }
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchDoc {
                    id: Some(b.id.clone()),
                    from: id(b.from),
                    to: id(b.to),
                    r_pu: Some(b.r),
                    x_pu: Some(b.x),
                    r_ohm: None,
                    x_ohm: None,
                })
                .collect(),
            ders: self
                .ders
                .iter()
                .map(|d| DerDoc { node: id(d.node), q_min_pu: d.q_min, q_max_pu: d.q_max })
                .collect(),
            oltcs: self
                .oltcs
                .iter()
                .map(|o| OltcDoc {
                    branch: self.branches[o.branch].id.clone(),
                    tau: Some(o.tau),
                    n_min: Some(o.n_min),
                    n_max: Some(o.n_max),
                })
                .collect(),
            caps: self
                .caps
                .iter()
                .map(|c| CapDoc {
                    node: id(c.node),
                    y_c_pu: c.y_c,
                    n_min: Some(c.n_min),
                    n_max: c.n_max,
                    steps_pu: None,
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeederDocument {
    pub base_mva: f64,
    pub base_kv: f64,
    /// Substation squared voltage in pu².
    pub v0_pu: f64,
    /// Substation node id; defaults to the one node that is never a branch `to`.
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_id_opt")]
    pub substation: Option<String>,
    pub nodes: Vec<NodeDoc>,
    pub branches: Vec<BranchDoc>,
    #[serde(default)]
    pub ders: Vec<DerDoc>,
    #[serde(default)]
    pub oltcs: Vec<OltcDoc>,
    #[serde(default)]
    pub caps: Vec<CapDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeDoc {
    #[serde(deserialize_with = "de_id")]
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchDoc {
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_id_opt")]
    pub id: Option<String>,
    #[serde(deserialize_with = "de_id")]
    pub from: String,
    #[serde(deserialize_with = "de_id")]
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ohm: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerDoc {
    #[serde(deserialize_with = "de_id")]
    pub node: String,
    pub q_min_pu: f64,
    pub q_max_pu: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OltcDoc {
    #[serde(deserialize_with = "de_id")]
    pub branch: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<i32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapDoc {
    #[serde(deserialize_with = "de_id")]
    pub node: String,
    pub y_c_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<u32>,
    pub n_max: u32,
    /// Optional non-uniform per-unit admittance table (length `n_max`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_pu: Option<Vec<f64>>,
}

/// Ids may be written as JSON numbers or strings.
fn de_id<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        I(i64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::I(i) => i.to_string(),
    })
}

fn de_id_opt<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    de_id(d).map(Some)
}

// ---------------------------------------------------------------------------
// Parsing

pub fn parse_feeder_str(source: &str) -> Result<Feeder> {
    let doc: FeederDocument =
        serde_json::from_str(source).map_err(|e| Error::Malformed(e.to_string()))?;
    build_feeder(&doc)
}

pub fn parse_feeder<R: Read>(reader: R) -> Result<Feeder> {
    let doc: FeederDocument =
        serde_json::from_reader(reader).map_err(|e| Error::Malformed(e.to_string()))?;
    build_feeder(&doc)
}

pub fn load_feeder(path: impl AsRef<std::path::Path>) -> Result<Feeder> {
    parse_feeder_str(&std::fs::read_to_string(path)?)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Malformed(format!("{what} is not finite")))
    }
}

/// Validates a document and re-indexes it into canonical (breadth-first) order.
pub fn build_feeder(doc: &FeederDocument) -> Result<Feeder> {
    if !(doc.base_mva > 0.0 && doc.base_kv > 0.0) {
        return Err(Error::Malformed("base_mva and base_kv must be positive".into()));
    }
    if !(doc.v0_pu > 0.0 && doc.v0_pu.is_finite()) {
        return Err(Error::Malformed("v0_pu must be positive".into()));
    }
    let z_base = doc.base_kv * doc.base_kv / doc.base_mva;

    // Collect node ids: substation plus declared nodes plus anything referenced by branches.
    let mut ids: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    let mut intern = |id: &str, ids: &mut Vec<String>| -> usize {
        *lookup.entry(id.to_string()).or_insert_with(|| {
            ids.push(id.to_string());
            ids.len() - 1
        })
    };
    for nd in &doc.nodes {
        intern(&nd.id, &mut ids);
    }
    for b in &doc.branches {
        intern(&b.from, &mut ids);
        intern(&b.to, &mut ids);
    }
    let substation = match &doc.substation {
        Some(s) => s.clone(),
        None => {
            let tos: std::collections::HashSet<&str> =
                doc.branches.iter().map(|b| b.to.as_str()).collect();
            let roots: Vec<&String> = ids.iter().filter(|id| !tos.contains(id.as_str())).collect();
            match roots.as_slice() {
                [r] => (*r).clone(),
                [] => return Err(Error::Cycle { branch: "(no root)".into() }),
                _ => {
                    // Several candidate roots: prefer "0" if present.
                    if roots.iter().any(|r| r.as_str() == "0") {
                        "0".to_string()
                    } else {
                        return Err(Error::Disconnected(roots[1].clone()));
                    }
                }
            }
        }
    };
    let root = intern(&substation, &mut ids);
    let total = ids.len();
    if doc.branches.len() + 1 != total {
        // Either a cycle (too many branches) or a disconnected node (too few).
        if doc.branches.len() + 1 < total {
            let mut adj = vec![Vec::new(); total];
            for b in &doc.branches {
                let (f, t) = (lookup_id(&ids, &b.from), lookup_id(&ids, &b.to));
                adj[f].push(t);
                adj[t].push(f);
            }
            let seen = reach(&adj, root);
            let lost = (0..total).find(|&k| !seen[k]).unwrap_or(0);
            return Err(Error::Disconnected(ids[lost].clone()));
        }
    }

    // Undirected adjacency with branch indices; BFS from the root.
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); total];
    for (bi, b) in doc.branches.iter().enumerate() {
        let f = lookup_id(&ids, &b.from);
        let t = lookup_id(&ids, &b.to);
        if f == t {
            return Err(Error::Cycle { branch: branch_label(b, bi) });
        }
        adj[f].push((t, bi));
        adj[t].push((f, bi));
    }
    let mut canon = vec![usize::MAX; total];
    let mut order = Vec::with_capacity(total);
    let mut parent_branch = vec![usize::MAX; total];
    let mut used = vec![false; doc.branches.len()];
    let mut queue = VecDeque::new();
    canon[root] = 0;
    order.push(root);
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for &(v, bi) in &adj[u] {
            if used[bi] {
                continue;
            }
            used[bi] = true;
            if canon[v] != usize::MAX {
                return Err(Error::Cycle { branch: branch_label(&doc.branches[bi], bi) });
            }
            canon[v] = order.len();
            order.push(v);
            parent_branch[v] = bi;
            queue.push_back(v);
        }
    }
    if let Some(lost) = (0..total).find(|&k| canon[k] == usize::MAX) {
        return Err(Error::Disconnected(ids[lost].clone()));
    }
    if let Some(bi) = used.iter().position(|u| !u) {
        return Err(Error::Cycle { branch: branch_label(&doc.branches[bi], bi) });
    }
    let n = total - 1;

    let mut branches = Vec::with_capacity(n);
    let mut children = vec![Vec::new(); total];
    for k in 1..=n {
        let orig = order[k];
        let bi = parent_branch[orig];
        let b = &doc.branches[bi];
        let other = if lookup_id(&ids, &b.from) == orig { &b.to } else { &b.from };
        let from = canon[lookup_id(&ids, other)];
        let r = match (b.r_pu, b.r_ohm) {
            (Some(r), _) => r,
            (None, Some(r)) => r / z_base,
            (None, None) => return Err(Error::Malformed(format!("branch {} lacks r", branch_label(b, bi)))),
        };
        let x = match (b.x_pu, b.x_ohm) {
            (Some(x), _) => x,
            (None, Some(x)) => x / z_base,
            (None, None) => return Err(Error::Malformed(format!("branch {} lacks x", branch_label(b, bi)))),
        };
        finite(r, "r")?;
        finite(x, "x")?;
        if r < 0.0 {
            return Err(Error::Malformed(format!("branch {} has negative resistance", branch_label(b, bi))));
        }
        children[from].push(k);
        branches.push(Branch { id: branch_label(b, bi), from, to: k, r, x });
    }

    let class = classify(&branches)?;

    let node_ids: Vec<String> = order.iter().map(|&o| ids[o].clone()).collect();
    let canon_of = |id: &str, kind: &'static str| -> Result<usize> {
        match node_ids.iter().position(|n| n == id) {
            Some(k) => Ok(k),
            None => Err(Error::UnknownId { kind, id: id.to_string() }),
        }
    };

    let mut limits = vec![
        NodeLimits {
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
            v_lo: DEFAULT_V_LO,
            v_hi: DEFAULT_V_HI,
            alpha: DEFAULT_ALPHA,
        };
        n
    ];
    let mut document_order = Vec::new();
    for nd in &doc.nodes {
        let k = canon_of(&nd.id, "node")?;
        if k == 0 {
            continue;
        }
        document_order.push(k);
        let l = &mut limits[k - 1];
        if let Some(v) = nd.v_min {
            l.v_min = finite(v, "v_min")?;
        }
        if let Some(v) = nd.v_max {
            l.v_max = finite(v, "v_max")?;
        }
        if let Some(v) = nd.v_lo {
            l.v_lo = finite(v, "v_lo")?;
        }
        if let Some(v) = nd.v_hi {
            l.v_hi = finite(v, "v_hi")?;
        }
        if let Some(a) = nd.alpha {
            l.alpha = finite(a, "alpha")?;
        }
    }
    // Nodes only referenced by branches follow in canonical order.
    for k in 1..=n {
        if !document_order.contains(&k) {
            document_order.push(k);
        }
    }
    for (k, l) in limits.iter().enumerate() {
        let node = node_ids[k + 1].clone();
        if l.v_min > l.v_max {
            return Err(Error::LimitInversion { node, detail: format!("v_min {} > v_max {}", l.v_min, l.v_max) });
        }
        if !(l.v_min <= l.v_lo && l.v_lo <= l.v_hi && l.v_hi <= l.v_max) {
            return Err(Error::LimitInversion {
                node,
                detail: format!("require v_min <= v_lo <= v_hi <= v_max, got {} {} {} {}", l.v_min, l.v_lo, l.v_hi, l.v_max),
            });
        }
        if l.v_min < 0.0 || l.alpha < 0.0 {
            return Err(Error::LimitInversion { node, detail: "negative v_min or alpha".into() });
        }
    }

    let mut ders = Vec::new();
    for d in &doc.ders {
        let node = canon_of(&d.node, "der node")?;
        if node == 0 {
            return Err(Error::Device("DER at the substation".into()));
        }
        if !(d.q_min_pu <= d.q_max_pu) || !d.q_min_pu.is_finite() || !d.q_max_pu.is_finite() {
            return Err(Error::Device(format!("DER at {} has an invalid range", d.node)));
        }
        if ders.iter().any(|e: &Der| e.node == node) {
            return Err(Error::Device(format!("duplicate DER at {}", d.node)));
        }
        ders.push(Der { node, q_min: d.q_min_pu, q_max: d.q_max_pu });
    }

    let mut oltcs = Vec::new();
    for o in &doc.oltcs {
        let branch = branches
            .iter()
            .position(|b| b.id == o.branch)
            .ok_or_else(|| Error::UnknownId { kind: "oltc branch", id: o.branch.clone() })?;
        let tau = o.tau.unwrap_or(DEFAULT_TAP_STEP);
        let n_min = o.n_min.unwrap_or(DEFAULT_TAP_MIN);
        let n_max = o.n_max.unwrap_or(DEFAULT_TAP_MAX);
        if !(tau > 0.0) || n_min > n_max || 1.0 + tau * n_min as f64 <= 0.0 {
            return Err(Error::Device(format!("OLTC on {} has an invalid tap table", o.branch)));
        }
        if oltcs.iter().any(|e: &Oltc| e.branch == branch) {
            return Err(Error::Device(format!("duplicate OLTC on {}", o.branch)));
        }
        oltcs.push(Oltc { branch, tau, n_min, n_max });
    }

    let mut caps = Vec::new();
    for c in &doc.caps {
        let node = canon_of(&c.node, "cap node")?;
        if node == 0 {
            return Err(Error::Device("capacitor bank at the substation".into()));
        }
        let n_min = c.n_min.unwrap_or(0);
        if n_min > c.n_max {
            return Err(Error::Device(format!("cap at {}: n_min > n_max", c.node)));
        }
        let steps = match &c.steps_pu {
            Some(s) if s.len() == c.n_max as usize => s.clone(),
            Some(_) => return Err(Error::Device(format!("cap at {}: steps_pu must have n_max entries", c.node))),
            None => vec![c.y_c_pu; c.n_max as usize],
        };
        if steps.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::Device(format!("cap at {}: unit admittance must be positive", c.node)));
        }
        if caps.iter().any(|e: &Cap| e.node == node) {
            return Err(Error::Device(format!("duplicate cap at {}", c.node)));
        }
        caps.push(Cap { node, y_c: c.y_c_pu, n_min, n_max: c.n_max, steps });
    }

    Ok(Feeder {
        base_mva: doc.base_mva,
        base_kv: doc.base_kv,
        v0: doc.v0_pu,
        node_ids,
        branches,
        limits,
        ders,
        oltcs,
        caps,
        class,
        document_order,
        children,
    })
}

fn lookup_id(ids: &[String], id: &str) -> usize {
    ids.iter().position(|n| n == id).expect("interned id")
}

fn branch_label(b: &BranchDoc, index: usize) -> String {
    b.id.clone().unwrap_or_else(|| format!("{}-{}#{index}", b.from, b.to))
}

fn reach(adj: &[Vec<usize>], root: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn classify(branches: &[Branch]) -> Result<ReactanceClass> {
    let pos = branches.iter().any(|b| b.x > 0.0);
    let neg = branches.iter().any(|b| b.x < 0.0);
    match (pos, neg) {
        (true, true) => Err(Error::MixedReactance),
        (true, false) => Ok(ReactanceClass::Inductive),
        (false, true) => Ok(ReactanceClass::Capacitive),
        (false, false) => Ok(ReactanceClass::Resistive),
    }
}

// ---------------------------------------------------------------------------
// Load profile

/// Per-period nodal net demand in canonical node order (index `k - 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct LoadProfile {
    pub p_l: Vec<Vec<f64>>,
    pub q_l: Vec<Vec<f64>>,
}

impl LoadProfile {
    pub fn horizon(&self) -> usize {
        self.p_l.len()
    }

    /// A single period with the given demand vectors.
    pub fn single(p_l: Vec<f64>, q_l: Vec<f64>) -> Self {
        Self { p_l: vec![p_l], q_l: vec![q_l] }
    }

    pub fn zeros(n: usize, horizon: usize) -> Self {
        Self { p_l: vec![vec![0.0; n]; horizon], q_l: vec![vec![0.0; n]; horizon] }
    }

    /// Active injections `p = -P_L` for period `t`.
    pub fn injections(&self, t: usize) -> Vec<f64> {
        self.p_l[t].iter().map(|v| -v).collect()
    }

    /// Returns a profile with every value multiplied by `factor[t]`.
    pub fn scaled_by(&self, factors: &[f64]) -> Self {
        let base_p = &self.p_l[0];
        let base_q = &self.q_l[0];
        Self {
            p_l: factors.iter().map(|f| base_p.iter().map(|v| v * f).collect()).collect(),
            q_l: factors.iter().map(|f| base_q.iter().map(|v| v * f).collect()).collect(),
        }
    }

    /// Total active demand of period `t`.
    pub fn total_p(&self, t: usize) -> f64 {
        self.p_l[t].iter().sum()
    }

    /// Writes the profile as CSV using the feeder's document column order.
    pub fn to_csv(&self, feeder: &Feeder) -> String {
        let n = feeder.n();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",PL_{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",QL_{i}"));
        }
        out.push('\n');
        for t in 0..self.horizon() {
            out.push_str(&t.to_string());
            for &k in &feeder.document_order {
                out.push_str(&format!(",{}", self.p_l[t][k - 1]));
            }
            for &k in &feeder.document_order {
                out.push_str(&format!(",{}", self.q_l[t][k - 1]));
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a profile CSV with header `t,PL_1..PL_n,QL_1..QL_n`.
///
/// Columns follow the order in which the feeder document lists its
/// non-substation nodes.
pub fn parse_profile<R: Read>(reader: R, feeder: &Feeder) -> Result<LoadProfile> {
    let n = feeder.n();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 * n + 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected {} columns (t + {n} PL + {n} QL), found {}",
            2 * n + 1,
            headers.len()
        )));
    }
    for (i, h) in headers.iter().enumerate().skip(1) {
        let want = if i <= n { "PL_" } else { "QL_" };
        if !h.starts_with(want) {
            return Err(Error::ShapeMismatch(format!("column {i} header {h:?} should start with {want}")));
        }
    }
    let mut p_l = Vec::new();
    let mut q_l = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 * n + 1 {
            return Err(Error::ShapeMismatch(format!("row {row} has {} cells", rec.len())));
        }
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for (col, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::NonNumeric { row, col, value: cell.to_string() })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric { row, col, value: cell.to_string() });
            }
            if col <= n {
                p[feeder.document_order[col - 1] - 1] = v;
            } else {
                q[feeder.document_order[col - 1 - n] - 1] = v;
            }
        }
        p_l.push(p);
        q_l.push(q);
    }
    if p_l.is_empty() {
        return Err(Error::ShapeMismatch("profile has no periods".into()));
    }
    Ok(LoadProfile { p_l, q_l })
}

pub fn parse_profile_str(source: &str, feeder: &Feeder) -> Result<LoadProfile> {
    parse_profile(source.as_bytes(), feeder)
}

pub fn load_profile(path: impl AsRef<std::path::Path>, feeder: &Feeder) -> Result<LoadProfile> {
    parse_profile(std::fs::File::open(path)?, feeder)
}
