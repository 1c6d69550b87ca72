//! Intra-kernel attack graphs.
//!
//! An [`AttackGraph`] is a DAG over typed vertices (entry points, internal
//! functions, privilege boundaries, attacker goals). Every non-goal vertex
//! carries a prior probability per vulnerability class and every edge an
//! exploitability probability. The module also owns the synthetic generator
//! that stands in for surface mapping and the planting of latent ground truth.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VulnClass {
    pub id: usize,
    pub label: String,
    pub cvss_base: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Entry,
    Func,
    Priv,
    Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub id: usize,
    pub kind: VertexKind,
    /// Prior vulnerability probability per class, indexed by class id.
    pub phi: Vec<f64>,
    /// Cost of full analysis coverage of this vertex.
    pub cost_w: f64,
    #[serde(rename = "cvss")]
    pub cvss_score: f64,
    pub churn: f64,
    pub reachability: f64,
}

impl Vertex {
    pub fn is_goal(&self) -> bool {
        self.kind == VertexKind::Goal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackGraph {
    pub classes: Vec<VulnClass>,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

/// Ordered vertex ids from an entry vertex to a goal vertex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttackPath(pub Vec<usize>);

impl AttackPath {
    pub fn vertices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One presence factor of the path probability: `1 - prod_c (1 - p_c)`.
pub fn presence(probs: &[f64]) -> f64 {
    1.0 - probs.iter().map(|p| 1.0 - p).product::<f64>()
}

impl AttackGraph {
    pub fn vertex(&self, id: usize) -> Result<&Vertex, GraphError> {
        self.vertices.get(id).ok_or(GraphError::UnknownVertex(id))
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn edge_psi(&self, src: usize, dst: usize) -> Option<f64> {
        self.edges
            .iter()
            .find(|e| e.src == src && e.dst == dst)
            .map(|e| e.psi)
    }

    /// Successor lists sorted by vertex id. Dangling edges are skipped.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            if e.src < out.len() && e.dst < out.len() {
                out[e.src].push(e.dst);
            }
        }
        for s in &mut out {
            s.sort_unstable();
            s.dedup();
        }
        out
    }

    pub fn ids_of_kind(&self, kind: VertexKind) -> Vec<usize> {
        self.vertices
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.id)
            .collect()
    }

    /// Vertices reachable from any entry vertex.
    pub fn reachable_from_entries(&self) -> Vec<bool> {
        let succ = self.successors();
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = self.ids_of_kind(VertexKind::Entry);
        while let Some(v) = stack.pop() {
            if seen.get(v).copied().unwrap_or(true) {
                continue;
            }
            seen[v] = true;
            stack.extend(succ[v].iter().copied().filter(|&w| !seen[w]));
        }
        seen
    }

    /// Hop distance from the nearest entry vertex (`None` if unreachable).
    pub fn entry_depth(&self) -> Vec<Option<usize>> {
        let succ = self.successors();
        let mut depth = vec![None; self.vertices.len()];
        let mut frontier = self.ids_of_kind(VertexKind::Entry);
        for &v in &frontier {
            depth[v] = Some(0);
        }
        let mut d = 0;
        while !frontier.is_empty() {
            d += 1;
            let mut next = Vec::new();
            for v in frontier {
                for &w in &succ[v] {
                    if depth[w].is_none() {
                        depth[w] = Some(d);
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        depth
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

/// A single invariant violation found by [`validate_graph`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    VertexIdMismatch { position: usize, id: usize },
    ClassIdMismatch { position: usize, id: usize },
    CvssBaseOutOfRange { class: usize, value: f64 },
    PhiLength { vertex: usize, expected: usize, got: usize },
    PhiOutOfRange { vertex: usize, class: usize, value: f64 },
    GoalPhiNonZero { vertex: usize },
    CostNotPositive { vertex: usize, value: f64 },
    CvssOutOfRange { vertex: usize, value: f64 },
    ChurnNegative { vertex: usize, value: f64 },
    ReachabilityOutOfRange { vertex: usize, value: f64 },
    DanglingEdge { edge: usize, id: usize },
    SelfLoop { edge: usize, vertex: usize },
    DuplicateEdge { edge: usize },
    PsiOutOfRange { edge: usize, value: f64 },
    Cycle { vertices: Vec<usize> },
    UnreachableGoal { vertex: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            VertexIdMismatch { position, id } => {
                write!(f, "vertex at position {position} has id {id} (ids must be dense and unique)")
            }
            ClassIdMismatch { position, id } => {
                write!(f, "class at position {position} has id {id} (ids must be dense)")
            }
            CvssBaseOutOfRange { class, value } => {
                write!(f, "class {class} cvss_base {value} out of range [0,10]")
            }
            PhiLength { vertex, expected, got } => {
                write!(f, "vertex {vertex} has {got} phi entries, expected {expected}")
            }
            PhiOutOfRange { vertex, class, value } => {
                write!(f, "vertex {vertex} phi[{class}] = {value} out of range [0,1]")
            }
            GoalPhiNonZero { vertex } => write!(f, "goal vertex {vertex} has nonzero phi"),
            CostNotPositive { vertex, value } => {
                write!(f, "vertex {vertex} cost_w {value} is not positive")
            }
            CvssOutOfRange { vertex, value } => {
                write!(f, "vertex {vertex} cvss {value} out of range [0,10]")
            }
            ChurnNegative { vertex, value } => write!(f, "vertex {vertex} churn {value} is negative"),
            ReachabilityOutOfRange { vertex, value } => {
                write!(f, "vertex {vertex} reachability {value} out of range [0,1]")
            }
            DanglingEdge { edge, id } => write!(f, "edge {edge} references unknown vertex {id}"),
            SelfLoop { edge, vertex } => write!(f, "edge {edge} is a self loop on {vertex}"),
            DuplicateEdge { edge } => write!(f, "edge {edge} duplicates an earlier edge"),
            PsiOutOfRange { edge, value } => write!(f, "edge {edge} psi {value} out of range [0,1]"),
            Cycle { vertices } => write!(f, "cycle through vertices {vertices:?}"),
            UnreachableGoal { vertex } => {
                write!(f, "goal vertex {vertex} is unreachable from every entry")
            }
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Reports every invariant violation of `g`; an empty list means valid.
pub fn validate_graph(g: &AttackGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = g.vertices.len();
    let k = g.classes.len();
    for (pos, c) in g.classes.iter().enumerate() {
        if c.id != pos {
            out.push(Violation::ClassIdMismatch { position: pos, id: c.id });
        }
        if !(0.0..=10.0).contains(&c.cvss_base) {
            out.push(Violation::CvssBaseOutOfRange { class: c.id, value: c.cvss_base });
        }
    }
    for (pos, v) in g.vertices.iter().enumerate() {
        if v.id != pos {
            out.push(Violation::VertexIdMismatch { position: pos, id: v.id });
        }
        if v.phi.len() != k {
            out.push(Violation::PhiLength { vertex: v.id, expected: k, got: v.phi.len() });
        }
        for (c, &p) in v.phi.iter().enumerate() {
            if !in_unit(p) {
                out.push(Violation::PhiOutOfRange { vertex: v.id, class: c, value: p });
            }
        }
        if v.is_goal() && v.phi.iter().any(|&p| p != 0.0) {
            out.push(Violation::GoalPhiNonZero { vertex: v.id });
        }
        if !(v.cost_w > 0.0) {
            out.push(Violation::CostNotPositive { vertex: v.id, value: v.cost_w });
        }
        if !(0.0..=10.0).contains(&v.cvss_score) {
            out.push(Violation::CvssOutOfRange { vertex: v.id, value: v.cvss_score });
        }
        if !(v.churn >= 0.0) {
            out.push(Violation::ChurnNegative { vertex: v.id, value: v.churn });
        }
        if !in_unit(v.reachability) {
            out.push(Violation::ReachabilityOutOfRange { vertex: v.id, value: v.reachability });
        }
    }
    let mut seen = BTreeSet::new();
    for (i, e) in g.edges.iter().enumerate() {
        for id in [e.src, e.dst] {
            if id >= n {
                out.push(Violation::DanglingEdge { edge: i, id });
            }
        }
        if e.src == e.dst {
            out.push(Violation::SelfLoop { edge: i, vertex: e.src });
        }
        if !seen.insert((e.src, e.dst)) {
            out.push(Violation::DuplicateEdge { edge: i });
        }
        if !in_unit(e.psi) {
            out.push(Violation::PsiOutOfRange { edge: i, value: e.psi });
        }
    }
    if let Some(cycle) = find_cycle(g) {
        out.push(Violation::Cycle { vertices: cycle });
    }
    let reach = g.reachable_from_entries();
    for v in &g.vertices {
        if v.is_goal() && !reach.get(v.id).copied().unwrap_or(false) {
            out.push(Violation::UnreachableGoal { vertex: v.id });
        }
    }
    out
}

/// Returns the vertices of one directed cycle, if any (self loops included).
fn find_cycle(g: &AttackGraph) -> Option<Vec<usize>> {
    let succ = g.successors();
    let n = succ.len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    for e in &g.edges {
        if e.src == e.dst && e.src < n {
            return Some(vec![e.src]);
        }
    }
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < succ[v].len() {
                let w = succ[v][*next];
                *next += 1;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        parent[w] = v;
                        stack.push((w, 0));
                    }
                    1 => {
                        let mut cycle = vec![w];
                        let mut u = v;
                        while u != w {
                            cycle.push(u);
                            u = parent[u];
                        }
                        cycle.reverse();
                        cycle.rotate_right(1);
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Probability that at least one vulnerability class is present at `v`.
pub fn vertex_presence_prob(g: &AttackGraph, v: usize) -> Result<f64, GraphError> {
    Ok(presence(&g.vertex(v)?.phi))
}

/// Probability that an attacker traverses `p`: the product over consecutive
/// pairs of edge exploitability times presence at the source vertex. The
/// final goal vertex contributes no factor.
pub fn path_reach_probability(g: &AttackGraph, p: &AttackPath) -> Result<f64, GraphError> {
    let vs = p.vertices();
    if vs.len() < 2 {
        return Err(GraphError::PathTooShort);
    }
    let mut prob = 1.0;
    for pair in vs.windows(2) {
        let (src, dst) = (pair[0], pair[1]);
        g.vertex(dst)?;
        let psi = g
            .edge_psi(src, dst)
            .ok_or(GraphError::MissingEdge { src, dst })?;
        prob *= psi * vertex_presence_prob(g, src)?;
    }
    Ok(prob)
}

/// Checks that `p` starts at an entry, ends at a goal, follows edges and
/// repeats no vertex.
pub fn check_path(g: &AttackGraph, p: &AttackPath) -> Result<(), GraphError> {
    let vs = p.vertices();
    if vs.len() < 2 {
        return Err(GraphError::PathTooShort);
    }
    for &v in vs {
        g.vertex(v)?;
    }
    let first = &g.vertices[vs[0]];
    let last = &g.vertices[vs[vs.len() - 1]];
    if first.kind != VertexKind::Entry || last.kind != VertexKind::Goal {
        return Err(GraphError::InvalidPath(format!(
            "path must run from an entry to a goal, got {:?} to {:?}",
            first.kind, last.kind
        )));
    }
    let mut seen = BTreeSet::new();
    for &v in vs {
        if !seen.insert(v) {
            return Err(GraphError::InvalidPath(format!("vertex {v} repeats")));
        }
    }
    for pair in vs.windows(2) {
        if g.edge_psi(pair[0], pair[1]).is_none() {
            return Err(GraphError::MissingEdge { src: pair[0], dst: pair[1] });
        }
    }
    Ok(())
}

/// Depth-first enumeration of simple entry-to-goal paths in lexicographic
/// vertex-id order, stopping after `max_paths`.
///
/// A goal vertex terminates a path even if it has outgoing edges.
pub fn enumerate_paths(g: &AttackGraph, max_paths: usize) -> Vec<AttackPath> {
    let succ = g.successors();
    let mut out = Vec::new();
    if max_paths == 0 {
        return out;
    }
    let mut on_path = vec![false; g.vertices.len()];
    for entry in g.ids_of_kind(VertexKind::Entry) {
        let mut path = vec![entry];
        on_path[entry] = true;
        let mut stack = vec![0usize];
        while let Some(next) = stack.last_mut() {
            let v = *path.last().expect("path non-empty while stack non-empty");
            if *next < succ[v].len() {
                let w = succ[v][*next];
                *next += 1;
                if on_path[w] {
                    continue;
                }
                if g.vertices[w].is_goal() {
                    let mut p = path.clone();
                    p.push(w);
                    out.push(AttackPath(p));
                    if out.len() >= max_paths {
                        return out;
                    }
                    continue;
                }
                on_path[w] = true;
                path.push(w);
                stack.push(0);
            } else {
                stack.pop();
                let v = path.pop().expect("path non-empty");
                on_path[v] = false;
            }
        }
    }
    out
}

/// Labels used for generated classes, in id order.
pub const DEFAULT_CLASS_LABELS: [(&str, f64); 6] = [
    ("CWE-787", 8.8),
    ("CWE-416", 7.8),
    ("CWE-362", 7.0),
    ("CWE-476", 5.5),
    ("CWE-20", 6.5),
    ("CWE-190", 7.5),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_entry: usize,
    pub n_func: usize,
    pub n_priv: usize,
    pub n_goal: usize,
    pub edge_density: f64,
    pub phi_range: [f64; 2],
    pub psi_range: [f64; 2],
    pub n_classes: usize,
    pub seed: u64,
    /// Number of function sub-layers between entries and privilege vertices.
    pub func_layers: usize,
    /// Sampling probability of non-layered shortcuts (function to goal, early
    /// function layer to privilege boundary).
    pub shortcut_density: f64,
    pub cvss_range: [f64; 2],
    pub churn_range: [f64; 2],
    pub reachability_range: [f64; 2],
    pub cost_range: [f64; 2],
    /// Per-class multiplier on sampled phi (missing entries are 1).
    pub class_phi_scale: Vec<f64>,
    /// Add edges so every vertex is reachable from an entry.
    pub repair: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_entry: 5,
            n_func: 30,
            n_priv: 3,
            n_goal: 2,
            edge_density: 0.15,
            phi_range: [0.02, 0.3],
            psi_range: [0.3, 0.95],
            n_classes: 3,
            seed: 42,
            func_layers: 3,
            shortcut_density: 0.03,
            cvss_range: [4.0, 10.0],
            churn_range: [0.0, 1.0],
            reachability_range: [0.2, 1.0],
            cost_range: [1.0, 1.0],
            class_phi_scale: Vec::new(),
            repair: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: &str| Err(GraphError::InvalidConfig(m.to_string()));
        if self.n_entry == 0 || self.n_goal == 0 {
            return bad("n_entry and n_goal must be at least 1");
        }
        if self.n_classes == 0 || self.n_classes > DEFAULT_CLASS_LABELS.len() {
            return bad("n_classes must be in 1..=6");
        }
        if !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return bad("edge_density must be in (0,1]");
        }
        if !in_unit(self.shortcut_density) {
            return bad("shortcut_density must be in [0,1]");
        }
        for (name, r, lo, hi) in [
            ("phi_range", self.phi_range, 0.0, 1.0),
            ("psi_range", self.psi_range, 0.0, 1.0),
            ("cvss_range", self.cvss_range, 0.0, 10.0),
            ("reachability_range", self.reachability_range, 0.0, 1.0),
            ("churn_range", self.churn_range, 0.0, f64::INFINITY),
            ("cost_range", self.cost_range, f64::MIN_POSITIVE, f64::INFINITY),
        ] {
            if !(r[0] <= r[1] && r[0] >= lo && r[1] <= hi) {
                return Err(GraphError::InvalidConfig(format!("{name} {r:?} is not a well-ordered subrange of [{lo},{hi}]")));
            }
        }
        if self.n_func > 0 && self.func_layers == 0 {
            return bad("func_layers must be at least 1 when n_func > 0");
        }
        Ok(())
    }
}

fn sample_range<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        r[0] + (r[1] - r[0]) * rng.random::<f64>()
    } else {
        r[0]
    }
}

/// Layered synthetic attack graph: entries, function sub-layers, privilege
/// boundaries, goals. Identical configs give bit-identical graphs.
pub fn generate_synthetic_graph(cfg: &GeneratorConfig) -> Result<AttackGraph, GraphError> {
    cfg.validate()?;
    let n_entry = cfg.n_entry;
    let n_func = cfg.n_func;
    let n_priv = cfg.n_priv;
    let n = n_entry + n_func + n_priv + cfg.n_goal;
    let func0 = n_entry;
    let priv0 = func0 + n_func;
    let goal0 = priv0 + n_priv;
    let layers = cfg.func_layers.max(1);
    let func_layer = |i: usize| (i - func0) * layers / n_func.max(1);
    let last_layer = layers - 1;

    let kind = |v: usize| {
        if v < func0 {
            VertexKind::Entry
        } else if v < priv0 {
            VertexKind::Func
        } else if v < goal0 {
            VertexKind::Priv
        } else {
            VertexKind::Goal
        }
    };

    // (candidate predecessor, is primary) per vertex. Primary candidates form
    // the layered backbone and are the ones the repair pass draws from.
    let candidates = |v: usize| -> Vec<(usize, bool)> {
        let mut c = Vec::new();
        match kind(v) {
            VertexKind::Entry => {}
            VertexKind::Func => {
                let l = func_layer(v);
                if l == 0 {
                    c.extend((0..n_entry).map(|u| (u, true)));
                } else {
                    c.extend((func0..priv0).filter(|&u| func_layer(u) == l - 1).map(|u| (u, true)));
                }
            }
            VertexKind::Priv => {
                if n_func == 0 {
                    c.extend((0..n_entry).map(|u| (u, true)));
                } else {
                    for u in func0..priv0 {
                        c.push((u, func_layer(u) == last_layer));
                    }
                }
            }
            VertexKind::Goal => {
                if n_priv > 0 {
                    c.extend((priv0..goal0).map(|u| (u, true)));
                    c.extend((func0..priv0).map(|u| (u, false)));
                } else if n_func > 0 {
                    for u in func0..priv0 {
                        c.push((u, func_layer(u) == last_layer));
                    }
                } else {
                    c.extend((0..n_entry).map(|u| (u, true)));
                }
            }
        }
        c
    };

    let mut edge_rng = rng::stream(cfg.seed, "graph.edges", &[]);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 0..n {
        for (u, primary) in candidates(v) {
            let p = if primary { cfg.edge_density } else { cfg.shortcut_density };
            if edge_rng.random::<f64>() < p {
                edges.insert((u, v));
            }
        }
    }

    let mut repair_rng = rng::stream(cfg.seed, "graph.repair", &[]);
    let mut reachable = vec![false; n];
    for r in reachable.iter_mut().take(n_entry) {
        *r = true;
    }
    for v in n_entry..n {
        let has_reachable_pred = edges.iter().any(|&(u, w)| w == v && reachable[u]);
        if has_reachable_pred {
            reachable[v] = true;
            continue;
        }
        let pool: Vec<usize> = candidates(v)
            .into_iter()
            .filter(|&(u, primary)| primary && reachable[u])
            .map(|(u, _)| u)
            .collect();
        if !cfg.repair || pool.is_empty() {
            if kind(v) == VertexKind::Goal {
                return Err(GraphError::Infeasible(v));
            }
            continue;
        }
        let u = pool[repair_rng.random_range(0..pool.len())];
        edges.insert((u, v));
        reachable[v] = true;
    }

    let mut attr_rng = rng::stream(cfg.seed, "graph.attrs", &[]);
    let k = cfg.n_classes;
    let presence_cap = presence(&vec![cfg.phi_range[1]; k]).max(f64::MIN_POSITIVE);
    let mut vertices = Vec::with_capacity(n);
    for v in 0..n {
        let kd = kind(v);
        let phi: Vec<f64> = (0..k)
            .map(|c| {
                let x = sample_range(&mut attr_rng, cfg.phi_range);
                let scale = cfg.class_phi_scale.get(c).copied().unwrap_or(1.0);
                if kd == VertexKind::Goal {
                    0.0
                } else {
                    (x * scale).clamp(0.0, 1.0)
                }
            })
            .collect();
        let cost_w = sample_range(&mut attr_rng, cfg.cost_range);
        let cvss_score = sample_range(&mut attr_rng, cfg.cvss_range);
        // Churn tracks defect density for half of its spread.
        let u: f64 = attr_rng.random();
        let mix = 0.5 * u + 0.5 * (presence(&phi) / presence_cap).min(1.0);
        let churn = cfg.churn_range[0] + (cfg.churn_range[1] - cfg.churn_range[0]) * mix;
        let reachability = sample_range(&mut attr_rng, cfg.reachability_range);
        vertices.push(Vertex {
            id: v,
            kind: kd,
            phi,
            cost_w,
            cvss_score,
            churn,
            reachability,
        });
    }
    let edges = edges
        .into_iter()
        .map(|(src, dst)| Edge {
            src,
            dst,
            psi: sample_range(&mut attr_rng, cfg.psi_range),
        })
        .collect();
    let classes = DEFAULT_CLASS_LABELS[..k]
        .iter()
        .enumerate()
        .map(|(id, (label, cvss))| VulnClass {
            id,
            label: label.to_string(),
            cvss_base: *cvss,
        })
        .collect();
    Ok(AttackGraph {
        classes,
        vertices,
        edges,
    })
}

/// Latent set of truly vulnerable `(vertex, class)` cells.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub vuln: BTreeSet<(usize, usize)>,
}

impl GroundTruth {
    pub fn contains(&self, vertex: usize, class: usize) -> bool {
        self.vuln.contains(&(vertex, class))
    }

    pub fn len(&self) -> usize {
        self.vuln.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vuln.is_empty()
    }
}

/// Includes each non-goal cell independently with probability `phi(v,c)`.
pub fn plant_ground_truth(g: &AttackGraph, seed: u64) -> GroundTruth {
    let mut rng = rng::stream(seed, "truth", &[]);
    let mut vuln = BTreeSet::new();
    for v in &g.vertices {
        for (c, &p) in v.phi.iter().enumerate() {
            // one draw per cell keeps streams aligned across graphs
            let u: f64 = rng.random();
            if !v.is_goal() && u < p {
                vuln.insert((v.id, c));
            }
        }
    }
    GroundTruth { vuln }
}

/// Copies planted defects onto similar vertices: for every planted `(v, c)`
/// and every non-goal `w` with `sim[v][w] > threshold`, `(w, c)` is added
/// with probability `clone_prob`. Models incompletely propagated fixes.
pub fn plant_sibling_clones(
    g: &AttackGraph,
    truth: &GroundTruth,
    sim: &[Vec<f64>],
    threshold: f64,
    clone_prob: f64,
    seed: u64,
) -> GroundTruth {
    let mut rng = rng::stream(seed, "truth.clones", &[]);
    let mut out = truth.vuln.clone();
    for &(v, c) in &truth.vuln {
        for w in &g.vertices {
            if w.id == v || w.is_goal() {
                continue;
            }
            let u: f64 = rng.random();
            if sim[v][w.id] > threshold && u < clone_prob {
                out.insert((w.id, c));
            }
        }
    }
    GroundTruth { vuln: out }
}

/// Number of entry-to-goal paths counted by dynamic programming over a
/// topological order, saturating at `cap`.
pub fn count_paths(g: &AttackGraph, cap: u64) -> u64 {
    let succ = g.successors();
    let n = succ.len();
    let mut indeg = vec![0usize; n];
    for s in &succ {
        for &w in s {
            indeg[w] += 1;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = queue.pop() {
        order.push(v);
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push(w);
            }
        }
    }
    let mut ways = vec![0u64; n];
    for &v in &order {
        if g.vertices[v].kind == VertexKind::Entry {
            ways[v] = ways[v].saturating_add(1);
        }
        if g.vertices[v].is_goal() {
            continue;
        }
        for &w in &succ[v] {
            ways[w] = ways[w].saturating_add(ways[v]).min(cap);
        }
    }
    g.vertices
        .iter()
        .filter(|v| v.is_goal())
        .fold(0u64, |acc, v| acc.saturating_add(ways[v.id]))
        .min(cap)
}

/// Mean hop depth per vertex kind, used by the similarity features.
pub(crate) fn layer_index(g: &AttackGraph) -> Vec<f64> {
    let depth = g.entry_depth();
    let max = depth.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    depth
        .iter()
        .map(|d| d.map(|d| d as f64 / max).unwrap_or(1.0))
        .collect()
}

/// Synthetic code-similarity matrix over vertices, from the distance between
/// feature vectors (class priors, churn, layer depth) normalized to `[0,1]`.
/// Symmetric with unit diagonal.
pub fn similarity_matrix(g: &AttackGraph) -> Vec<Vec<f64>> {
    let layer = layer_index(g);
    let max_churn = g
        .vertices
        .iter()
        .map(|v| v.churn)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let max_phi = g
        .vertices
        .iter()
        .flat_map(|v| v.phi.iter().copied())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let feats: Vec<Vec<f64>> = g
        .vertices
        .iter()
        .map(|v| {
            let mut f: Vec<f64> = v.phi.iter().map(|p| p / max_phi).collect();
            f.push(v.churn / max_churn);
            f.push(layer[v.id]);
            f
        })
        .collect();
    let dim = feats.first().map(|f| f.len()).unwrap_or(1) as f64;
    let n = feats.len();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        sim[i][i] = 1.0;
        for j in (i + 1)..n {
            let d2: f64 = feats[i]
                .iter()
                .zip(&feats[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let s = (1.0 - (d2 / dim).sqrt()).clamp(0.0, 1.0);
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    sim
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chain_is_valid() {
        assert!(validate_graph(&chain()).is_empty());
    }

    #[test]
    fn back_edge_reports_cycle() {
        let mut g = chain();
        g.edges.push(edge(3, 0, 0.5));
        let report = validate_graph(&g);
        assert!(report.iter().any(|v| v.to_string().contains("cycle")), "{report:?}");
    }

    #[test]
    fn psi_out_of_range_reported_for_that_edge() {
        let mut g = chain();
        g.edges[1].psi = 1.3;
        let report = validate_graph(&g);
        assert_eq!(report, vec![Violation::PsiOutOfRange { edge: 1, value: 1.3 }]);
        assert!(report[0].to_string().contains("out of range"));
    }

    #[test]
    fn dangling_and_unreachable_reported() {
        let mut g = chain();
        g.edges.retain(|e| e.src != 2);
        g.edges.push(edge(2, 9, 0.5));
        let report = validate_graph(&g);
        assert!(report.contains(&Violation::DanglingEdge { edge: 2, id: 9 }));
        assert!(report.contains(&Violation::UnreachableGoal { vertex: 3 }));
    }

    #[test]
    fn goal_phi_must_be_zero() {
        let mut g = chain();
        g.vertices[3].phi = vec![0.1, 0.0];
        assert_eq!(validate_graph(&g), vec![Violation::GoalPhiNonZero { vertex: 3 }]);
    }

    #[test]
    fn presence_examples() {
        let mut g = chain();
        g.vertices[1].phi = vec![0.0, 0.0];
        assert_eq!(vertex_presence_prob(&g, 1).unwrap(), 0.0);
        g.vertices[1].phi = vec![1.0, 0.3];
        assert_eq!(vertex_presence_prob(&g, 1).unwrap(), 1.0);
        // 1 - 0.8 * 0.5
        assert_abs_diff_eq!(vertex_presence_prob(&g, 0).unwrap(), 0.6, epsilon = 1e-12);
        assert_eq!(vertex_presence_prob(&g, 9), Err(GraphError::UnknownVertex(9)));
    }

    #[test]
    fn reach_probability_examples() {
        let mut g = chain();
        // 2-vertex path with psi 0.5 from a {0.2, 0.5} vertex: 0.5 * 0.6
        let g2 = AttackGraph {
            classes: classes(2),
            vertices: vec![
                vertex(0, VertexKind::Entry, vec![0.2, 0.5]),
                vertex(1, VertexKind::Goal, vec![0.0, 0.0]),
            ],
            edges: vec![edge(0, 1, 0.5)],
        };
        let p = AttackPath(vec![0, 1]);
        assert_abs_diff_eq!(path_reach_probability(&g2, &p).unwrap(), 0.3, epsilon = 1e-12);

        // 3-vertex path, unit psi, presence 0.6 then 0.5
        let g3 = AttackGraph {
            classes: classes(2),
            vertices: vec![
                vertex(0, VertexKind::Entry, vec![0.2, 0.5]),
                vertex(1, VertexKind::Func, vec![0.5, 0.0]),
                vertex(2, VertexKind::Goal, vec![0.0, 0.0]),
            ],
            edges: vec![edge(0, 1, 1.0), edge(1, 2, 1.0)],
        };
        let p = AttackPath(vec![0, 1, 2]);
        assert_abs_diff_eq!(path_reach_probability(&g3, &p).unwrap(), 0.30, epsilon = 1e-12);

        g.edges[1].psi = 0.0;
        assert_eq!(path_reach_probability(&g, &AttackPath(vec![0, 1, 2, 3])).unwrap(), 0.0);
        assert_eq!(
            path_reach_probability(&g, &AttackPath(vec![0, 2, 3])),
            Err(GraphError::MissingEdge { src: 0, dst: 2 })
        );
    }

    #[test]
    fn enumerate_chain_and_diamond() {
        assert_eq!(enumerate_paths(&chain(), 10), vec![AttackPath(vec![0, 1, 2, 3])]);
        let d = enumerate_paths(&diamond(), 10);
        assert_eq!(d, vec![AttackPath(vec![0, 1, 3]), AttackPath(vec![0, 2, 3])]);
        assert_eq!(enumerate_paths(&diamond(), 1), vec![AttackPath(vec![0, 1, 3])]);
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = GeneratorConfig { seed: 7, ..Default::default() };
        let a = generate_synthetic_graph(&cfg).unwrap();
        let b = generate_synthetic_graph(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn minimal_generator_config_gives_single_edge() {
        let cfg = GeneratorConfig {
            n_entry: 1,
            n_func: 0,
            n_priv: 0,
            n_goal: 1,
            ..Default::default()
        };
        let g = generate_synthetic_graph(&cfg).unwrap();
        assert_eq!(g.vertices.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!((g.edges[0].src, g.edges[0].dst), (0, 1));
    }

    #[test]
    fn default_suite_graph_validates() {
        let cfg = GeneratorConfig {
            n_entry: 5,
            n_func: 30,
            n_priv: 3,
            n_goal: 2,
            edge_density: 0.15,
            seed: 42,
            ..Default::default()
        };
        let g = generate_synthetic_graph(&cfg).unwrap();
        assert!(validate_graph(&g).is_empty(), "{:?}", validate_graph(&g));
        assert!(g.reachable_from_entries().into_iter().all(|r| r));
    }

    #[test]
    fn generator_rejects_bad_configs() {
        let cfg = GeneratorConfig { edge_density: 0.0, ..Default::default() };
        assert!(matches!(generate_synthetic_graph(&cfg), Err(GraphError::InvalidConfig(_))));
        let cfg = GeneratorConfig { phi_range: [0.5, 0.1], ..Default::default() };
        assert!(matches!(generate_synthetic_graph(&cfg), Err(GraphError::InvalidConfig(_))));
        let cfg = GeneratorConfig {
            n_entry: 1,
            n_func: 4,
            n_priv: 1,
            n_goal: 1,
            edge_density: 1e-9,
            shortcut_density: 0.0,
            repair: false,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic_graph(&cfg), Err(GraphError::Infeasible(_))));
    }

    #[test]
    fn plant_extremes() {
        let mut g = chain();
        for v in &mut g.vertices {
            v.phi.iter_mut().for_each(|p| *p = 0.0);
        }
        assert!(plant_ground_truth(&g, 1).is_empty());
        for v in &mut g.vertices {
            let goal = v.is_goal();
            v.phi.iter_mut().for_each(|p| *p = if goal { 0.0 } else { 1.0 });
        }
        let t = plant_ground_truth(&g, 1);
        assert_eq!(t.len(), 6);
        assert!(!t.vuln.iter().any(|&(v, _)| v == 3));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let text = r#"{"classes":[],"vertices":[],"edges":[],"extra":1}"#;
        assert!(AttackGraph::from_json(text).is_err());
        let text = r#"{"classes":[],"vertices":[{"id":0,"kind":"entry","phi":[],"cost_w":1.0,"cvss":7.8,"churn":0.4,"reachability":0.9,"x":0}],"edges":[]}"#;
        assert!(AttackGraph::from_json(text).is_err());
    }

    #[test]
    fn json_vertex_shape() {
        let text = r#"{"classes":[{"id":0,"label":"CWE-787","cvss_base":8.8},{"id":1,"label":"CWE-416","cvss_base":7.8}],
            "vertices":[{"id":0,"kind":"entry","phi":[0.2,0.5],"cost_w":1.0,"cvss":7.8,"churn":0.4,"reachability":0.9},
                        {"id":1,"kind":"goal","phi":[0.0,0.0],"cost_w":1.0,"cvss":0.0,"churn":0.0,"reachability":1.0}],
            "edges":[{"src":0,"dst":1,"psi":0.5}]}"#;
        let g = AttackGraph::from_json(text).unwrap();
        assert_eq!(g.vertices[0].cvss_score, 7.8);
        assert!(validate_graph(&g).is_empty());
        let back = AttackGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn similarity_is_symmetric_with_unit_diagonal() {
        let g = generate_synthetic_graph(&GeneratorConfig::default()).unwrap();
        let s = similarity_matrix(&g);
        for i in 0..s.len() {
            assert_eq!(s[i][i], 1.0);
            for j in 0..s.len() {
                assert_eq!(s[i][j], s[j][i]);
                assert!((0.0..=1.0).contains(&s[i][j]));
            }
        }
    }
}
