//! The Bayesian Stackelberg vulnerability-discovery game.
//!
//! The defender commits to a coverage vector over graph vertices; each
//! attacker type observes it and picks the entry-to-goal path maximizing its
//! own utility. Goal vertices carry no analysis target and contribute no
//! utility terms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attack_graph::{check_path, presence, AttackGraph, AttackPath};
use crate::error::GameError;

/// Analysis methods available to the defender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    CodeQl,
    Fuzz,
    Kasan,
    Kcsan,
    PatchMine,
    Verify,
}

impl Method {
    pub const COUNT: usize = 6;
    pub const ALL: [Method; 6] = [
        Method::CodeQl,
        Method::Fuzz,
        Method::Kasan,
        Method::Kcsan,
        Method::PatchMine,
        Method::Verify,
    ];
    /// Methods that produce detection observations. `Verify` is the
    /// verifier cascade and never runs as an executor task.
    pub const DETECTORS: [Method; 5] = [
        Method::CodeQl,
        Method::Fuzz,
        Method::Kasan,
        Method::Kcsan,
        Method::PatchMine,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::CodeQl => "codeql",
            Method::Fuzz => "fuzz",
            Method::Kasan => "kasan",
            Method::Kcsan => "kcsan",
            Method::PatchMine => "patchmine",
            Method::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerType {
    pub id: usize,
    pub label: String,
    pub prior: f64,
    /// Reward per vertex from exploiting it.
    pub reward: Vec<f64>,
    /// Deterrence cost per vertex if detected there.
    pub deterrence: Vec<f64>,
    /// Damage per vertex from an undetected exploit.
    pub impact: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenderParams {
    pub v_bug: Vec<f64>,
    /// Detection probability per vertex and method, indexed by [`Method::index`].
    pub rho: Vec<[f64; Method::COUNT]>,
    pub eta_ver: Vec<f64>,
    pub lambda_fp: f64,
    pub fp_cost: Vec<[f64; Method::COUNT]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageVector(pub Vec<f64>);

impl CoverageVector {
    pub fn zeros(n: usize) -> Self {
        CoverageVector(vec![0.0; n])
    }

    pub fn get(&self, v: usize) -> f64 {
        self.0.get(v).copied().unwrap_or(0.0)
    }

    /// `sum_f w_f c_f`.
    pub fn cost(&self, g: &AttackGraph) -> f64 {
        self.0
            .iter()
            .zip(&g.vertices)
            .map(|(c, v)| c * v.cost_w)
            .sum()
    }

    pub fn is_budget_feasible(&self, g: &AttackGraph, budget: f64) -> bool {
        self.cost(g) <= budget + 1e-9
    }
}

/// Per-type linear utility coefficients: the utility of a path is
/// `sum_f c_f cov[f] + (1 - c_f) unc[f]` over its non-goal vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeCoefficients {
    pub def_cov: Vec<f64>,
    pub def_unc: Vec<f64>,
    pub att_cov: Vec<f64>,
    pub att_unc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    pub graph: AttackGraph,
    pub types: Vec<AttackerType>,
    pub defender: DefenderParams,
    pub budget: f64,
    pub paths: Vec<AttackPath>,
    /// The method whose detection probability applies at each vertex.
    pub method_for_vertex: Vec<Method>,
}

/// Relative tolerance under which two attacker utilities count as tied.
pub const TIE_EPS: f64 = 1e-9;

pub(crate) fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_EPS * (1.0 + a.abs().max(b.abs()))
}

impl GameInstance {
    pub fn new(
        graph: AttackGraph,
        types: Vec<AttackerType>,
        defender: DefenderParams,
        budget: f64,
        paths: Vec<AttackPath>,
        method_for_vertex: Vec<Method>,
    ) -> Result<Self, GameError> {
        let n = graph.vertices.len();
        if paths.is_empty() {
            return Err(GameError::NoPaths);
        }
        for (index, p) in paths.iter().enumerate() {
            check_path(&graph, p).map_err(|source| GameError::InvalidPath { index, source })?;
        }
        let total: f64 = types.iter().map(|t| t.prior).sum();
        if types.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(GameError::PriorSum(total));
        }
        let len_ok = |v: usize, what: &str| {
            if v == n {
                Ok(())
            } else {
                Err(GameError::InvalidParams(format!("{what} has {v} entries, graph has {n} vertices")))
            }
        };
        for t in &types {
            if !(0.0..=1.0).contains(&t.prior) {
                return Err(GameError::InvalidParams(format!("prior of {} outside [0,1]", t.label)));
            }
            len_ok(t.reward.len(), "reward")?;
            len_ok(t.deterrence.len(), "deterrence")?;
            len_ok(t.impact.len(), "impact")?;
        }
        len_ok(defender.v_bug.len(), "v_bug")?;
        len_ok(defender.rho.len(), "rho")?;
        len_ok(defender.eta_ver.len(), "eta_ver")?;
        len_ok(defender.fp_cost.len(), "fp_cost")?;
        len_ok(method_for_vertex.len(), "method_for_vertex")?;
        let probs_ok = defender
            .rho
            .iter()
            .flat_map(|r| r.iter())
            .chain(defender.eta_ver.iter())
            .all(|p| (0.0..=1.0).contains(p));
        if !probs_ok {
            return Err(GameError::InvalidParams("probabilities must lie in [0,1]".into()));
        }
        if !(budget >= 0.0) {
            return Err(GameError::InvalidParams(format!("budget {budget} is negative")));
        }
        Ok(Self {
            graph,
            types,
            defender,
            budget,
            paths,
            method_for_vertex,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.graph.vertices.len()
    }

    /// Non-goal vertices of path `p`.
    pub fn payload<'a>(&'a self, p: &'a AttackPath) -> impl Iterator<Item = usize> + 'a {
        p.vertices()
            .iter()
            .copied()
            .filter(move |&f| !self.graph.vertices[f].is_goal())
    }

    /// Sorted union of payload vertices over all paths.
    pub fn payload_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.paths.iter().flat_map(|p| self.payload(p)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn rho_at(&self, f: usize) -> f64 {
        self.defender.rho[f][self.method_for_vertex[f].index()]
    }

    pub fn coefficients(&self, ty: usize) -> TypeCoefficients {
        let t = &self.types[ty];
        let d = &self.defender;
        let n = self.num_vertices();
        let mut out = TypeCoefficients {
            def_cov: vec![0.0; n],
            def_unc: vec![0.0; n],
            att_cov: vec![0.0; n],
            att_unc: vec![0.0; n],
        };
        for f in 0..n {
            if self.graph.vertices[f].is_goal() {
                continue;
            }
            let m = self.method_for_vertex[f].index();
            let rho = d.rho[f][m];
            out.def_cov[f] = d.v_bug[f] * rho * d.eta_ver[f] - d.lambda_fp * d.fp_cost[f][m];
            out.def_unc[f] = -t.impact[f];
            out.att_cov[f] = (1.0 - rho) * t.reward[f] - rho * t.deterrence[f];
            out.att_unc[f] = t.reward[f];
        }
        out
    }

    fn check_ids(&self, c: &CoverageVector, p: usize, ty: usize) -> Result<(), GameError> {
        if ty >= self.types.len() {
            return Err(GameError::UnknownType(ty));
        }
        if p >= self.paths.len() {
            return Err(GameError::InvalidParams(format!("unknown path index {p}")));
        }
        check_coverage(&self.graph, c)
    }
}

pub(crate) fn check_coverage(g: &AttackGraph, c: &CoverageVector) -> Result<(), GameError> {
    if c.0.len() != g.vertices.len() {
        return Err(GameError::CoverageLength {
            got: c.0.len(),
            expected: g.vertices.len(),
        });
    }
    if let Some((vertex, &value)) = c
        .0
        .iter()
        .enumerate()
        .find(|(_, x)| !(-1e-12..=1.0 + 1e-12).contains(*x))
    {
        return Err(GameError::CoverageRange { vertex, value });
    }
    Ok(())
}

/// Defender utility of coverage `c` when a type-`ty` attacker takes path `p`.
pub fn defender_utility(
    game: &GameInstance,
    c: &CoverageVector,
    p: usize,
    ty: usize,
) -> Result<f64, GameError> {
    game.check_ids(c, p, ty)?;
    let t = &game.types[ty];
    let d = &game.defender;
    Ok(game
        .payload(&game.paths[p])
        .map(|f| {
            let m = game.method_for_vertex[f].index();
            let cf = c.0[f];
            cf * (d.v_bug[f] * d.rho[f][m] * d.eta_ver[f] - d.lambda_fp * d.fp_cost[f][m])
                - (1.0 - cf) * t.impact[f]
        })
        .sum())
}

/// Attacker utility of path `p` for type `ty` under coverage `c`.
pub fn attacker_utility(
    game: &GameInstance,
    c: &CoverageVector,
    p: usize,
    ty: usize,
) -> Result<f64, GameError> {
    game.check_ids(c, p, ty)?;
    let t = &game.types[ty];
    Ok(game
        .payload(&game.paths[p])
        .map(|f| {
            let detect = c.0[f] * game.rho_at(f);
            (1.0 - detect) * t.reward[f] - detect * t.deterrence[f]
        })
        .sum())
}

/// Index of the path type `ty` attacks under coverage `c`. Attacker ties are
/// broken toward the defender, then toward the lowest path index.
pub fn best_response(game: &GameInstance, c: &CoverageVector, ty: usize) -> Result<usize, GameError> {
    if game.paths.is_empty() {
        return Err(GameError::NoPaths);
    }
    let mut best = 0usize;
    let mut best_att = attacker_utility(game, c, 0, ty)?;
    let mut best_def = defender_utility(game, c, 0, ty)?;
    for p in 1..game.paths.len() {
        let att = attacker_utility(game, c, p, ty)?;
        let def = defender_utility(game, c, p, ty)?;
        let better = if tied(att, best_att) {
            def > best_def && !tied(def, best_def)
        } else {
            att > best_att
        };
        if better {
            best = p;
            best_att = att;
            best_def = def;
        }
    }
    Ok(best)
}

/// Prior-weighted defender utility against every type's best response.
pub fn expected_defender_utility(game: &GameInstance, c: &CoverageVector) -> Result<f64, GameError> {
    check_coverage(&game.graph, c)?;
    let used = c.cost(&game.graph);
    if used > game.budget + 1e-9 {
        return Err(GameError::BudgetViolation {
            used,
            budget: game.budget,
        });
    }
    let mut total = 0.0;
    for (ty, t) in game.types.iter().enumerate() {
        let p = best_response(game, c, ty)?;
        total += t.prior * defender_utility(game, c, p, ty)?;
    }
    Ok(total)
}

fn default_eta_ver() -> f64 {
    0.9
}

/// One attacker type in the game parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    pub label: String,
    pub prior: f64,
    pub reward_scale: f64,
    pub deterrence_scale: f64,
    pub impact_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenderSpec {
    pub lambda_fp: f64,
    #[serde(default = "default_eta_ver")]
    pub eta_ver: f64,
    /// Detection probability by method, then by class label.
    pub rho: BTreeMap<Method, BTreeMap<String, f64>>,
    /// False-positive cost per method.
    pub fp_cost: BTreeMap<Method, f64>,
}

/// Game parameter file: attacker types, defender parameters and the per-round
/// coverage budget. Combined with a graph and a belief matrix it yields a
/// [`GameInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    pub types: Vec<TypeSpec>,
    pub defender: DefenderSpec,
    pub budget: f64,
}

impl Default for GameParams {
    fn default() -> Self {
        let table = |rows: &[(&str, f64)]| -> BTreeMap<String, f64> {
            rows.iter().map(|(l, r)| (l.to_string(), *r)).collect()
        };
        let mut rho = BTreeMap::new();
        rho.insert(Method::CodeQl, table(&[("CWE-787", 0.8), ("CWE-416", 0.7), ("CWE-362", 0.6)]));
        rho.insert(Method::Fuzz, table(&[("CWE-787", 0.3), ("CWE-416", 0.3)]));
        rho.insert(Method::Kasan, table(&[("CWE-787", 0.9), ("CWE-416", 0.9)]));
        rho.insert(Method::Kcsan, table(&[("CWE-362", 0.85)]));
        rho.insert(Method::PatchMine, table(&[("CWE-787", 0.5), ("CWE-416", 0.5), ("CWE-362", 0.5)]));
        let fp_cost = Method::DETECTORS.iter().map(|&m| (m, 1.0)).collect();
        GameParams {
            types: vec![
                TypeSpec {
                    label: "APT".into(),
                    prior: 0.3,
                    reward_scale: 1.5,
                    deterrence_scale: 1.0,
                    impact_scale: 1.5,
                },
                TypeSpec {
                    label: "opportunistic".into(),
                    prior: 0.5,
                    reward_scale: 1.0,
                    deterrence_scale: 2.0,
                    impact_scale: 1.0,
                },
                TypeSpec {
                    label: "insider".into(),
                    prior: 0.2,
                    reward_scale: 1.2,
                    deterrence_scale: 0.5,
                    impact_scale: 1.2,
                },
            ],
            defender: DefenderSpec {
                lambda_fp: 0.2,
                eta_ver: 0.9,
                rho,
                fp_cost,
            },
            budget: 3.0,
        }
    }
}

impl GameParams {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.types.is_empty() {
            return Err(GameError::InvalidParams("at least one attacker type is required".into()));
        }
        let total: f64 = self.types.iter().map(|t| t.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GameError::PriorSum(total));
        }
        for t in &self.types {
            if t.prior < 0.0 || t.reward_scale < 0.0 || t.deterrence_scale < 0.0 || t.impact_scale < 0.0 {
                return Err(GameError::InvalidParams(format!("type {} has negative parameters", t.label)));
            }
        }
        if self.defender.rho.contains_key(&Method::Verify) {
            return Err(GameError::InvalidParams("verify is not a detection method".into()));
        }
        for row in self.defender.rho.values() {
            if row.values().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(GameError::InvalidParams("rho entries must lie in [0,1]".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.defender.eta_ver) || self.defender.lambda_fp < 0.0 {
            return Err(GameError::InvalidParams("eta_ver must lie in [0,1], lambda_fp >= 0".into()));
        }
        Ok(())
    }

    /// Rho table resolved to class ids: `[method][class]`.
    pub fn rho_by_class(&self, g: &AttackGraph) -> Result<[Vec<f64>; Method::COUNT], GameError> {
        let k = g.num_classes();
        let mut out: [Vec<f64>; Method::COUNT] = Default::default();
        for row in out.iter_mut() {
            *row = vec![0.0; k];
        }
        for (m, row) in &self.defender.rho {
            for (label, &r) in row {
                // rates for classes the graph does not use are ignored
                if let Some(c) = g.classes.iter().position(|cl| &cl.label == label) {
                    out[m.index()][c] = r;
                }
            }
        }
        Ok(out)
    }

    /// Builds the game for one round.
    ///
    /// `cells[f][c]` is the current probability that class `c` is present at
    /// `f` (priors or posteriors). With `q(f)` the presence probability at `f`:
    /// `V_bug = cvss * reachability * q`, `Impact = cvss * impact_scale * q`,
    /// `R = cvss * reward_scale * q`, `D = deterrence_scale`, and the
    /// false-positive cost is weighted by `1 - q`. Per-method detection at a
    /// vertex is the class-weighted mean of the method's class rates; the
    /// designated method of each vertex is the one detecting best.
    pub fn instantiate(
        &self,
        graph: &AttackGraph,
        cells: &[Vec<f64>],
        paths: Vec<AttackPath>,
        budget: f64,
    ) -> Result<GameInstance, GameError> {
        self.validate()?;
        let n = graph.vertices.len();
        if cells.len() != n {
            return Err(GameError::InvalidParams(format!(
                "belief matrix has {} rows, graph has {n} vertices",
                cells.len()
            )));
        }
        let rates = self.rho_by_class(graph)?;
        let mut v_bug = vec![0.0; n];
        let mut rho = vec![[0.0; Method::COUNT]; n];
        let mut fp_cost = vec![[0.0; Method::COUNT]; n];
        let mut method_for_vertex = vec![Method::CodeQl; n];
        let mut types: Vec<AttackerType> = self
            .types
            .iter()
            .enumerate()
            .map(|(id, t)| AttackerType {
                id,
                label: t.label.clone(),
                prior: t.prior,
                reward: vec![0.0; n],
                deterrence: vec![0.0; n],
                impact: vec![0.0; n],
            })
            .collect();
        for v in &graph.vertices {
            let f = v.id;
            if v.is_goal() {
                continue;
            }
            let b = &cells[f];
            let q = presence(b);
            let mass: f64 = b.iter().sum();
            for &m in &Method::DETECTORS {
                let r = &rates[m.index()];
                rho[f][m.index()] = if mass > 0.0 {
                    b.iter().zip(r).map(|(w, r)| w * r).sum::<f64>() / mass
                } else {
                    r.iter().sum::<f64>() / r.len().max(1) as f64
                };
                fp_cost[f][m.index()] =
                    self.defender.fp_cost.get(&m).copied().unwrap_or(0.0) * (1.0 - q);
            }
            method_for_vertex[f] = Method::DETECTORS
                .iter()
                .copied()
                .fold(Method::CodeQl, |best, m| {
                    if rho[f][m.index()] > rho[f][best.index()] {
                        m
                    } else {
                        best
                    }
                });
            v_bug[f] = v.cvss_score * v.reachability * q;
            for (spec, t) in self.types.iter().zip(types.iter_mut()) {
                t.reward[f] = v.cvss_score * spec.reward_scale * q;
                t.deterrence[f] = spec.deterrence_scale;
                t.impact[f] = v.cvss_score * spec.impact_scale * q;
            }
        }
        let defender = DefenderParams {
            v_bug,
            rho,
            eta_ver: vec![self.defender.eta_ver; n],
            lambda_fp: self.defender.lambda_fp,
            fp_cost,
        };
        GameInstance::new(graph.clone(), types, defender, budget, paths, method_for_vertex)
    }
}

/// Seeded random game for tests and benchmarks.
///
/// `n_payload` non-goal vertices (an entry followed by functions) feed a
/// single goal. Each path runs entry, an ordered nonempty subset of the
/// functions, goal; at most `n_paths` distinct paths are drawn. Utility
/// parameters are uniform on fixed ranges and every vertex uses CodeQL.
pub fn random_game(seed: u64, n_payload: usize, n_paths: usize, n_types: usize) -> GameInstance {
    use crate::attack_graph::{Edge, Vertex, VertexKind, VulnClass};
    use rand::Rng;

    assert!(n_payload >= 1 && n_paths >= 1 && n_types >= 1);
    let mut rng = crate::rng::stream(seed, "random_game", &[n_payload as u64, n_paths as u64, n_types as u64]);
    let n = n_payload + 1;
    let goal = n - 1;
    let vertices = (0..n)
        .map(|id| Vertex {
            id,
            kind: if id == 0 {
                VertexKind::Entry
            } else if id == goal {
                VertexKind::Goal
            } else {
                VertexKind::Func
            },
            phi: vec![if id == goal { 0.0 } else { 0.5 }],
            cost_w: 1.0,
            cvss_score: 5.0,
            churn: 0.0,
            reachability: 1.0,
        })
        .collect();
    let mut paths: Vec<Vec<usize>> = Vec::new();
    let funcs = n_payload - 1;
    for _ in 0..n_paths * 50 {
        if paths.len() >= n_paths {
            break;
        }
        let mut p = vec![0];
        p.extend((1..=funcs).filter(|_| rng.random_bool(0.5)));
        if p.len() == 1 && funcs > 0 {
            p.push(rng.random_range(1..=funcs));
        }
        p.push(goal);
        if !paths.contains(&p) {
            paths.push(p);
        }
    }
    let edges: std::collections::BTreeSet<(usize, usize)> =
        paths.iter().flat_map(|p| p.windows(2).map(|w| (w[0], w[1]))).collect();
    let graph = AttackGraph {
        classes: vec![VulnClass {
            id: 0,
            label: "CWE-787".into(),
            cvss_base: 8.8,
        }],
        vertices,
        edges: edges.into_iter().map(|(src, dst)| Edge { src, dst, psi: 1.0 }).collect(),
    };
    let m = Method::CodeQl.index();
    let mut rho = vec![[0.0; Method::COUNT]; n];
    let mut fp_cost = vec![[0.0; Method::COUNT]; n];
    let mut v_bug = vec![0.0; n];
    let mut eta_ver = vec![0.0; n];
    for f in 0..goal {
        rho[f][m] = rng.random_range(0.3..1.0);
        fp_cost[f][m] = rng.random_range(0.0..1.0);
        v_bug[f] = rng.random_range(0.0..10.0);
        eta_ver[f] = rng.random_range(0.5..1.0);
    }
    let lambda_fp = rng.random_range(0.0..0.5);
    let mut priors: Vec<f64> = (0..n_types).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= s);
    priors[0] = 1.0 - priors[1..].iter().sum::<f64>();
    let types = priors
        .iter()
        .enumerate()
        .map(|(id, &prior)| {
            let mut draw = |hi: f64| {
                let mut v = vec![0.0; n];
                for x in v.iter_mut().take(goal) {
                    *x = rng.random_range(0.0..hi);
                }
                v
            };
            AttackerType {
                id,
                label: format!("t{id}"),
                prior,
                reward: draw(10.0),
                deterrence: draw(5.0),
                impact: draw(10.0),
            }
        })
        .collect();
    let budget = rng.random_range(0.3..(n_payload as f64 * 0.6 + 0.3));
    GameInstance::new(
        graph,
        types,
        DefenderParams {
            v_bug,
            rho,
            eta_ver,
            lambda_fp,
            fp_cost,
        },
        budget,
        paths.into_iter().map(AttackPath).collect(),
        vec![Method::CodeQl; n],
    )
    .expect("random game is valid")
}
