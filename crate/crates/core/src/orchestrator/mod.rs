//! The round-based orchestration loop.
//!
//! Each round: rank attack paths by belief-weighted score, build the game on
//! the top paths, let a [`Policy`] pick coverage and a method mix, dispatch
//! tasks from the round's budget tranche, simulate the tools against the
//! ground truth, update beliefs, verify candidates, search siblings of
//! validated findings from the reserve pool, mitigate, and update the
//! attacker-type posterior from the simulated attacker's path choice.

pub mod dispatch;
pub mod ops;
pub mod prune;

use std::collections::BTreeSet;

use log::{debug, info};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack_graph::{enumerate_paths, presence, AttackGraph, Edge, GroundTruth, VertexKind};
use crate::belief::{BeliefState, ObservationModel, Observation};
use crate::error::{Error, Result};
use crate::game_model::{best_response, expected_defender_utility, CoverageVector, GameInstance, GameParams, Method};
use crate::rng;
use crate::solver::{solve_dobss_vd, SolveStatus, SolverConfig};

pub use dispatch::{dispatch, from_units, to_units, DispatchPlan, MethodPlan, MethodWeights, Task, DEFAULT_WEIGHTS};
pub use ops::{
    apply_mitigation, cascaded_verify, execute_simulated, sibling_search, update_type_posterior, SiblingConfig,
    VerifierConfig,
};
pub use prune::{prune_paths, PathRanker, PruneConfig};

/// Component switches, all on for the full system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Switches {
    pub use_stackelberg: bool,
    pub use_bayes_update: bool,
    pub use_verifier: bool,
    pub use_attack_graph: bool,
    pub use_sibling: bool,
    pub use_kcsan: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Self {
            use_stackelberg: true,
            use_bayes_update: true,
            use_verifier: true,
            use_attack_graph: true,
            use_sibling: true,
            use_kcsan: true,
        }
    }
}

impl Switches {
    pub fn allowed_methods(&self) -> [bool; Method::COUNT] {
        let mut a = [true; Method::COUNT];
        a[Method::Verify.index()] = false;
        if !self.use_kcsan {
            a[Method::Kcsan.index()] = false;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Total analysis budget.
    pub budget: f64,
    pub rounds: usize,
    /// Fraction of the budget held back for sibling searches.
    pub beta: f64,
    /// Similarity threshold for sibling searches.
    pub sigma: f64,
    /// Budget of one sibling task.
    pub sibling_tau: f64,
    /// Sibling tasks funded per validated finding at most.
    pub max_siblings: usize,
    pub prune: PruneConfig,
    /// Cap on enumerated attack paths.
    pub max_paths: usize,
    pub lambda_match: f64,
    pub verifier: VerifierConfig,
    pub solver: SolverConfig,
    pub switches: Switches,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            budget: 20.0,
            rounds: 10,
            beta: 0.1,
            sigma: 0.85,
            sibling_tau: 1.0,
            max_siblings: 3,
            prune: PruneConfig::default(),
            max_paths: 5000,
            lambda_match: 0.8,
            verifier: VerifierConfig::default(),
            solver: SolverConfig::default(),
            switches: Switches::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return bad("budget must be a nonnegative number");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta must lie in [0,1)");
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return bad("sigma must lie in [0,1]");
        }
        if !(self.sibling_tau >= 0.0) {
            return bad("sibling_tau must be nonnegative");
        }
        if self.prune.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(self.prune.theta >= 0.0) {
            return bad("theta must be nonnegative");
        }
        if self.max_paths == 0 {
            return bad("max_paths must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.lambda_match) {
            return bad("lambda_match must lie in [0,1]");
        }
        self.verifier.validate().map_err(Error::Config)?;
        self.solver.validate()?;
        Ok(())
    }

    pub fn fingerprint(&self, policy: &str) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        format!("{:016x}", rng::fnv1a(format!("{policy}|{text}").as_bytes()))
    }
}

/// What a policy sees when choosing a round's coverage.
pub struct RoundContext<'a> {
    /// Zero-based round index.
    pub round: usize,
    /// Current graph as the policy models it (flattened without the attack
    /// graph switch).
    pub graph: &'a AttackGraph,
    pub beliefs: &'a BeliefState,
    /// Game on the round's top paths; `None` when no path is left.
    pub game: Option<&'a GameInstance>,
    pub model: &'a ObservationModel,
    /// Coverage budget: `sum_f w_f c_f` may not exceed it.
    pub coverage_budget: f64,
    pub allowed: [bool; Method::COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub coverage: CoverageVector,
    pub methods: MethodPlan,
    pub objective: Option<f64>,
}

/// Coverage and method choice for each round.
pub trait Policy {
    fn name(&self) -> String;
    fn allocate(&mut self, ctx: &RoundContext) -> Result<Allocation>;
    /// Observations from this round's dispatched tasks.
    fn feedback(&mut self, _round: usize, _observations: &[Observation]) {}
}

/// Detection rate of `method` on `class` over one budget quantum, or `None`
/// when the method cannot see the class.
fn detection_rate(model: &ObservationModel, m: Method, class: usize) -> Option<f64> {
    model.rates(m, class).map(|(rho, _)| rho)
}

fn argmax_method(allowed: &[bool; Method::COUNT], score: impl Fn(Method) -> Option<f64>) -> Option<Method> {
    let mut best: Option<(Method, f64)> = None;
    for m in Method::DETECTORS {
        if !allowed[m.index()] {
            continue;
        }
        if let Some(s) = score(m) {
            if s > 0.0 && best.is_none_or(|(_, bs)| s > bs) {
                best = Some((m, s));
            }
        }
    }
    best.map(|b| b.0)
}

/// The allowed detector with the highest detection rate on `class`; ties
/// go to the lower method index.
pub fn best_method_for_class(
    model: &ObservationModel,
    class: usize,
    allowed: &[bool; Method::COUNT],
) -> Option<Method> {
    argmax_method(allowed, |m| detection_rate(model, m, class))
}

/// Per-vertex method choice: detection is linear in budget up to one
/// quantum, so a vertex's budget goes entirely to the allowed method with
/// the most expected true alerts per quantum, `sum_c b(f,c) rho(m,c)`.
/// Vertices with no belief mass fall back to the default mix.
pub fn route_by_belief(
    beliefs: &BeliefState,
    model: &ObservationModel,
    allowed: &[bool; Method::COUNT],
) -> MethodPlan {
    let fallback = mask_weights(DEFAULT_WEIGHTS, allowed);
    MethodPlan::PerVertex(
        beliefs
            .b
            .iter()
            .map(|row| {
                let best = argmax_method(allowed, |m| {
                    let mut any = false;
                    let s: f64 = row
                        .iter()
                        .enumerate()
                        .filter_map(|(c, &b)| detection_rate(model, m, c).map(|r| b * r))
                        .inspect(|_| any = true)
                        .sum();
                    any.then_some(s)
                });
                best.map_or(fallback, dispatch::single_method)
            })
            .collect(),
    )
}

pub fn mask_weights(mut w: MethodWeights, allowed: &[bool; Method::COUNT]) -> MethodWeights {
    for (x, ok) in w.iter_mut().zip(allowed) {
        if !ok {
            *x = 0.0;
        }
    }
    w
}

fn mask_plan(plan: MethodPlan, allowed: &[bool; Method::COUNT]) -> MethodPlan {
    match plan {
        MethodPlan::Global(w) => MethodPlan::Global(mask_weights(w, allowed)),
        MethodPlan::PerVertex(ws) => MethodPlan::PerVertex(ws.into_iter().map(|w| mask_weights(w, allowed)).collect()),
    }
}

/// Fills coverage greedily by descending `score / w` (ties by id) until the
/// budget is spent; vertices with nonpositive score are skipped.
pub fn greedy_fill(graph: &AttackGraph, scores: &[f64], budget: f64) -> CoverageVector {
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|&f| scores[f] > 0.0 && !graph.vertices[f].is_goal())
        .collect();
    let ratio = |f: usize| scores[f] / graph.vertices[f].cost_w.max(f64::MIN_POSITIVE);
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));
    let mut c = CoverageVector::zeros(scores.len());
    let mut left = budget;
    for f in order {
        let w = graph.vertices[f].cost_w;
        if left <= 0.0 {
            break;
        }
        let x = if w > 0.0 { (left / w).min(1.0) } else { 1.0 };
        c.0[f] = x;
        left -= x * w;
    }
    c
}

/// The full system: equilibrium coverage on the round's game and
/// belief-routed methods.
#[derive(Debug, Clone, Default)]
pub struct StackelbergPolicy {
    pub solver: SolverConfig,
}

impl Policy for StackelbergPolicy {
    fn name(&self) -> String {
        "stackelberg".into()
    }

    fn allocate(&mut self, ctx: &RoundContext) -> Result<Allocation> {
        let methods = route_by_belief(ctx.beliefs, ctx.model, &ctx.allowed);
        match ctx.game {
            Some(game) => {
                let s = solve_dobss_vd(game, &self.solver)?;
                if s.status != SolveStatus::Optimal {
                    return Err(Error::Invariant(format!("round {}: equilibrium LP failed", ctx.round)));
                }
                Ok(Allocation {
                    coverage: s.coverage,
                    methods,
                    objective: Some(s.objective),
                })
            }
            None => {
                let scores: Vec<f64> = (0..ctx.graph.vertices.len())
                    .map(|v| prune::vertex_score(ctx.graph, ctx.beliefs, v))
                    .collect();
                Ok(Allocation {
                    coverage: greedy_fill(ctx.graph, &scores, ctx.coverage_budget),
                    methods,
                    objective: None,
                })
            }
        }
    }
}

/// Attack-graph-free view: every non-goal vertex with any remaining class
/// prior becomes its own single-hop entry-to-goal target, reachability 1.
/// All targets lead to the first goal.
pub fn flatten_graph(g: &AttackGraph) -> Result<AttackGraph> {
    let goal = g
        .vertices
        .iter()
        .find(|v| v.is_goal())
        .map(|v| v.id)
        .ok_or_else(|| Error::Config("graph has no goal vertex".into()))?;
    let mut out = g.clone();
    out.edges.clear();
    for v in &mut out.vertices {
        if v.is_goal() {
            continue;
        }
        v.kind = VertexKind::Entry;
        v.reachability = 1.0;
        if presence(&v.phi) > 0.0 {
            out.edges.push(Edge {
                src: v.id,
                dst: goal,
                psi: 1.0,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub vertex: usize,
    pub class: usize,
    pub severity: f64,
    /// One-based round of discovery.
    pub round: usize,
    pub validated: bool,
    pub is_sibling_hit: bool,
    /// Ground-truth membership at verification time.
    pub true_positive: bool,
}

impl Finding {
    /// A validated candidate that is not a real defect.
    pub fn is_escape(&self) -> bool {
        self.validated && !self.true_positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub paths: Vec<usize>,
    pub coverage: CoverageVector,
    pub observations: Vec<Observation>,
    /// Main-pool units spent this round.
    pub budget_spent: u64,
    /// Reserve units spent on sibling tasks this round.
    pub sibling_spent: u64,
    pub objective: Option<f64>,
    pub expected_defender_utility: Option<f64>,
    pub attacker_path: Option<usize>,
    pub type_posterior: Vec<f64>,
}

/// Budget accounting in integer units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total: u64,
    pub reserve_total: u64,
    pub main_spent: u64,
    pub sibling_spent: u64,
    pub main_remaining: u64,
    pub reserve_remaining: u64,
}

impl BudgetLedger {
    pub fn spent(&self) -> u64 {
        self.main_spent + self.sibling_spent
    }

    pub fn balances(&self) -> bool {
        self.spent() + self.main_remaining + self.reserve_remaining == self.total
            && self.sibling_spent + self.reserve_remaining == self.reserve_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Solve {
        round: usize,
        paths: Vec<usize>,
        objective: Option<f64>,
    },
    Dispatch {
        round: usize,
        tasks: Vec<Task>,
    },
    Observe {
        round: usize,
        observation: Observation,
    },
    Verify {
        round: usize,
        vertex: usize,
        class: usize,
        sibling: bool,
        passed: bool,
    },
    Mitigate {
        round: usize,
        vertex: usize,
        class: usize,
        removed_edges: usize,
    },
    SiblingTask {
        round: usize,
        source: usize,
        task: Task,
    },
    TypePosterior {
        round: usize,
        posterior: Vec<f64>,
    },
    BudgetExhausted {
        round: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: String,
    pub seed: u64,
    pub fingerprint: String,
    pub attacker_type: usize,
    pub findings: Vec<Finding>,
    pub per_round: Vec<RoundRecord>,
    pub final_beliefs: BeliefState,
    pub mitigations: Vec<(usize, usize)>,
    pub budget: BudgetLedger,
    pub audit: Vec<AuditEvent>,
}

impl RunResult {
    /// `round,objective,spent,findings_cum,fpr_cum` with one row per round.
    /// `spent` is cumulative and includes sibling tasks.
    pub fn round_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("round,objective,spent,findings_cum,fpr_cum\n");
        let mut spent = 0u64;
        for r in &self.per_round {
            spent += r.budget_spent + r.sibling_spent;
            let upto: Vec<&Finding> = self.findings.iter().filter(|f| f.round <= r.round && f.validated).collect();
            let found = upto.iter().filter(|f| f.true_positive).count();
            let escapes = upto.iter().filter(|f| !f.true_positive).count();
            let fpr = if upto.is_empty() { 0.0 } else { escapes as f64 / upto.len() as f64 };
            let obj = r.objective.map(|o| o.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.round, obj, from_units(spent), found, fpr);
        }
        out
    }
}

/// Everything a run needs besides the policy.
pub struct RunInputs<'a> {
    pub graph: &'a AttackGraph,
    pub params: &'a GameParams,
    pub truth: &'a GroundTruth,
    pub model: &'a ObservationModel,
    /// Vertex similarity for sibling searches.
    pub sim: &'a [Vec<f64>],
}

struct Verifier<'a> {
    cfg: &'a RunConfig,
    seed: u64,
}

impl Verifier<'_> {
    fn check(&self, truth: &GroundTruth, round: usize, v: usize, c: usize, sibling: bool) -> bool {
        if !self.cfg.switches.use_verifier {
            return true;
        }
        let mut r = rng::stream(self.seed, "verify", &[round as u64, v as u64, c as u64, sibling as u64]);
        cascaded_verify(v, c, truth, &self.cfg.verifier, &mut r)
    }
}

/// Runs the orchestration loop. Deterministic in `seed`.
pub fn run_orchestration(
    inputs: &RunInputs,
    cfg: &RunConfig,
    seed: u64,
    policy: &mut dyn Policy,
) -> Result<RunResult> {
    cfg.validate()?;
    let params = inputs.params;
    params.validate()?;
    let model = inputs.model;
    let sw = cfg.switches;
    let allowed = sw.allowed_methods();
    let n = inputs.graph.vertices.len();
    if inputs.sim.len() != n || inputs.sim.iter().any(|r| r.len() != n) {
        return Err(Error::Config("similarity matrix does not match the graph".into()));
    }
    if model.num_classes() != inputs.graph.num_classes() {
        return Err(Error::Config("observation model and graph disagree on classes".into()));
    }

    let total = to_units(cfg.budget);
    let reserve_total = if sw.use_sibling {
        (cfg.beta * total as f64).floor() as u64
    } else {
        0
    };
    let mut ledger = BudgetLedger {
        total,
        reserve_total,
        main_spent: 0,
        sibling_spent: 0,
        main_remaining: total - reserve_total,
        reserve_remaining: reserve_total,
    };
    let sib_cfg = SiblingConfig {
        sigma: cfg.sigma,
        beta: cfg.beta,
        sim: inputs.sim.to_vec(),
    };
    let verifier = Verifier { cfg, seed };

    let mut graph = inputs.graph.clone();
    let mut beliefs = BeliefState::from_priors(&graph);
    let mut live = inputs.truth.clone();
    let mut mitigated: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut posterior: Vec<f64> = params.types.iter().map(|t| t.prior).collect();
    let attacker_type = {
        let mut r = rng::stream(seed, "attacker_type", &[]);
        let u: f64 = r.random();
        let mut acc = 0.0;
        posterior
            .iter()
            .position(|p| {
                acc += p;
                u < acc
            })
            .unwrap_or(posterior.len() - 1)
    };

    let view = |g: &AttackGraph| -> Result<AttackGraph> {
        if sw.use_attack_graph {
            Ok(g.clone())
        } else {
            flatten_graph(g)
        }
    };
    let initial_view = view(&graph)?;
    let mut ranker = PathRanker::new(enumerate_paths(&initial_view, cfg.max_paths), &initial_view, &beliefs);

    let mut findings = Vec::new();
    let mut per_round = Vec::new();
    let mut audit = Vec::new();
    let mut mitigations = Vec::new();

    for t in 0..cfg.rounds {
        let round = t + 1;
        if ledger.main_remaining == 0 {
            audit.push(AuditEvent::BudgetExhausted { round });
            info!("budget exhausted before round {round}");
            break;
        }
        let tranche = ledger.main_remaining / (cfg.rounds - t) as u64;
        // coverage is measured in the same units as the round tranche
        let coverage_budget = from_units(tranche);
        let current = view(&graph)?;
        ranker.drop_broken(&current);
        ranker.refresh(&current, &beliefs);
        let mut selected = ranker.top(&cfg.prune);
        if selected.is_empty() {
            selected = ranker.top(&PruneConfig {
                theta: f64::NEG_INFINITY,
                top_k: cfg.prune.top_k,
            });
        }
        let game = if selected.is_empty() {
            None
        } else {
            let mut p = params.clone();
            for (spec, &q) in p.types.iter_mut().zip(&posterior) {
                spec.prior = q;
            }
            let paths = selected.iter().map(|&i| ranker.paths()[i].clone()).collect();
            Some(p.instantiate(&current, &beliefs.b, paths, coverage_budget)?)
        };
        let ctx = RoundContext {
            round: t,
            graph: &current,
            beliefs: &beliefs,
            game: game.as_ref(),
            model,
            coverage_budget,
            allowed,
        };
        let alloc = policy.allocate(&ctx).map_err(|e| e.with_context(format!("round {round}")))?;
        crate::game_model::check_coverage(&graph, &alloc.coverage).map_err(|e| Error::Invariant(e.to_string()))?;
        let used = alloc.coverage.cost(&graph);
        if used > coverage_budget + 1e-9 {
            return Err(Error::Invariant(format!(
                "round {round}: coverage cost {used} exceeds the coverage budget {coverage_budget}"
            )));
        }
        audit.push(AuditEvent::Solve {
            round,
            paths: selected.clone(),
            objective: alloc.objective,
        });
        let plan = dispatch(&alloc.coverage, tranche, &mask_plan(alloc.methods, &allowed));
        let spent = plan.total();
        if spent > tranche {
            return Err(Error::Invariant(format!("round {round}: dispatch overspent its tranche")));
        }
        ledger.main_spent += spent;
        ledger.main_remaining -= spent;
        audit.push(AuditEvent::Dispatch {
            round,
            tasks: plan.tasks.clone(),
        });

        let mut observations = Vec::new();
        for task in &plan.tasks {
            let mut r = rng::stream(seed, "exec", &[t as u64, task.vertex as u64, task.method.index() as u64]);
            observations.extend(execute_simulated(task, &live, model, None, &mut r)?);
        }
        for o in &observations {
            audit.push(AuditEvent::Observe { round, observation: *o });
        }
        if sw.use_bayes_update {
            beliefs = beliefs.update_all(&observations, model);
        } else {
            beliefs.round += 1;
        }
        policy.feedback(t, &observations);

        let candidates: BTreeSet<(usize, usize)> = observations
            .iter()
            .filter(|o| ops::is_candidate(o))
            .map(|o| (o.vertex, o.class))
            .filter(|cell| !mitigated.contains(cell))
            .collect();
        let mut sibling_spent = 0u64;
        let mut sibling_obs = Vec::new();
        for (v, c) in candidates {
            // a sibling hit earlier in this round may have settled the cell
            if mitigated.contains(&(v, c)) {
                continue;
            }
            let truth_now = live.contains(v, c);
            let passed = verifier.check(&live, t, v, c, false);
            audit.push(AuditEvent::Verify { round, vertex: v, class: c, sibling: false, passed });
            findings.push(Finding {
                vertex: v,
                class: c,
                severity: graph.vertices[v].cvss_score,
                round,
                validated: passed,
                is_sibling_hit: false,
                true_positive: truth_now,
            });
            if !passed {
                if sw.use_bayes_update {
                    beliefs.b[v][c] = cfg.verifier.rejection_posterior(beliefs.b[v][c]);
                }
                continue;
            }
            mitigate(&mut graph, &mut beliefs, &mut live, &mut mitigated, &mut mitigations, &mut audit, round, v, c);
            if !sw.use_sibling {
                continue;
            }
            let Some(method) = best_method_for_class(model, c, &allowed) else {
                continue;
            };
            let mut funded = 0;
            for s in sibling_search(v, &sib_cfg, &graph) {
                if funded >= cfg.max_siblings || ledger.reserve_remaining == 0 {
                    break;
                }
                if mitigated.contains(&(s, c)) {
                    continue;
                }
                let tau = to_units(cfg.sibling_tau).min(ledger.reserve_remaining);
                if tau == 0 {
                    break;
                }
                funded += 1;
                ledger.reserve_remaining -= tau;
                ledger.sibling_spent += tau;
                sibling_spent += tau;
                let task = Task { vertex: s, method, tau };
                audit.push(AuditEvent::SiblingTask { round, source: v, task });
                let mut r = rng::stream(seed, "sibling", &[t as u64, s as u64, c as u64, v as u64]);
                let obs = execute_simulated(&task, &live, model, Some(c), &mut r)?;
                for o in &obs {
                    audit.push(AuditEvent::Observe { round, observation: *o });
                }
                if sw.use_bayes_update {
                    let next = beliefs.update_all(&obs, model);
                    beliefs.b = next.b;
                }
                if obs.iter().any(ops::is_candidate) {
                    let truth_now = live.contains(s, c);
                    let passed = verifier.check(&live, t, s, c, true);
                    audit.push(AuditEvent::Verify { round, vertex: s, class: c, sibling: true, passed });
                    findings.push(Finding {
                        vertex: s,
                        class: c,
                        severity: graph.vertices[s].cvss_score,
                        round,
                        validated: passed,
                        is_sibling_hit: true,
                        true_positive: truth_now,
                    });
                    if passed {
                        mitigate(&mut graph, &mut beliefs, &mut live, &mut mitigated, &mut mitigations, &mut audit, round, s, c);
                    } else if sw.use_bayes_update {
                        beliefs.b[s][c] = cfg.verifier.rejection_posterior(beliefs.b[s][c]);
                    }
                }
                sibling_obs.extend(obs);
            }
        }
        observations.extend(sibling_obs);

        let mut attacker_path = None;
        let mut eu = None;
        if let Some(game) = &game {
            let predicted = (0..game.types.len())
                .map(|ty| best_response(game, &alloc.coverage, ty))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let observed = predicted[attacker_type];
            attacker_path = Some(observed);
            posterior = update_type_posterior(&posterior, &predicted, observed, game.paths.len(), cfg.lambda_match);
            audit.push(AuditEvent::TypePosterior { round, posterior: posterior.clone() });
            eu = Some(expected_defender_utility(game, &alloc.coverage)?);
        }
        if !ledger.balances() {
            return Err(Error::Invariant(format!("round {round}: budget ledger does not balance")));
        }
        debug!("round {round}: spent {spent} + {sibling_spent} units, {} findings so far", findings.len());
        per_round.push(RoundRecord {
            round,
            paths: selected,
            coverage: alloc.coverage,
            observations,
            budget_spent: spent,
            sibling_spent,
            objective: alloc.objective,
            expected_defender_utility: eu,
            attacker_path,
            type_posterior: posterior.clone(),
        });
    }

    Ok(RunResult {
        policy: policy.name(),
        seed,
        fingerprint: cfg.fingerprint(&policy.name()),
        attacker_type,
        findings,
        per_round,
        final_beliefs: beliefs,
        mitigations,
        budget: ledger,
        audit,
    })
}

#[allow(clippy::too_many_arguments)]
fn mitigate(
    graph: &mut AttackGraph,
    beliefs: &mut BeliefState,
    live: &mut GroundTruth,
    mitigated: &mut BTreeSet<(usize, usize)>,
    mitigations: &mut Vec<(usize, usize)>,
    audit: &mut Vec<AuditEvent>,
    round: usize,
    v: usize,
    c: usize,
) {
    let removed_edges = apply_mitigation(graph, beliefs, v, c);
    live.vuln.remove(&(v, c));
    if mitigated.insert((v, c)) {
        mitigations.push((v, c));
    }
    audit.push(AuditEvent::Mitigate { round, vertex: v, class: c, removed_edges });
}
