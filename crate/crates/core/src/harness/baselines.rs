//! Comparison allocators and the bandit allocator used when the game solve
//! is switched off.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attack_graph::{presence, AttackGraph};
use crate::belief::{BeliefState, Observation};
use crate::error::Result;
use crate::game_model::{CoverageVector, Method};
use crate::orchestrator::{
    dispatch::single_method, greedy_fill, mask_weights, prune::vertex_score, route_by_belief, Allocation,
    MethodPlan, Policy, RoundContext, StackelbergPolicy, DEFAULT_WEIGHTS,
};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Equal coverage everywhere.
    B1Uniform,
    /// Coverage proportional to code churn.
    B2Churn,
    /// Fuzzing of entry-near code only.
    B3FuzzOnly,
    /// Static analysis guided by the class priors.
    B4StaticOnly,
    /// Belief-score greedy allocation without the game.
    B5MultiAgentNoGt,
    /// The full system without the sibling reserve.
    B6NoSibling,
    /// The full system.
    Full,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::B1Uniform,
        BaselineKind::B2Churn,
        BaselineKind::B3FuzzOnly,
        BaselineKind::B4StaticOnly,
        BaselineKind::B5MultiAgentNoGt,
        BaselineKind::B6NoSibling,
        BaselineKind::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::B1Uniform => "b1_uniform",
            BaselineKind::B2Churn => "b2_churn",
            BaselineKind::B3FuzzOnly => "b3_fuzz_only",
            BaselineKind::B4StaticOnly => "b4_static_only",
            BaselineKind::B5MultiAgentNoGt => "b5_multi_agent_no_gt",
            BaselineKind::B6NoSibling => "b6_no_sibling",
            BaselineKind::Full => "full",
        }
    }

    /// Whether the allocation comes from the equilibrium solve.
    pub fn uses_game(self) -> bool {
        matches!(self, BaselineKind::B6NoSibling | BaselineKind::Full)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Largest `s` with `sum_f w_f min(1, s x_f) <= budget`, applied: coverage
/// proportional to `x`, clipped to 1, with the clipped mass handed to the
/// rest.
pub fn proportional_projection(graph: &AttackGraph, x: &[f64], budget: f64) -> CoverageVector {
    let n = graph.vertices.len();
    let mut c = CoverageVector::zeros(n);
    let support: Vec<usize> = (0..n).filter(|&f| x[f] > 0.0 && !graph.vertices[f].is_goal()).collect();
    if support.is_empty() || budget <= 0.0 {
        return c;
    }
    let w = |f: usize| graph.vertices[f].cost_w;
    let full: f64 = support.iter().map(|&f| w(f)).sum();
    if full <= budget {
        for &f in &support {
            c.0[f] = 1.0;
        }
        return c;
    }
    // vertices saturate in decreasing order of x; find the active breakpoint
    let mut order = support.clone();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut saturated_cost = 0.0;
    let mut rest_wx: f64 = order.iter().map(|&f| w(f) * x[f]).sum();
    let mut scale = 0.0;
    for (k, &f) in order.iter().enumerate() {
        // scale if vertices order[..k] are saturated and the rest are not
        let s = (budget - saturated_cost) / rest_wx;
        if s * x[f] <= 1.0 {
            scale = s;
            break;
        }
        saturated_cost += w(f);
        rest_wx -= w(f) * x[f];
        if k + 1 == order.len() {
            scale = 1.0 / x[f];
        }
    }
    for &f in &support {
        c.0[f] = (scale * x[f]).min(1.0);
    }
    // guard against rounding pushing the cost a hair over budget
    let cost = c.cost(graph);
    if cost > budget {
        let r = budget / cost;
        c.0.iter_mut().for_each(|v| *v *= r);
    }
    c
}

/// Vertices within two hops of an entry (entries included).
pub fn fuzz_targets(graph: &AttackGraph) -> Vec<usize> {
    graph
        .entry_depth()
        .iter()
        .enumerate()
        .filter(|(v, d)| matches!(d, Some(d) if *d <= 2) && !graph.vertices[*v].is_goal())
        .map(|(v, _)| v)
        .collect()
}

/// Coverage chosen by a non-game allocator; `None` for the kinds that solve
/// the game.
pub fn allocate_baseline(
    kind: BaselineKind,
    graph: &AttackGraph,
    beliefs: &BeliefState,
    budget: f64,
) -> Option<CoverageVector> {
    let n = graph.vertices.len();
    let indicator = |keep: &dyn Fn(usize) -> bool| -> Vec<f64> {
        (0..n).map(|f| if keep(f) { 1.0 } else { 0.0 }).collect()
    };
    Some(match kind {
        BaselineKind::B1Uniform => proportional_projection(graph, &indicator(&|_| true), budget),
        BaselineKind::B2Churn => {
            let churn: Vec<f64> = graph.vertices.iter().map(|v| v.churn).collect();
            proportional_projection(graph, &churn, budget)
        }
        BaselineKind::B3FuzzOnly => {
            let targets: BTreeSet<usize> = fuzz_targets(graph).into_iter().collect();
            proportional_projection(graph, &indicator(&|f| targets.contains(&f)), budget)
        }
        BaselineKind::B4StaticOnly => {
            let prior: Vec<f64> = graph.vertices.iter().map(|v| presence(&v.phi)).collect();
            proportional_projection(graph, &prior, budget)
        }
        BaselineKind::B5MultiAgentNoGt => {
            let scores: Vec<f64> = (0..n).map(|v| vertex_score(graph, beliefs, v)).collect();
            greedy_fill(graph, &scores, budget)
        }
        BaselineKind::B6NoSibling | BaselineKind::Full => return None,
    })
}

/// A non-game allocator with its fixed method mix.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    pub kind: BaselineKind,
}

impl Policy for BaselinePolicy {
    fn name(&self) -> String {
        self.kind.label().into()
    }

    fn allocate(&mut self, ctx: &RoundContext) -> Result<Allocation> {
        let coverage = allocate_baseline(self.kind, ctx.graph, ctx.beliefs, ctx.coverage_budget)
            .ok_or_else(|| crate::Error::Config(format!("{} needs the game solver", self.kind)))?;
        let weights = match self.kind {
            BaselineKind::B3FuzzOnly => single_method(Method::Fuzz),
            BaselineKind::B4StaticOnly => single_method(Method::CodeQl),
            _ => mask_weights(DEFAULT_WEIGHTS, &ctx.allowed),
        };
        Ok(Allocation {
            coverage,
            methods: MethodPlan::Global(weights),
            objective: None,
        })
    }
}

/// Upper-confidence-bound allocator: every non-goal vertex is an arm whose
/// reward is whether a round of analysis there raised any candidate. Arms
/// are filled greedily by index; unpulled arms come first in id order.
#[derive(Debug, Clone, Default)]
pub struct UcbPolicy {
    pulls: Vec<f64>,
    rewards: Vec<f64>,
    last: Vec<usize>,
    rounds: usize,
}

impl UcbPolicy {
    pub fn index(&self, f: usize) -> f64 {
        if self.pulls[f] == 0.0 {
            return f64::INFINITY;
        }
        let t = (self.rounds.max(1)) as f64;
        self.rewards[f] / self.pulls[f] + (2.0 * t.ln() / self.pulls[f]).sqrt()
    }
}

impl Policy for UcbPolicy {
    fn name(&self) -> String {
        "ucb".into()
    }

    fn allocate(&mut self, ctx: &RoundContext) -> Result<Allocation> {
        let n = ctx.graph.vertices.len();
        if self.pulls.len() != n {
            self.pulls = vec![0.0; n];
            self.rewards = vec![0.0; n];
        }
        let mut order: Vec<usize> = (0..n)
            .filter(|&f| !ctx.graph.vertices[f].is_goal() && presence(&ctx.graph.vertices[f].phi) > 0.0)
            .collect();
        order.sort_by(|&a, &b| self.index(b).total_cmp(&self.index(a)).then(a.cmp(&b)));
        let mut c = CoverageVector::zeros(n);
        let mut left = ctx.coverage_budget;
        self.last.clear();
        for f in order {
            if left <= 0.0 {
                break;
            }
            let w = ctx.graph.vertices[f].cost_w;
            let x = (left / w).min(1.0);
            c.0[f] = x;
            left -= x * w;
            self.last.push(f);
        }
        Ok(Allocation {
            coverage: c,
            methods: route_by_belief(ctx.beliefs, ctx.model, &ctx.allowed),
            objective: None,
        })
    }

    fn feedback(&mut self, _round: usize, observations: &[Observation]) {
        self.rounds += 1;
        let hit: BTreeSet<usize> = observations
            .iter()
            .filter(|o| crate::orchestrator::ops::is_candidate(o))
            .map(|o| o.vertex)
            .collect();
        for &f in &self.last {
            self.pulls[f] += 1.0;
            if hit.contains(&f) {
                self.rewards[f] += 1.0;
            }
        }
    }
}

/// The policy for a comparison method, optionally with the game solve
/// replaced by the bandit allocator.
pub fn make_policy(kind: BaselineKind, use_stackelberg: bool, solver: &SolverConfig) -> Box<dyn Policy + Send> {
    if kind.uses_game() {
        if use_stackelberg {
            Box::new(StackelbergPolicy { solver: solver.clone() })
        } else {
            Box::new(UcbPolicy::default())
        }
    } else {
        Box::new(BaselinePolicy { kind })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack_graph::fixtures::{classes, edge, vertex};
    use crate::attack_graph::{generate_synthetic_graph, GeneratorConfig, VertexKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn four_plus_goal(churn: [f64; 4]) -> AttackGraph {
        let mut vs: Vec<_> = (0..4).map(|i| vertex(i, VertexKind::Entry, vec![0.1])).collect();
        for (v, c) in vs.iter_mut().zip(churn) {
            v.churn = c;
        }
        vs.push(vertex(4, VertexKind::Goal, vec![0.0]));
        AttackGraph {
            classes: classes(1),
            vertices: vs,
            edges: (0..4).map(|i| edge(i, 4, 1.0)).collect(),
        }
    }

    #[test]
    fn uniform_example() {
        let g = four_plus_goal([0.0; 4]);
        let b = BeliefState::from_priors(&g);
        let c = allocate_baseline(BaselineKind::B1Uniform, &g, &b, 2.0).unwrap();
        assert_eq!(c.0, vec![0.5, 0.5, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn churn_example() {
        let g = four_plus_goal([3.0, 1.0, 0.0, 0.0]);
        let b = BeliefState::from_priors(&g);
        let c = allocate_baseline(BaselineKind::B2Churn, &g, &b, 1.0).unwrap();
        assert_abs_diff_eq!(c.0[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(c.0[1], 0.25, epsilon = 1e-12);
        assert_eq!(&c.0[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn churn_clipping_redistributes() {
        let g = four_plus_goal([10.0, 1.0, 1.0, 0.0]);
        let b = BeliefState::from_priors(&g);
        let c = allocate_baseline(BaselineKind::B2Churn, &g, &b, 2.0).unwrap();
        assert_abs_diff_eq!(c.0[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.0[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.0[2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fuzz_targets_stay_near_entries() {
        let g = generate_synthetic_graph(&GeneratorConfig::default()).unwrap();
        let depth = g.entry_depth();
        let t = fuzz_targets(&g);
        assert!(!t.is_empty());
        assert!(t.iter().all(|&v| depth[v].unwrap() <= 2));
        let b = BeliefState::from_priors(&g);
        let c = allocate_baseline(BaselineKind::B3FuzzOnly, &g, &b, 3.0).unwrap();
        for (v, &x) in c.0.iter().enumerate() {
            assert_eq!(x > 0.0, t.contains(&v));
        }
    }

    #[test]
    fn game_kinds_delegate() {
        let g = four_plus_goal([0.0; 4]);
        let b = BeliefState::from_priors(&g);
        assert!(allocate_baseline(BaselineKind::Full, &g, &b, 1.0).is_none());
        assert!(allocate_baseline(BaselineKind::B6NoSibling, &g, &b, 1.0).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn baselines_are_budget_feasible(
            seed in 0u64..10_000,
            budget in 0.0f64..12.0,
            kind in 0usize..5,
            cost_hi in 1.0f64..3.0,
        ) {
            let g = generate_synthetic_graph(&GeneratorConfig {
                seed,
                n_func: 12,
                cost_range: [0.5, cost_hi],
                ..Default::default()
            }).unwrap();
            let mut b = BeliefState::from_priors(&g);
            b.b.iter_mut().enumerate().for_each(|(v, row)| row.iter_mut().for_each(|x| *x = (*x + v as f64 * 0.01).min(1.0)));
            for v in &g.vertices { if v.is_goal() { b.b[v.id].iter_mut().for_each(|x| *x = 0.0); } }
            let c = allocate_baseline(BaselineKind::ALL[kind], &g, &b, budget).unwrap();
            prop_assert!(c.is_budget_feasible(&g, budget));
            prop_assert!(c.0.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
