//! Simulated execution, cascaded verification, sibling search, mitigation
//! and the attacker-type posterior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack_graph::{presence, AttackGraph, GroundTruth};
use crate::belief::{sample_kind, BeliefState, ObsKind, ObservationModel, Observation};
use crate::error::BeliefError;

use super::dispatch::Task;

/// Runs `task` against the ground truth: one observation per class the
/// task's method detects (or only `only_class`).
pub fn execute_simulated<R: Rng + ?Sized>(
    task: &Task,
    truth: &GroundTruth,
    model: &ObservationModel,
    only_class: Option<usize>,
    rng: &mut R,
) -> Result<Vec<Observation>, BeliefError> {
    let tau = task.tau_budget();
    let mut out = Vec::new();
    for class in model.detectable(task.method) {
        if only_class.is_some_and(|c| c != class) {
            continue;
        }
        let vulnerable = truth.contains(task.vertex, class);
        let kind = sample_kind(model, vulnerable, task.method, class, tau, rng)?;
        out.push(Observation {
            vertex: task.vertex,
            class,
            method: task.method,
            tau,
            kind,
        });
    }
    Ok(out)
}

pub fn is_candidate(o: &Observation) -> bool {
    matches!(o.kind, ObsKind::Alert | ObsKind::Crash)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierConfig {
    /// Pass probability of a false candidate at each stage.
    pub stage_fpr: [f64; 3],
    /// Pass probability of a true candidate at each stage.
    pub stage_tpr: [f64; 3],
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            stage_fpr: [0.5, 0.4, 0.3],
            stage_tpr: [0.95, 0.95, 0.98],
        }
    }
}

impl VerifierConfig {
    pub fn escape_probability(&self) -> f64 {
        self.stage_fpr.iter().product()
    }

    pub fn retention_probability(&self) -> f64 {
        self.stage_tpr.iter().product()
    }

    /// Posterior of a candidate cell with prior `b` after the cascade rejects
    /// it. Rejection is an observation like any tool outcome.
    pub fn rejection_posterior(&self, b: f64) -> f64 {
        let on_vuln = b * (1.0 - self.retention_probability());
        let off_vuln = (1.0 - b) * (1.0 - self.escape_probability());
        if on_vuln + off_vuln <= 0.0 {
            b
        } else {
            on_vuln / (on_vuln + off_vuln)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self
            .stage_fpr
            .iter()
            .chain(&self.stage_tpr)
            .all(|p| (0.0..=1.0).contains(p))
        {
            Ok(())
        } else {
            Err("verifier stage rates must lie in [0,1]".into())
        }
    }
}

/// Three-stage verifier. Every stage is drawn, so a candidate consumes the
/// same number of random values whatever the outcome.
pub fn cascaded_verify<R: Rng + ?Sized>(
    vertex: usize,
    class: usize,
    truth: &GroundTruth,
    cfg: &VerifierConfig,
    rng: &mut R,
) -> bool {
    let rates = if truth.contains(vertex, class) { &cfg.stage_tpr } else { &cfg.stage_fpr };
    let mut pass = true;
    for &p in rates {
        let u: f64 = rng.random();
        pass &= u < p;
    }
    pass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiblingConfig {
    pub sigma: f64,
    pub beta: f64,
    pub sim: Vec<Vec<f64>>,
}

/// Vertices strictly more similar than `sigma` to `found`, most similar
/// first, then by id. Goal vertices are never returned.
pub fn sibling_search(found: usize, cfg: &SiblingConfig, graph: &AttackGraph) -> Vec<usize> {
    let row = &cfg.sim[found];
    let mut out: Vec<usize> = (0..row.len())
        .filter(|&v| v != found && row[v] > cfg.sigma && !graph.vertices[v].is_goal())
        .collect();
    out.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    out
}

/// Zeroes the prior and belief of the mitigated cell; once no class can be
/// present at the vertex its outgoing edges are removed. Returns the number
/// of removed edges.
pub fn apply_mitigation(
    graph: &mut AttackGraph,
    beliefs: &mut BeliefState,
    vertex: usize,
    class: usize,
) -> usize {
    graph.vertices[vertex].phi[class] = 0.0;
    beliefs.b[vertex][class] = 0.0;
    if presence(&graph.vertices[vertex].phi) > 0.0 {
        return 0;
    }
    let before = graph.edges.len();
    graph.edges.retain(|e| e.src != vertex);
    before - graph.edges.len()
}

/// One Bayes step on the attacker-type distribution. Each type's likelihood
/// is `lambda` when its predicted path equals the observed one and
/// `(1 - lambda) / (n_paths - 1)` otherwise.
pub fn update_type_posterior(
    prior: &[f64],
    predicted: &[usize],
    observed: usize,
    n_paths: usize,
    lambda: f64,
) -> Vec<f64> {
    if n_paths <= 1 {
        return prior.to_vec();
    }
    let miss = (1.0 - lambda) / (n_paths - 1) as f64;
    let unnorm: Vec<f64> = prior
        .iter()
        .zip(predicted)
        .map(|(p, &q)| p * if q == observed { lambda } else { miss })
        .collect();
    let z: f64 = unnorm.iter().sum();
    if z <= 0.0 {
        return prior.to_vec();
    }
    let mut out: Vec<f64> = unnorm.iter().map(|u| u / z).collect();
    // absorb rounding so the distribution sums to one
    let rest: f64 = out[1..].iter().sum();
    out[0] = (1.0 - rest).max(0.0);
    out
}
