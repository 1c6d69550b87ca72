//! Belief-weighted path scoring and top-K selection.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attack_graph::{AttackGraph, AttackPath};
use crate::belief::BeliefState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub theta: f64,
    pub top_k: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self { theta: 0.0, top_k: 5 }
    }
}

/// Score contribution of one vertex: highest class belief times severity
/// times reachability.
pub fn vertex_score(graph: &AttackGraph, beliefs: &BeliefState, v: usize) -> f64 {
    let vx = &graph.vertices[v];
    beliefs.max_class(v) * vx.cvss_score * vx.reachability
}

pub fn path_score(graph: &AttackGraph, beliefs: &BeliefState, p: &AttackPath) -> f64 {
    p.vertices().iter().map(|&v| vertex_score(graph, beliefs, v)).sum()
}

fn ranked(scores: &[f64], theta: f64, top_k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= theta).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(top_k);
    idx
}

/// Indices of the `top_k` highest-scoring paths with score at least `theta`,
/// best first; equal scores keep the lower index first.
pub fn prune_paths(
    paths: &[AttackPath],
    beliefs: &BeliefState,
    graph: &AttackGraph,
    cfg: &PruneConfig,
) -> Vec<usize> {
    let scores: Vec<f64> = paths.iter().map(|p| path_score(graph, beliefs, p)).collect();
    ranked(&scores, cfg.theta, cfg.top_k)
}

#[derive(Debug, Clone, Copy)]
struct Key(f64, usize);

impl PartialEq for Key {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        // best score first, then lower index
        o.0.total_cmp(&self.0).then(self.1.cmp(&o.1))
    }
}

/// Incrementally maintained path ranking. After a belief or graph change
/// only the paths through changed vertices are rescored.
#[derive(Debug, Clone)]
pub struct PathRanker {
    paths: Vec<AttackPath>,
    through: Vec<Vec<usize>>,
    vertex_scores: Vec<f64>,
    scores: Vec<f64>,
    alive: Vec<bool>,
    order: BTreeSet<Key>,
}

impl PathRanker {
    pub fn new(paths: Vec<AttackPath>, graph: &AttackGraph, beliefs: &BeliefState) -> Self {
        let n = graph.vertices.len();
        let mut through = vec![Vec::new(); n];
        for (i, p) in paths.iter().enumerate() {
            for &v in p.vertices() {
                through[v].push(i);
            }
        }
        let vertex_scores: Vec<f64> = (0..n).map(|v| vertex_score(graph, beliefs, v)).collect();
        let scores: Vec<f64> = paths
            .iter()
            .map(|p| p.vertices().iter().map(|&v| vertex_scores[v]).sum())
            .collect();
        let order = scores.iter().enumerate().map(|(i, &s)| Key(s, i)).collect();
        let alive = vec![true; paths.len()];
        Self {
            paths,
            through,
            vertex_scores,
            scores,
            alive,
            order,
        }
    }

    pub fn paths(&self) -> &[AttackPath] {
        &self.paths
    }

    pub fn score(&self, i: usize) -> f64 {
        self.scores[i]
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    /// Rescores the paths through any vertex whose score changed.
    pub fn refresh(&mut self, graph: &AttackGraph, beliefs: &BeliefState) {
        let mut dirty = BTreeSet::new();
        for v in 0..self.vertex_scores.len() {
            let s = vertex_score(graph, beliefs, v);
            if s.to_bits() != self.vertex_scores[v].to_bits() {
                self.vertex_scores[v] = s;
                dirty.extend(self.through[v].iter().copied());
            }
        }
        for i in dirty {
            let s: f64 = self.paths[i].vertices().iter().map(|&v| self.vertex_scores[v]).sum();
            if self.alive[i] {
                self.order.remove(&Key(self.scores[i], i));
                self.order.insert(Key(s, i));
            }
            self.scores[i] = s;
        }
    }

    /// Drops paths that use an edge no longer in `graph`.
    pub fn drop_broken(&mut self, graph: &AttackGraph) {
        let edges: BTreeSet<(usize, usize)> = graph.edges.iter().map(|e| (e.src, e.dst)).collect();
        for i in 0..self.paths.len() {
            if !self.alive[i] {
                continue;
            }
            let ok = self.paths[i].vertices().windows(2).all(|w| edges.contains(&(w[0], w[1])));
            if !ok {
                self.alive[i] = false;
                self.order.remove(&Key(self.scores[i], i));
            }
        }
    }

    pub fn num_alive(&self) -> usize {
        self.order.len()
    }

    /// Top paths as [`prune_paths`] would return them over the live paths.
    pub fn top(&self, cfg: &PruneConfig) -> Vec<usize> {
        self.order
            .iter()
            .take_while(|k| k.0 >= cfg.theta)
            .take(cfg.top_k)
            .map(|k| k.1)
            .collect()
    }
}
