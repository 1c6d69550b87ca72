//! Turning a coverage vector into analysis tasks.
//!
//! Budgets are tracked in integer units ([`UNITS_PER_BUDGET`] per budget
//! unit) so that spending is exact.

use serde::{Deserialize, Serialize};

use crate::game_model::{CoverageVector, Method};

pub const UNITS_PER_BUDGET: u64 = 1000;

pub fn to_units(budget: f64) -> u64 {
    (budget * UNITS_PER_BUDGET as f64).round().max(0.0) as u64
}

pub fn from_units(units: u64) -> f64 {
    units as f64 / UNITS_PER_BUDGET as f64
}

/// Method mix indexed by [`Method::index`].
pub type MethodWeights = [f64; Method::COUNT];

/// Default agent mix when no routing information is used.
pub const DEFAULT_WEIGHTS: MethodWeights = [0.35, 0.25, 0.15, 0.10, 0.15, 0.0];

pub fn single_method(m: Method) -> MethodWeights {
    let mut w = [0.0; Method::COUNT];
    w[m.index()] = 1.0;
    w
}

/// Method weights shared by all vertices or chosen per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MethodPlan {
    Global(MethodWeights),
    PerVertex(Vec<MethodWeights>),
}

impl MethodPlan {
    pub fn weights(&self, vertex: usize) -> MethodWeights {
        match self {
            MethodPlan::Global(w) => *w,
            MethodPlan::PerVertex(ws) => ws.get(vertex).copied().unwrap_or([0.0; Method::COUNT]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub vertex: usize,
    pub method: Method,
    /// Budget in integer units.
    pub tau: u64,
}

impl Task {
    pub fn tau_budget(&self) -> f64 {
        from_units(self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DispatchPlan {
    pub tasks: Vec<Task>,
}

impl DispatchPlan {
    pub fn total(&self) -> u64 {
        self.tasks.iter().map(|t| t.tau).sum()
    }
}

/// `tau(f, m) = c_f * w_m * round_budget` for every vertex with positive
/// coverage and every method with positive weight, scaled down
/// proportionally when the total exceeds the round budget. Tasks are ordered
/// by (vertex, method); zero-budget tasks are dropped. The verifier is never
/// dispatched.
pub fn dispatch(coverage: &CoverageVector, round_budget: u64, plan: &MethodPlan) -> DispatchPlan {
    let mut raw = Vec::new();
    for (f, &c) in coverage.0.iter().enumerate() {
        if !(c > 0.0) {
            continue;
        }
        let w = plan.weights(f);
        for m in Method::DETECTORS {
            let wm = w[m.index()];
            if wm > 0.0 {
                raw.push((f, m, c * wm * round_budget as f64));
            }
        }
    }
    let total: f64 = raw.iter().map(|r| r.2).sum();
    let scale = if total > round_budget as f64 { round_budget as f64 / total } else { 1.0 };
    let mut tasks: Vec<Task> = raw
        .into_iter()
        .map(|(vertex, method, t)| Task {
            vertex,
            method,
            // the epsilon absorbs representation error in c * w; the
            // overshoot check below keeps the total within budget
            tau: (t * scale + 1e-6).floor() as u64,
        })
        .collect();
    let mut over = tasks.iter().map(|t| t.tau).sum::<u64>().saturating_sub(round_budget);
    while over > 0 {
        let i = (0..tasks.len()).max_by_key(|&i| (tasks[i].tau, std::cmp::Reverse(i))).unwrap();
        let cut = over.min(tasks[i].tau);
        tasks[i].tau -= cut;
        over -= cut;
    }
    tasks.retain(|t| t.tau > 0);
    DispatchPlan { tasks }
}
