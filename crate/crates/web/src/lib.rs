//! Browser bindings for three small demos: solving a random game, tracing a
//! belief under a sequence of tool outcomes, and an online-learning regret
//! curve. Every export returns a JSON string.

use serde_json::{json, Value};
use stackvd::belief::{bayes_update, ObsKind, Observation, ObservationModelFile, StaticRate};
use stackvd::game_model::{expected_defender_utility, random_game, Method};
use stackvd::learner::{build_grid, run_on_grid};
use stackvd::solver::{solve_dobss_vd, uniform_coverage, SolverConfig};
use wasm_bindgen::prelude::*;

/// Largest instance the page may request, to keep the solver interactive.
const MAX_PAYLOAD: usize = 8;
const MAX_PATHS: usize = 6;
const MAX_TYPES: usize = 3;
const MAX_ROUNDS: usize = 50_000;
/// Points kept from a regret curve.
const CURVE_POINTS: usize = 200;

pub fn solve_game(seed: u64, n_payload: usize, n_paths: usize, n_types: usize, budget: f64) -> Result<Value, String> {
    if !(1..=MAX_PAYLOAD).contains(&n_payload) || !(1..=MAX_PATHS).contains(&n_paths) || !(1..=MAX_TYPES).contains(&n_types) {
        return Err(format!(
            "sizes must be 1..={MAX_PAYLOAD} vertices, 1..={MAX_PATHS} paths, 1..={MAX_TYPES} types"
        ));
    }
    if !(budget >= 0.0) {
        return Err("budget must be nonnegative".into());
    }
    let mut game = random_game(seed, n_payload, n_paths, n_types);
    game.budget = budget;
    let s = solve_dobss_vd(&game, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let uniform = expected_defender_utility(&game, &uniform_coverage(&game)).map_err(|e| e.to_string())?;
    let paths: Vec<Vec<usize>> = game.paths.iter().map(|p| p.vertices().to_vec()).collect();
    let priors: Vec<f64> = game.types.iter().map(|t| t.prior).collect();
    Ok(json!({
        "coverage": s.coverage.0[..n_payload],
        "objective": s.objective,
        "uniform_objective": uniform,
        "attacked_path": s.attacked_path.values().collect::<Vec<_>>(),
        "paths": paths,
        "priors": priors,
    }))
}

/// Posterior after each outcome in `outcomes`: `a` alert, `c` clean, `t`
/// timeout, for a static tool with rates `rho` and `alpha`.
pub fn belief_trace(prior: f64, rho: f64, alpha: f64, outcomes: &str) -> Result<Value, String> {
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    if !(unit(prior) && unit(rho) && unit(alpha)) {
        return Err("prior, rho and alpha must lie in [0,1]".into());
    }
    let graph = stackvd::attack_graph::generate_synthetic_graph(&Default::default()).map_err(|e| e.to_string())?;
    let mut file = ObservationModelFile::default();
    file.codeql.insert(graph.classes[0].label.clone(), StaticRate { rho, alpha });
    file.timeout_rate = 0.0;
    let model = file.resolve(&graph).map_err(|e| e.to_string())?;
    let mut b = prior;
    let mut trace = vec![b];
    for ch in outcomes.chars().filter(|c| !c.is_whitespace()) {
        let (kind, tau) = match ch.to_ascii_lowercase() {
            'a' => (ObsKind::Alert, model.tau0),
            'c' => (ObsKind::Clean, model.tau0),
            't' => (ObsKind::Timeout, 0.0),
            other => return Err(format!("unknown outcome '{other}', use a, c or t")),
        };
        let obs = Observation { vertex: 0, class: 0, method: Method::CodeQl, tau, kind };
        b = bayes_update(b, &obs, &model);
        trace.push(b);
    }
    Ok(json!({ "posterior": trace }))
}

/// Cumulative regret of the online learner on a three-vertex game with unit
/// budget, sampled at up to `CURVE_POINTS` rounds.
pub fn regret_trace(seed: u64, rounds: usize, delta: f64) -> Result<Value, String> {
    if !(1..=MAX_ROUNDS).contains(&rounds) {
        return Err(format!("rounds must be 1..={MAX_ROUNDS}"));
    }
    if !(delta >= 0.1 && delta <= 0.5) {
        return Err("delta must lie in [0.1, 0.5]".into());
    }
    let mut game = random_game(seed, 3, 3, 2);
    game.budget = 1.0;
    let grid = build_grid(&game, delta).map_err(|e| e.to_string())?;
    let trace = run_on_grid(&game, &grid, rounds, seed).map_err(|e| e.to_string())?;
    let step = rounds.div_ceil(CURVE_POINTS).max(1);
    let points: Vec<(usize, f64)> = (1..=rounds)
        .filter(|t| t % step == 0 || *t == rounds)
        .map(|t| (t, trace.cumulative_regret[t - 1]))
        .collect();
    Ok(json!({ "arms": trace.arms, "points": points }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = solveGame)]
pub fn solve_game_js(seed: u32, n_payload: u32, n_paths: u32, n_types: u32, budget: f64) -> Result<String, JsValue> {
    to_js(solve_game(seed as u64, n_payload as usize, n_paths as usize, n_types as usize, budget))
}

#[wasm_bindgen(js_name = beliefTrace)]
pub fn belief_trace_js(prior: f64, rho: f64, alpha: f64, outcomes: &str) -> Result<String, JsValue> {
    to_js(belief_trace(prior, rho, alpha, outcomes))
}

#[wasm_bindgen(js_name = regretTrace)]
pub fn regret_trace_js(seed: u32, rounds: u32, delta: f64) -> Result<String, JsValue> {
    to_js(regret_trace(seed as u64, rounds as usize, delta))
}
