//! Online learning of the coverage commitment: EXP3 over a lattice of
//! budget-feasible coverage vectors, with rewards realized under sampled
//! defect hypotheses, and empirical regret measurement.
//!
//! Each round the learner draws a grid point from the EXP3 distribution, an
//! attacker type is drawn from the prior and best-responds to that point, and
//! a defect hypothesis is sampled from the vertex presence probabilities.
//! The defender's reward is its utility under the hypothesis: the detection
//! value and the impact at a vertex are scaled by `X_f / q_f`, where `X_f`
//! indicates a sampled defect and `q_f` is its presence probability, so the
//! reward is an unbiased noisy version of the expected utility. Rewards are
//! mapped affinely to `[0, 1]` with bounds precomputed over grid x paths x
//! types x hypotheses. Regret is measured on expected utilities against the
//! recorded type sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::attack_graph::{presence, AttackGraph, GroundTruth};
use crate::belief::BeliefState;
use crate::error::{GameError, LearnerError};
use crate::game_model::{best_response, defender_utility, CoverageVector, GameInstance};
use crate::rng;

/// Largest lattice `build_grid` will enumerate.
pub const GRID_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyGrid {
    pub delta: f64,
    /// Vertices the lattice ranges over; all others stay at zero.
    pub vertices: Vec<usize>,
    /// Feasible points in lexicographic order of their lattice levels.
    pub points: Vec<CoverageVector>,
}

impl StrategyGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn lattice_levels(delta: f64) -> Result<usize, LearnerError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(LearnerError::Invalid(format!("delta {delta} must lie in (0,1]")));
    }
    Ok((1.0 / delta + 1e-9).floor() as usize)
}

/// All lattice points `k * delta` (clipped to 1) over the game's payload
/// vertices with `sum_f w_f c_f <= B`.
pub fn build_grid(game: &GameInstance, delta: f64) -> Result<StrategyGrid, LearnerError> {
    let levels = lattice_levels(delta)?;
    let vertices = game.payload_vertices();
    let points_total = ((levels + 1) as f64).powi(vertices.len() as i32);
    if points_total > GRID_LIMIT {
        return Err(LearnerError::GridTooLarge {
            points: points_total,
            limit: GRID_LIMIT,
        });
    }
    let n = game.num_vertices();
    let mut points = Vec::new();
    let mut idx = vec![0usize; vertices.len()];
    loop {
        let mut c = CoverageVector::zeros(n);
        for (&f, &k) in vertices.iter().zip(&idx) {
            c.0[f] = (k as f64 * delta).min(1.0);
        }
        if c.is_budget_feasible(&game.graph, game.budget) {
            points.push(c);
        }
        // odometer with the last vertex fastest
        let mut pos = vertices.len();
        loop {
            if pos == 0 {
                return Ok(StrategyGrid { delta, vertices, points });
            }
            pos -= 1;
            if idx[pos] < levels {
                idx[pos] += 1;
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Anytime exploration rate `min(1, sqrt(K ln K / ((e - 1) t)))` for round
/// `t >= 1`.
pub fn gamma_schedule(arms: usize, t: usize) -> f64 {
    if arms <= 1 {
        return 1.0;
    }
    let k = arms as f64;
    (k * k.ln() / ((std::f64::consts::E - 1.0) * t.max(1) as f64)).sqrt().min(1.0)
}

/// Sampling distribution from log-weights: softmax mixed with the uniform
/// distribution at rate `gamma`.
pub fn exp3_probabilities(log_weights: &[f64], gamma: f64) -> Vec<f64> {
    let k = log_weights.len() as f64;
    let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| (1.0 - gamma) * x / s + gamma / k).collect()
}

/// One EXP3 update. Weights are kept as logarithms so they stay finite over
/// long runs; the chosen arm gains `gamma * (reward / p) / K`.
pub fn exp3_step(
    log_weights: &[f64],
    chosen: usize,
    reward: f64,
    gamma: f64,
) -> Result<Vec<f64>, LearnerError> {
    if !(0.0..=1.0).contains(&reward) {
        return Err(LearnerError::RewardRange(reward));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LearnerError::Invalid(format!("gamma {gamma} must lie in (0,1]")));
    }
    if chosen >= log_weights.len() {
        return Err(LearnerError::Invalid(format!("arm {chosen} out of range")));
    }
    let p = exp3_probabilities(log_weights, gamma)[chosen];
    let k = log_weights.len() as f64;
    let mut out = log_weights.to_vec();
    out[chosen] += gamma * (reward / p) / k;
    Ok(out)
}

/// Samples a defect hypothesis: each cell is vulnerable with probability
/// equal to its belief.
pub fn thompson_realize<R: Rng + ?Sized>(beliefs: &BeliefState, rng: &mut R) -> GroundTruth {
    let mut truth = GroundTruth::default();
    for (v, row) in beliefs.b.iter().enumerate() {
        for (c, &b) in row.iter().enumerate() {
            if rng.random::<f64>() < b {
                truth.vuln.insert((v, c));
            }
        }
    }
    truth
}

/// Defender utility when a vertex's value and impact are scaled by the
/// factors in `scale` (1 everywhere reproduces [`defender_utility`]).
fn scaled_utility(game: &GameInstance, c: &CoverageVector, p: usize, ty: usize, scale: &[f64]) -> f64 {
    game.payload(&game.paths[p])
        .map(|f| single_vertex_term(game, c, f, ty, scale[f]))
        .sum()
}

fn presence_vector(graph: &AttackGraph) -> Vec<f64> {
    graph.vertices.iter().map(|v| presence(&v.phi)).collect()
}

/// Largest realization factor `1 / q_f` per vertex (1 when `q_f` is 0 or 1,
/// where the realization is deterministic).
fn max_scale(q: &[f64]) -> Vec<f64> {
    q.iter().map(|&x| if x > 0.0 && x < 1.0 { 1.0 / x } else { 1.0 }).collect()
}

/// `[min, max]` realized defender utility over grid points, paths, types
/// and defect hypotheses.
pub fn reward_bounds(game: &GameInstance, grid: &StrategyGrid) -> (f64, f64) {
    let q = presence_vector(&game.graph);
    let hi = max_scale(&q);
    let (mut lo_all, mut hi_all) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &grid.points {
        for ty in 0..game.types.len() {
            for p in 0..game.paths.len() {
                let (mut lo_s, mut hi_s) = (0.0, 0.0);
                for f in game.payload(&game.paths[p]) {
                    // utility is linear in each factor, so the extremes sit at
                    // factor 0 and 1/q (or at 1 when the vertex is certain)
                    let (a, b) = if q[f] > 0.0 && q[f] < 1.0 { (0.0, hi[f]) } else { (1.0, 1.0) };
                    let ua = single_vertex_term(game, c, f, ty, a);
                    let ub = single_vertex_term(game, c, f, ty, b);
                    lo_s += ua.min(ub);
                    hi_s += ua.max(ub);
                }
                lo_all = lo_all.min(lo_s);
                hi_all = hi_all.max(hi_s);
            }
        }
    }
    (lo_all, hi_all)
}

fn single_vertex_term(game: &GameInstance, c: &CoverageVector, f: usize, ty: usize, scale: f64) -> f64 {
    let t = &game.types[ty];
    let d = &game.defender;
    let m = game.method_for_vertex[f].index();
    let cf = c.0[f];
    cf * (scale * d.v_bug[f] * d.rho[f][m] * d.eta_ver[f] - d.lambda_fp * d.fp_cost[f][m])
        - (1.0 - cf) * scale * t.impact[f]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRound {
    pub arm: usize,
    pub attacker_type: usize,
    /// Utility under the sampled hypothesis.
    pub realized_utility: f64,
    /// Normalized expected utility of the chosen point.
    pub chosen_value: f64,
    /// Normalized expected utility of the final hindsight-best point.
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub seed: u64,
    pub arms: usize,
    pub bounds: (f64, f64),
    pub best_arm: usize,
    pub per_round: Vec<RegretRound>,
    /// `regret[t-1]`: best fixed point over rounds `1..=t` minus the learner,
    /// in normalized units.
    pub cumulative_regret: Vec<f64>,
}

impl RegretTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,regret\n");
        for (t, r) in self.cumulative_regret.iter().enumerate() {
            out.push_str(&format!("{},{}\n", t + 1, r));
        }
        out
    }
}

/// Normalized expected utility of every grid point against every type's
/// best response.
fn value_table(game: &GameInstance, grid: &StrategyGrid, bounds: (f64, f64)) -> Result<Vec<Vec<f64>>, GameError> {
    let span = (bounds.1 - bounds.0).max(f64::MIN_POSITIVE);
    grid.points
        .iter()
        .map(|c| {
            (0..game.types.len())
                .map(|ty| {
                    let p = best_response(game, c, ty)?;
                    Ok((defender_utility(game, c, p, ty)? - bounds.0) / span)
                })
                .collect()
        })
        .collect()
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Plays `rounds` rounds of the protocol described in the module docs.
pub fn run_online_experiment(
    game: &GameInstance,
    rounds: usize,
    delta: f64,
    seed: u64,
) -> Result<RegretTrace, LearnerError> {
    let grid = build_grid(game, delta)?;
    run_on_grid(game, &grid, rounds, seed)
}

pub fn run_on_grid(
    game: &GameInstance,
    grid: &StrategyGrid,
    rounds: usize,
    seed: u64,
) -> Result<RegretTrace, LearnerError> {
    if grid.is_empty() {
        return Err(LearnerError::Invalid("empty strategy grid".into()));
    }
    let game_err = |e: GameError| LearnerError::Invalid(e.to_string());
    let bounds = reward_bounds(game, grid);
    let span = (bounds.1 - bounds.0).max(f64::MIN_POSITIVE);
    let table = value_table(game, grid, bounds).map_err(game_err)?;
    let q = presence_vector(&game.graph);
    let beliefs = BeliefState::from_priors(&game.graph);
    let priors: Vec<f64> = game.types.iter().map(|t| t.prior).collect();

    let mut type_rng = rng::stream(seed, "learner_type", &[]);
    let mut arm_rng = rng::stream(seed, "learner_arm", &[]);
    let mut hyp_rng = rng::stream(seed, "learner_hypothesis", &[]);

    let k = grid.len();
    let mut log_w = vec![0.0; k];
    let mut cum = vec![0.0; k];
    let mut learner = 0.0;
    let mut per_round = Vec::with_capacity(rounds);
    let mut regret = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let gamma = gamma_schedule(k, t);
        let probs = exp3_probabilities(&log_w, gamma);
        let arm = sample_index(&probs, &mut arm_rng);
        let ty = sample_index(&priors, &mut type_rng);
        let c = &grid.points[arm];
        let path = best_response(game, c, ty).map_err(game_err)?;
        let hyp = thompson_realize(&beliefs, &mut hyp_rng);
        let scale: Vec<f64> = (0..q.len())
            .map(|f| {
                if q[f] > 0.0 && q[f] < 1.0 {
                    let hit = (0..game.graph.num_classes()).any(|cl| hyp.contains(f, cl));
                    if hit { 1.0 / q[f] } else { 0.0 }
                } else {
                    1.0
                }
            })
            .collect();
        let realized = scaled_utility(game, c, path, ty, &scale);
        let reward = ((realized - bounds.0) / span).clamp(0.0, 1.0);
        log_w = exp3_step(&log_w, arm, reward, gamma)?;

        for (i, row) in table.iter().enumerate() {
            cum[i] += row[ty];
        }
        learner += table[arm][ty];
        let best = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        regret.push(best - learner);
        per_round.push(RegretRound {
            arm,
            attacker_type: ty,
            realized_utility: realized,
            chosen_value: table[arm][ty],
            best_value: 0.0,
        });
    }
    let best_arm = argmax_first(&cum);
    for r in &mut per_round {
        r.best_value = table[best_arm][r.attacker_type];
    }
    Ok(RegretTrace {
        seed,
        arms: k,
        bounds,
        best_arm,
        per_round,
        cumulative_regret: regret,
    })
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Second, table-free pass: evaluates every grid point directly on the
/// recorded type sequence and returns the best point and its total
/// normalized utility.
pub fn hindsight_best_exhaustive(
    game: &GameInstance,
    grid: &StrategyGrid,
    trace: &RegretTrace,
) -> Result<(usize, f64), GameError> {
    let span = (trace.bounds.1 - trace.bounds.0).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; game.types.len()];
    for r in &trace.per_round {
        counts[r.attacker_type] += 1;
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in grid.points.iter().enumerate() {
        let mut total = 0.0;
        for (ty, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let p = best_response(game, c, ty)?;
            total += n as f64 * (defender_utility(game, c, p, ty)? - trace.bounds.0) / span;
        }
        if total > best.1 {
            best = (i, total);
        }
    }
    Ok(best)
}

/// Least-squares slope of `ln regret(t)` on `ln t` over `t in [T/10, T]`,
/// skipping nonpositive regret values.
pub fn fit_regret_exponent(regret: &[f64]) -> Result<f64, LearnerError> {
    let t_max = regret.len();
    if t_max < 100 {
        return Err(LearnerError::Invalid(format!("need at least 100 rounds, got {t_max}")));
    }
    let pts: Vec<(f64, f64)> = (t_max / 10..=t_max)
        .filter(|&t| t >= 1 && regret[t - 1] > 0.0)
        .map(|t| ((t as f64).ln(), regret[t - 1].ln()))
        .collect();
    if pts.len() < 10 {
        return Err(LearnerError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub seeds: usize,
    pub rounds: usize,
    pub arms: usize,
    /// Seed-averaged cumulative regret per round.
    pub mean_regret: Vec<f64>,
    /// Slope fitted to the seed-averaged curve.
    pub slope: f64,
    /// Mean and 95% interval of the per-seed slopes (seeds whose fit fails
    /// are skipped).
    pub slope_mean: f64,
    pub slope_ci95: (f64, f64),
    /// `Regret(t)/t` at `t = 100` (or `T` if shorter) and at `T`.
    pub regret_rate_early: f64,
    pub regret_rate_final: f64,
}

pub fn summarize(traces: &[RegretTrace]) -> Result<RegretSummary, LearnerError> {
    let first = traces.first().ok_or_else(|| LearnerError::Invalid("no traces".into()))?;
    let rounds = first.cumulative_regret.len();
    if traces.iter().any(|t| t.cumulative_regret.len() != rounds) {
        return Err(LearnerError::Invalid("traces differ in length".into()));
    }
    let n = traces.len() as f64;
    let mean: Vec<f64> = (0..rounds)
        .map(|i| traces.iter().map(|t| t.cumulative_regret[i]).sum::<f64>() / n)
        .collect();
    let slope = fit_regret_exponent(&mean)?;
    let slopes: Vec<f64> = traces
        .iter()
        .filter_map(|t| fit_regret_exponent(&t.cumulative_regret).ok())
        .collect();
    let (slope_mean, slope_ci95) = mean_ci(&slopes);
    let early = rounds.min(100);
    Ok(RegretSummary {
        seeds: traces.len(),
        rounds,
        arms: first.arms,
        regret_rate_early: mean[early - 1] / early as f64,
        regret_rate_final: mean[rounds - 1] / rounds as f64,
        mean_regret: mean,
        slope,
        slope_mean,
        slope_ci95,
    })
}

/// Mean and two-sided 95% Student-t interval.
pub fn mean_ci(xs: &[f64]) -> (f64, (f64, f64)) {
    if xs.is_empty() {
        return (f64::NAN, (f64::NAN, f64::NAN));
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, (m, m));
    }
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let q = StudentsT::new(0.0, 1.0, n - 1.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(1.96);
    let h = q * sd / n.sqrt();
    (m, (m - h, m + h))
}
