//! Strong Stackelberg equilibrium of the coverage game.
//!
//! The exact solver enumerates joint path profiles (one path per attacker
//! type). With the profile fixed the bilinear best-response terms collapse
//! and the problem is a linear program in the coverage vector: maximize the
//! prior-weighted defender utility on the assigned paths, subject to the
//! budget, `0 <= c <= 1` and, for every type, the assigned path being at least
//! as attractive as every alternative. The best feasible profile is the
//! equilibrium. A brute-force grid search provides an independent check.

pub mod simplex;

use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, SolverError};
use crate::game_model::{
    attacker_utility, best_response, defender_utility, expected_defender_utility, CoverageVector,
    GameInstance,
};
use simplex::{Constraint, LinearProgram, LpOutcome, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    ProfileEnumeration,
    GridOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BigM {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub lp_tolerance: f64,
    pub grid_delta: f64,
    pub big_m: BigM,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::ProfileEnumeration,
            lp_tolerance: 1e-7,
            grid_delta: 0.05,
            big_m: BigM::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.lp_tolerance > 0.0) {
            return Err(SolverError::InvalidConfig("lp_tolerance must be positive".into()));
        }
        if !(self.grid_delta > 0.0 && self.grid_delta <= 0.5) {
            return Err(SolverError::InvalidConfig("grid_delta must lie in (0, 0.5]".into()));
        }
        if let BigM::Value(m) = self.big_m {
            if !(m > 0.0) {
                return Err(SolverError::InvalidConfig("big_m must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub coverage: CoverageVector,
    /// Attacked path index per attacker type.
    pub attacked_path: BTreeMap<usize, usize>,
    pub objective: f64,
    pub status: SolveStatus,
}

/// Incentive slack accepted when re-checking a solution.
pub const INCENTIVE_TOL: f64 = 1e-6;
/// Upper bound on profiles the exact solver will enumerate.
pub const MAX_PROFILES: usize = 200_000;
pub const GRID_ORACLE_LIMIT: f64 = 1e7;

/// Dispatches on `cfg.method`.
pub fn solve(game: &GameInstance, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    match cfg.method {
        SolverMethod::ProfileEnumeration => solve_dobss_vd(game, cfg),
        SolverMethod::GridOracle => solve_grid_oracle(game, cfg),
    }
}

/// The LP shared by every profile: variables are the payload vertices.
struct ProfileLp {
    vars: Vec<usize>,
    slot: BTreeMap<usize, usize>,
    /// Per type, per path: attacker utility as (constant, coefficient per var).
    att: Vec<Vec<(f64, Vec<f64>)>>,
    /// Per type, per path: prior-weighted defender utility.
    def: Vec<Vec<(f64, Vec<f64>)>>,
}

impl ProfileLp {
    fn new(game: &GameInstance) -> Self {
        let vars = game.payload_vertices();
        let slot: BTreeMap<usize, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = vars.len();
        let mut att = Vec::new();
        let mut def = Vec::new();
        for (ty, t) in game.types.iter().enumerate() {
            let k = game.coefficients(ty);
            let mut a_rows = Vec::new();
            let mut d_rows = Vec::new();
            for p in &game.paths {
                let mut a = (0.0, vec![0.0; n]);
                let mut d = (0.0, vec![0.0; n]);
                for f in game.payload(p) {
                    let i = slot[&f];
                    a.0 += k.att_unc[f];
                    a.1[i] += k.att_cov[f] - k.att_unc[f];
                    d.0 += t.prior * k.def_unc[f];
                    d.1[i] += t.prior * (k.def_cov[f] - k.def_unc[f]);
                }
                a_rows.push(a);
                d_rows.push(d);
            }
            att.push(a_rows);
            def.push(d_rows);
        }
        Self { vars, slot, att, def }
    }

    fn base_rows(&self, game: &GameInstance, profile: &[usize]) -> Vec<Constraint> {
        let n = self.vars.len();
        let mut rows = Vec::with_capacity(1 + n + profile.len() * game.paths.len());
        let w: Vec<f64> = self.vars.iter().map(|&f| game.graph.vertices[f].cost_w).collect();
        rows.push(Constraint::new(w, Relation::Le, game.budget));
        for i in 0..n {
            let mut r = vec![0.0; n];
            r[i] = 1.0;
            rows.push(Constraint::new(r, Relation::Le, 1.0));
        }
        for (ty, &q) in profile.iter().enumerate() {
            let (cq, aq) = &self.att[ty][q];
            for (alt, (ca, aa)) in self.att[ty].iter().enumerate() {
                if alt == q {
                    continue;
                }
                // U_a(q) - U_a(alt) >= 0
                let coeffs: Vec<f64> = aq.iter().zip(aa).map(|(x, y)| x - y).collect();
                rows.push(Constraint::new(coeffs, Relation::Ge, ca - cq));
            }
        }
        rows
    }

    fn objective(&self, profile: &[usize]) -> (f64, Vec<f64>) {
        let n = self.vars.len();
        let mut constant = 0.0;
        let mut coeffs = vec![0.0; n];
        for (ty, &q) in profile.iter().enumerate() {
            let (c, d) = &self.def[ty][q];
            constant += c;
            for (x, y) in coeffs.iter_mut().zip(d) {
                *x += y;
            }
        }
        (constant, coeffs)
    }

    fn coverage(&self, game: &GameInstance, x: &[f64]) -> CoverageVector {
        let mut c = CoverageVector::zeros(game.num_vertices());
        for (i, &f) in self.vars.iter().enumerate() {
            c.0[f] = x[i].clamp(0.0, 1.0);
        }
        c
    }
}

fn decode_profile(mut index: usize, n_types: usize, n_paths: usize) -> Vec<usize> {
    let mut q = vec![0; n_types];
    for slot in q.iter_mut().rev() {
        *slot = index % n_paths;
        index /= n_paths;
    }
    q
}

/// Exact equilibrium by profile enumeration.
///
/// Profiles are scanned in lexicographic order (type 0 most significant) and
/// a later profile replaces the incumbent only on a strict improvement, so
/// the result does not depend on how the per-profile LPs are scheduled. A
/// second LP on the winning profile keeps the objective at its optimum and
/// spends any remaining budget where the prior-weighted coverage gain is
/// largest, so off-path slack is not left arbitrary.
pub fn solve_dobss_vd(game: &GameInstance, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    cfg.validate()?;
    if game.paths.is_empty() {
        return Err(GameError::NoPaths.into());
    }
    let n_types = game.types.len();
    let n_paths = game.paths.len();
    let n_profiles = (n_paths as f64).powi(n_types as i32);
    if n_profiles > MAX_PROFILES as f64 {
        return Err(SolverError::InvalidConfig(format!(
            "{n_profiles:.0} path profiles exceed the {MAX_PROFILES} limit; prune paths first"
        )));
    }
    let n_profiles = n_profiles as usize;
    let model = ProfileLp::new(game);
    let eps = cfg.lp_tolerance * 1e-3;

    let results: Vec<Option<(f64, Vec<f64>)>> = (0..n_profiles)
        .into_par_iter()
        .map(|idx| {
            let profile = decode_profile(idx, n_types, n_paths);
            let (constant, coeffs) = model.objective(&profile);
            let lp = LinearProgram {
                num_vars: model.vars.len(),
                objective: coeffs,
                constraints: model.base_rows(game, &profile),
            };
            match simplex::solve(&lp, eps) {
                LpOutcome::Optimal { x, value } => Some((value + constant, x)),
                LpOutcome::Infeasible => None,
                other => {
                    warn!("profile {profile:?}: LP ended with {other:?}");
                    None
                }
            }
        })
        .collect();

    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    for (idx, r) in results.into_iter().enumerate() {
        if let Some((value, x)) = r {
            let better = match &best {
                None => true,
                Some((_, bv, _)) => value > bv + 1e-9 * (1.0 + bv.abs()),
            };
            if better {
                best = Some((idx, value, x));
            }
        }
    }
    let Some((idx, value, x)) = best else {
        return Ok(Solution {
            coverage: CoverageVector::zeros(game.num_vertices()),
            attacked_path: BTreeMap::new(),
            objective: f64::NEG_INFINITY,
            status: SolveStatus::Infeasible,
        });
    };
    let profile = decode_profile(idx, n_types, n_paths);
    let x = refine(game, &model, &profile, value, x, eps, cfg.lp_tolerance);
    let coverage = model.coverage(game, &x);
    let attacked_path: BTreeMap<usize, usize> = profile.iter().copied().enumerate().collect();
    verify_incentives(game, &coverage, &attacked_path)?;
    let mut objective = 0.0;
    for (&ty, &p) in &attacked_path {
        objective += game.types[ty].prior * defender_utility(game, &coverage, p, ty)?;
    }
    for (&ty, &p) in &attacked_path {
        let br = best_response(game, &coverage, ty)?;
        if br != p {
            debug!("type {ty}: assigned path {p} and best response {br} are tied within tolerance");
        }
    }
    Ok(Solution {
        coverage,
        attacked_path,
        objective,
        status: SolveStatus::Optimal,
    })
}

fn refine(
    game: &GameInstance,
    model: &ProfileLp,
    profile: &[usize],
    value: f64,
    x: Vec<f64>,
    eps: f64,
    tol: f64,
) -> Vec<f64> {
    let (constant, coeffs) = model.objective(profile);
    let mut rows = model.base_rows(game, profile);
    rows.push(Constraint::new(
        coeffs.clone(),
        Relation::Ge,
        value - constant - tol * 1e-2 * (1.0 + value.abs()),
    ));
    // prior-weighted marginal value of coverage, as if each vertex were attacked
    let mut gain = vec![0.0; model.vars.len()];
    for (ty, t) in game.types.iter().enumerate() {
        let k = game.coefficients(ty);
        for (&f, &i) in &model.slot {
            gain[i] += t.prior * (k.def_cov[f] - k.def_unc[f]);
        }
    }
    let gain = gain.into_iter().map(|g: f64| g.max(0.0)).collect();
    let lp = LinearProgram {
        num_vars: model.vars.len(),
        objective: gain,
        constraints: rows,
    };
    match simplex::solve(&lp, eps) {
        LpOutcome::Optimal { x: refined, .. } => refined,
        other => {
            debug!("refinement LP ended with {other:?}; keeping the first-pass optimum");
            x
        }
    }
}

/// Checks that every assigned path is a best response within
/// [`INCENTIVE_TOL`].
pub fn verify_incentives(
    game: &GameInstance,
    c: &CoverageVector,
    attacked_path: &BTreeMap<usize, usize>,
) -> Result<(), SolverError> {
    for (&ty, &q) in attacked_path {
        let uq = attacker_utility(game, c, q, ty)?;
        for p in 0..game.paths.len() {
            let gap = attacker_utility(game, c, p, ty)? - uq;
            if gap > INCENTIVE_TOL {
                return Err(SolverError::IncentiveViolation { ty, gap });
            }
        }
    }
    Ok(())
}

fn grid_levels(delta: f64) -> Vec<f64> {
    let steps = (1.0 / delta + 1e-9).floor() as usize;
    (0..=steps).map(|k| (k as f64 * delta).min(1.0)).collect()
}

/// Brute-force search over the `delta`-lattice of budget-feasible coverage on
/// payload vertices. Returns the first grid point (lexicographic, lowest
/// vertex most significant) attaining the maximum.
pub fn solve_grid_oracle(game: &GameInstance, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    cfg.validate()?;
    let vars = game.payload_vertices();
    let levels = grid_levels(cfg.grid_delta);
    let points = (levels.len() as f64).powi(vars.len() as i32);
    if points > GRID_ORACLE_LIMIT {
        return Err(SolverError::GridTooLarge {
            points,
            limit: GRID_ORACLE_LIMIT,
        });
    }
    let mut c = CoverageVector::zeros(game.num_vertices());
    let mut digits = vec![0usize; vars.len()];
    let mut best: Option<(f64, CoverageVector)> = None;
    loop {
        for (d, &f) in digits.iter().zip(&vars) {
            c.0[f] = levels[*d];
        }
        if c.is_budget_feasible(&game.graph, game.budget) {
            let u = expected_defender_utility(game, &c)?;
            if best.as_ref().is_none_or(|(b, _)| u > *b) {
                best = Some((u, c.clone()));
            }
        }
        // odometer, last vertex fastest
        let mut i = digits.len();
        loop {
            if i == 0 {
                let (objective, coverage) = best.expect("the zero vector is always feasible");
                let mut attacked_path = BTreeMap::new();
                for ty in 0..game.types.len() {
                    attacked_path.insert(ty, best_response(game, &coverage, ty)?);
                }
                return Ok(Solution {
                    coverage,
                    attacked_path,
                    objective,
                    status: SolveStatus::Optimal,
                });
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < levels.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// A big-M constant large enough for the linearized best-response
/// constraints: the largest attacker-utility span over types, plus one.
///
/// Per type, path utilities are bounded by summing the larger (smaller) of
/// the covered and uncovered coefficient at every payload vertex.
pub fn compute_big_m(game: &GameInstance) -> f64 {
    let mut span = 0.0f64;
    for ty in 0..game.types.len() {
        let k = game.coefficients(ty);
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for p in &game.paths {
            let (mut ph, mut pl) = (0.0, 0.0);
            for f in game.payload(p) {
                ph += k.att_cov[f].max(k.att_unc[f]);
                pl += k.att_cov[f].min(k.att_unc[f]);
            }
            hi = hi.max(ph);
            lo = lo.min(pl);
        }
        if hi.is_finite() && lo.is_finite() {
            span = span.max(hi - lo);
        }
    }
    span + 1.0
}

/// Splits `budget` evenly over payload vertices, capped at full coverage.
pub fn uniform_coverage(game: &GameInstance) -> CoverageVector {
    let vars = game.payload_vertices();
    let w: f64 = vars.iter().map(|&f| game.graph.vertices[f].cost_w).sum();
    let level = if w > 0.0 { (game.budget / w).min(1.0) } else { 0.0 };
    let mut c = CoverageVector::zeros(game.num_vertices());
    for f in vars {
        c.0[f] = level;
    }
    c
}

/// Largest absolute utility coefficient (defender or attacker, covered or
/// uncovered) in the game.
pub fn max_utility_coefficient(game: &GameInstance) -> f64 {
    let mut m = 0.0f64;
    for ty in 0..game.types.len() {
        let k = game.coefficients(ty);
        for v in [&k.def_cov, &k.def_unc, &k.att_cov, &k.att_unc] {
            m = v.iter().fold(m, |a, b| a.max(b.abs()));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack_graph::VertexKind::*;
    use crate::game_model::fixtures::{build, single_payload, two_path, Spec};
    use crate::game_model::random_game;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// One path through two payload vertices whose defender gains per unit of
    /// coverage are 5 and 3.
    fn two_gain_game(budget: f64) -> GameInstance {
        build(Spec {
            kinds: vec![Entry, Func, Goal],
            edges: vec![(0, 1), (1, 2)],
            // gain = v_bug*rho*eta - lambda*fp + impact = v_bug + impact here
            v_bug: vec![2.0, 1.0, 0.0],
            rho: vec![1.0, 1.0, 0.0],
            eta: vec![1.0, 1.0, 0.0],
            fp: vec![0.0, 0.0, 0.0],
            lambda: 0.0,
            types: vec![(1.0, vec![1.0, 1.0, 0.0], vec![0.0; 3], vec![3.0, 2.0, 0.0])],
            budget,
            costs: vec![],
        })
    }

    #[test]
    fn one_unit_goes_to_the_better_vertex() {
        let g = two_gain_game(1.0);
        let s = solve_dobss_vd(&g, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(s.coverage.0[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.coverage.0[1], 0.0, epsilon = 1e-9);
        // -(3 + 2) + 5
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn saturated_budget_covers_everything() {
        let g = two_gain_game(5.0);
        let s = solve_dobss_vd(&g, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(s.coverage.0[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.coverage.0[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn matches_grid_on_random_six_vertex_instances() {
        for seed in 0..5 {
            let g = random_game(seed, 5, 3, 2);
            let cfg = SolverConfig { grid_delta: 0.1, ..Default::default() };
            let exact = solve_dobss_vd(&g, &cfg).unwrap();
            let grid = solve_grid_oracle(&g, &cfg).unwrap();
            let n = g.payload_vertices().len() as f64;
            let gap = 2.0 * max_utility_coefficient(&g) * cfg.grid_delta * n;
            assert!(exact.objective >= grid.objective - 1e-6, "seed {seed}");
            assert!(exact.objective <= grid.objective + gap, "seed {seed}");
        }
    }

    #[test]
    fn grid_single_vertex_three_points() {
        let g = single_payload();
        // payload vertices are the entry and vertex 1; restrict to one by
        // pricing the entry out of the budget
        let mut g1 = g.clone();
        g1.graph.vertices[0].cost_w = 10.0;
        let cfg = SolverConfig {
            grid_delta: 0.5,
            method: SolverMethod::GridOracle,
            ..Default::default()
        };
        let s = solve(&g1, &cfg).unwrap();
        let best = [0.0, 0.5, 1.0]
            .iter()
            .map(|&x| expected_defender_utility(&g1, &CoverageVector(vec![0.0, x, 0.0])).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(s.objective, best, epsilon = 1e-12);
        assert_abs_diff_eq!(s.coverage.0[1], 1.0);
    }

    #[test]
    fn grid_symmetric_pair() {
        let g = build(Spec {
            kinds: vec![Entry, Func, Func, Goal],
            edges: vec![(0, 1), (1, 2), (2, 3)],
            v_bug: vec![0.0, 3.0, 3.0, 0.0],
            rho: vec![0.0, 0.8, 0.8, 0.0],
            eta: vec![0.0, 0.9, 0.9, 0.0],
            fp: vec![0.0; 4],
            lambda: 0.0,
            types: vec![(1.0, vec![0.0, 4.0, 4.0, 0.0], vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 5.0, 5.0, 0.0])],
            budget: 1.0,
            costs: vec![10.0, 1.0, 1.0, 1.0],
        });
        let cfg = SolverConfig {
            grid_delta: 0.25,
            ..Default::default()
        };
        let s = solve_grid_oracle(&g, &cfg).unwrap();
        // every maximizer on the budget line; one near the diagonal exists
        let target = s.objective;
        let levels = grid_levels(0.25);
        let near_diag = levels.iter().any(|&a| {
            levels.iter().any(|&b| {
                let c = CoverageVector(vec![0.0, a, b, 0.0]);
                c.is_budget_feasible(&g.graph, 1.0)
                    && (a - b).abs() <= 0.25
                    && (expected_defender_utility(&g, &c).unwrap() - target).abs() < 1e-12
            })
        });
        assert!(near_diag);
    }

    #[test]
    fn grid_rejects_large_instances() {
        let g = random_game(1, 7, 2, 1);
        let cfg = SolverConfig {
            grid_delta: 0.01,
            ..Default::default()
        };
        assert!(matches!(solve_grid_oracle(&g, &cfg), Err(SolverError::GridTooLarge { .. })));
    }

    #[test]
    fn big_m_examples() {
        let mut g = single_payload();
        // zero rewards and deterrence everywhere
        g.types[0].reward.iter_mut().for_each(|r| *r = 0.0);
        g.types[0].deterrence.iter_mut().for_each(|r| *r = 0.0);
        assert_abs_diff_eq!(compute_big_m(&g), 1.0);
        let mut g = single_payload();
        g.defender.rho[1][crate::game_model::Method::CodeQl.index()] = 1.0;
        assert_abs_diff_eq!(compute_big_m(&g), 16.0);
    }

    #[test]
    fn big_m_dominates_observed_differences() {
        for seed in 0..20 {
            let g = random_game(seed, 4, 3, 2);
            let m = compute_big_m(&g);
            let levels = grid_levels(0.5);
            let mut c = CoverageVector::zeros(g.num_vertices());
            let vars = g.payload_vertices();
            let points = levels.len().pow(vars.len() as u32);
            for idx in 0..points {
                let mut k = idx;
                for &f in &vars {
                    c.0[f] = levels[k % levels.len()];
                    k /= levels.len();
                }
                for ty in 0..g.types.len() {
                    let us: Vec<f64> =
                        (0..g.paths.len()).map(|p| attacker_utility(&g, &c, p, ty).unwrap()).collect();
                    let span = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        - us.iter().cloned().fold(f64::INFINITY, f64::min);
                    assert!(span <= m);
                }
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let g = single_payload();
        for cfg in [
            SolverConfig { lp_tolerance: 0.0, ..Default::default() },
            SolverConfig { grid_delta: 0.7, ..Default::default() },
            SolverConfig { big_m: BigM::Value(-1.0), ..Default::default() },
        ] {
            assert!(matches!(solve(&g, &cfg), Err(SolverError::InvalidConfig(_))));
        }
    }

    #[test]
    fn profile_order_is_stable_under_parallelism() {
        let g = random_game(9, 5, 4, 2);
        let a = solve_dobss_vd(&g, &SolverConfig::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| solve_dobss_vd(&g, &SolverConfig::default()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn objective_nondecreasing_in_budget() {
        for seed in 0..10 {
            let mut g = random_game(seed, 5, 3, 2);
            let mut last = f64::NEG_INFINITY;
            for k in 0..=8 {
                g.budget = k as f64 * 0.5;
                let s = solve_dobss_vd(&g, &SolverConfig::default()).unwrap();
                assert!(s.objective >= last - 1e-7, "seed {seed} budget {}", g.budget);
                last = s.objective;
            }
        }
    }

    #[test]
    fn two_type_solution_is_incentive_compatible() {
        let g = two_path(0.4);
        let s = solve_dobss_vd(&g, &SolverConfig::default()).unwrap();
        verify_incentives(&g, &s.coverage, &s.attacked_path).unwrap();
        assert!(s.coverage.is_budget_feasible(&g.graph, g.budget));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn dominates_grid_and_uniform(seed in 0u64..10_000, n_paths in 1usize..4, n_types in 1usize..3) {
            let g = random_game(seed, 4, n_paths, n_types);
            let cfg = SolverConfig { grid_delta: 0.1, ..Default::default() };
            let s = solve_dobss_vd(&g, &cfg).unwrap();
            prop_assert!(s.coverage.is_budget_feasible(&g.graph, g.budget));
            verify_incentives(&g, &s.coverage, &s.attacked_path).unwrap();
            let grid = solve_grid_oracle(&g, &cfg).unwrap();
            prop_assert!(s.objective >= grid.objective - 1e-6);
            let uni = expected_defender_utility(&g, &uniform_coverage(&g)).unwrap();
            prop_assert!(s.objective >= uni - 1e-6);
        }

        #[test]
        fn budget_tight_or_saturated(seed in 0u64..10_000) {
            // single type and single path: no incentive rows can bind
            let g = random_game(seed, 5, 1, 1);
            let s = solve_dobss_vd(&g, &SolverConfig::default()).unwrap();
            let used = s.coverage.cost(&g.graph);
            let k = g.coefficients(0);
            let unsaturated_gain = g.payload(&g.paths[0]).any(|f| {
                k.def_cov[f] - k.def_unc[f] > 1e-9 && s.coverage.0[f] < 1.0 - 1e-7
            });
            prop_assert!((used - g.budget).abs() <= 1e-7 || !unsaturated_gain);
        }
    }
}
