//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use stackvd::belief::{bayes_update, observation_likelihood, ObsKind, Observation, ObservationModelFile, StaticRate};
use stackvd::game_model::{expected_defender_utility, random_game, Method};
use stackvd::harness::{
    ablation_run, ablation_variants, build_scenario, run_cell, run_experiment, BaselineKind, ExperimentConfig,
};
use stackvd::learner::{build_grid, run_on_grid, summarize};
use stackvd::orchestrator::{cascaded_verify, RunConfig, VerifierConfig};
use stackvd::rng;
use stackvd::solver::{
    max_utility_coefficient, solve_dobss_vd, solve_grid_oracle, uniform_coverage, verify_incentives, SolverConfig,
};

// Tolerances and sizes, pinned.
const C1_INSTANCES: u64 = 100;
const C1_GRID_DELTA: f64 = 0.05;
const C1_LOWER_TOL: f64 = 1e-6;
const C1_INCENTIVE_TOL: f64 = 1e-6;
const C1_RUNTIME: Duration = Duration::from_secs(60);
const C2_INSTANCES: u64 = 200;
const C2_STRICT_SHARE: f64 = 0.90;
const C2_STRICT_EPS: f64 = 1e-9;
const C3_POSTERIOR_TOL: f64 = 1e-9;
const C3_COMMUTE_TOL: f64 = 1e-12;
const C4_TRIALS: u64 = 100_000;
const C4_TOL: f64 = 0.005;
const C5_ROUNDS: usize = 10_000;
const C5_SEEDS: u64 = 20;
const C5_DELTA: f64 = 0.25;
const C5_RATE_RATIO: f64 = 0.5;
const C5_MAX_SLOPE: f64 = 0.65;
const C5_RUNTIME: Duration = Duration::from_secs(600);
const C6_MIN_RATIO: f64 = 2.0;
const C6_RUNTIME: Duration = Duration::from_secs(900);

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((n, pass, detail));
    }
}

fn solver_vs_oracle(r: &mut Report) {
    let start = Instant::now();
    let cfg = SolverConfig { grid_delta: C1_GRID_DELTA, ..Default::default() };
    let mut failures = Vec::new();
    let mut worst_gap_use = 0.0f64;
    for i in 0..C1_INSTANCES {
        let n_payload = 2 + (i % 3) as usize;
        let n_paths = 1 + (i % 4) as usize;
        let n_types = 1 + (i % 2) as usize;
        let g = random_game(1000 + i, n_payload, n_paths, n_types);
        let exact = solve_dobss_vd(&g, &cfg).expect("exact solve");
        let grid = solve_grid_oracle(&g, &cfg).expect("oracle solve");
        let n = g.payload_vertices().len() as f64;
        let gap = 2.0 * max_utility_coefficient(&g) * C1_GRID_DELTA * n;
        let lower = exact.objective >= grid.objective - C1_LOWER_TOL;
        let upper = exact.objective <= grid.objective + gap;
        let incentives = verify_incentives(&g, &exact.coverage, &exact.attacked_path).is_ok()
            && exact.attacked_path.iter().all(|(&ty, &p)| {
                let u = stackvd::game_model::attacker_utility(&g, &exact.coverage, p, ty).unwrap();
                (0..g.paths.len()).all(|q| {
                    stackvd::game_model::attacker_utility(&g, &exact.coverage, q, ty).unwrap() <= u + C1_INCENTIVE_TOL
                })
            });
        if gap > 0.0 {
            worst_gap_use = worst_gap_use.max((exact.objective - grid.objective) / gap);
        }
        if !(lower && upper && incentives) {
            failures.push(i);
        }
    }
    let elapsed = start.elapsed();
    r.record(
        1,
        failures.is_empty() && elapsed < C1_RUNTIME,
        format!(
            "{C1_INSTANCES} instances, failures {failures:?}, max share of grid gap used {worst_gap_use:.3}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

fn sse_dominance(r: &mut Report) {
    let cfg = SolverConfig::default();
    let mut below = 0;
    let mut strict = 0;
    for i in 0..C2_INSTANCES {
        let g = random_game(5000 + i, 2 + (i % 4) as usize, 1 + (i % 4) as usize, 1 + (i % 2) as usize);
        let s = solve_dobss_vd(&g, &cfg).expect("solve");
        let u = expected_defender_utility(&g, &uniform_coverage(&g)).expect("uniform utility");
        if s.objective < u - C2_STRICT_EPS {
            below += 1;
        }
        if s.objective > u + C2_STRICT_EPS {
            strict += 1;
        }
    }
    let share = strict as f64 / C2_INSTANCES as f64;
    r.record(
        2,
        below == 0 && share >= C2_STRICT_SHARE,
        format!("{below} instances below uniform, strictly better on {:.1}%", 100.0 * share),
    );
}

fn bayes_engine(r: &mut Report) {
    let g = stackvd::attack_graph::generate_synthetic_graph(&Default::default()).expect("graph");
    let mut file = ObservationModelFile::default();
    let label = g.classes[0].label.clone();
    file.codeql.insert(label, StaticRate { rho: 0.9, alpha: 0.1 });
    file.timeout_rate = 0.0;
    file.rho_fuzz = 0.5;
    let model = file.resolve(&g).expect("model");
    let alert = Observation { vertex: 0, class: 0, method: Method::CodeQl, tau: model.tau0, kind: ObsKind::Alert };
    let post = bayes_update(0.3, &alert, &model);
    let posterior_ok = (post - 0.27 / 0.34).abs() <= C3_POSTERIOR_TOL;

    // batches of mixed outcomes on one cell, composed in shuffled orders
    let mut worst = 0.0f64;
    let mut rng = rng::stream(3, "acceptance_batches", &[]);
    let kinds = [ObsKind::Alert, ObsKind::Clean, ObsKind::Alert, ObsKind::Clean, ObsKind::Clean, ObsKind::Alert];
    let mut batch: Vec<Observation> = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| Observation {
            vertex: 0,
            class: 0,
            method: if i % 2 == 0 { Method::CodeQl } else { Method::Kasan },
            tau: model.tau0,
            kind,
        })
        .collect();
    let fold = |obs: &[Observation]| obs.iter().fold(0.3, |b, o| bayes_update(b, o, &model));
    let reference = fold(&batch);
    for _ in 0..200 {
        batch.shuffle(&mut rng);
        worst = worst.max((fold(&batch) - reference).abs());
    }
    let commute_ok = worst <= C3_COMMUTE_TOL;

    let crash = observation_likelihood(&model, ObsKind::Crash, true, Method::Fuzz, 0, 2.0 * model.tau0).expect("fuzz");
    let fuzz_ok = crash == 0.75;
    r.record(
        3,
        posterior_ok && commute_ok && fuzz_ok,
        format!("posterior {post:.10} (want 0.7941176471), permutation spread {worst:.1e}, crash probability {crash}"),
    );
}

fn verifier_cascade(r: &mut Report) {
    let cfg = VerifierConfig { stage_fpr: [0.5, 0.4, 0.3], ..Default::default() };
    let truth = stackvd::attack_graph::GroundTruth::default();
    let mut rng = rng::stream(4, "acceptance_verifier", &[]);
    let passed = (0..C4_TRIALS).filter(|_| cascaded_verify(0, 0, &truth, &cfg, &mut rng)).count();
    let rate = passed as f64 / C4_TRIALS as f64;
    let target = cfg.escape_probability();
    r.record(
        4,
        (rate - target).abs() <= C4_TOL,
        format!("escape rate {rate:.5} over {C4_TRIALS} false candidates, target {target}"),
    );
}

fn regret(r: &mut Report) {
    let start = Instant::now();
    let mut game = random_game(42, 3, 3, 2);
    game.budget = 1.0;
    let grid = build_grid(&game, C5_DELTA).expect("grid");
    let traces: Vec<_> = (0..C5_SEEDS)
        .map(|s| run_on_grid(&game, &grid, C5_ROUNDS, s).expect("learner run"))
        .collect();
    let s = summarize(&traces).expect("summary");
    let ratio = s.regret_rate_final / s.regret_rate_early;
    let elapsed = start.elapsed();
    r.record(
        5,
        ratio < C5_RATE_RATIO && s.slope <= C5_MAX_SLOPE && elapsed < C5_RUNTIME,
        format!(
            "{} arms, regret/T {:.4} at T=100 -> {:.4} at T={} (ratio {ratio:.3}), slope {:.3}, {:.1}s",
            s.arms,
            s.regret_rate_early,
            s.regret_rate_final,
            C5_ROUNDS,
            s.slope,
            elapsed.as_secs_f64()
        ),
    );
}

fn comparative_ordering(r: &mut Report) {
    use BaselineKind::*;
    let start = Instant::now();
    let report = run_experiment(&ExperimentConfig::default()).expect("experiment");
    let mean = |m| report.row(m).expect("row").svub.mean;
    let chain = mean(B5MultiAgentNoGt) > mean(B3FuzzOnly).max(mean(B4StaticOnly))
        && mean(B3FuzzOnly).min(mean(B4StaticOnly)) > mean(B2Churn)
        && mean(B2Churn) > mean(B1Uniform)
        && mean(Full) > mean(B5MultiAgentNoGt);
    let mut losing = Vec::new();
    for m in [B1Uniform, B2Churn, B3FuzzOnly, B4StaticOnly, B5MultiAgentNoGt] {
        let t = report.comparison(m).expect("comparison");
        if !t.significant {
            losing.push(format!("{} (p={:.3})", m.label(), t.p_value));
        }
    }
    let ratio = mean(Full) / mean(B3FuzzOnly);
    let elapsed = start.elapsed();
    let means: Vec<String> = report.rows.iter().map(|row| format!("{}={:.3}", row.method.label(), row.svub.mean)).collect();
    r.record(
        6,
        chain && losing.is_empty() && ratio >= C6_MIN_RATIO && elapsed < C6_RUNTIME,
        format!(
            "means [{}], ordering chain {}, not significant vs {:?}, full/b3 {ratio:.2}, {:.1}s",
            means.join(" "),
            if chain { "holds" } else { "broken" },
            losing,
            elapsed.as_secs_f64()
        ),
    );
}

fn ablation_direction(r: &mut Report) {
    let report = ablation_run(&ExperimentConfig::default()).expect("ablation");
    let mut details = Vec::new();
    let mut pass = true;
    for v in ["no_bayes_update", "no_stackelberg", "no_attack_graph"] {
        let row = report.row(v).expect("variant");
        let ok = row.delta_svub_pct < 0.0 && row.test.significant;
        pass &= ok;
        details.push(format!("{v} {:+.1}% (p={:.4}) {}", row.delta_svub_pct, row.test.p_value, if ok { "ok" } else { "no" }));
    }
    r.record(7, pass, details.join(", "));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("file"))
        })
        .collect();
    files.sort();
    files
}

fn determinism(r: &mut Report) {
    let bin = env!("CARGO_BIN_EXE_stackvd");
    let tmp = tempfile::tempdir().expect("tempdir");
    let gen_dir = tmp.path().join("gen");
    let status = Command::new(bin)
        .args(["generate", "--seed", "7", "--out"])
        .arg(&gen_dir)
        .status()
        .expect("generate");
    assert!(status.success());
    let graph = gen_dir.join("graph.json");
    let graph = graph.to_str().expect("utf-8 path");
    let invocations: Vec<Vec<&str>> = vec![
        vec!["generate", "--seed", "11"],
        vec!["generate", "--seed", "11", "--format", "csv"],
        vec!["solve", "--graph", graph],
        vec!["solve", "--graph", graph, "--format", "csv"],
        vec!["simulate", "--seed", "5"],
        vec!["simulate", "--graph", graph, "--seed", "5", "--rounds", "6"],
        vec!["regret", "--seed", "9", "--rounds", "2000", "--seeds", "3"],
        vec!["compare", "--seed", "0", "--seeds", "3"],
        vec!["ablate", "--seed", "0", "--seeds", "2"],
    ];
    let mut differing = Vec::new();
    for (i, args) in invocations.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("run_{i}_{rep}"));
            let status = Command::new(bin).args(args).arg("--out").arg(&out).status().expect("run cli");
            assert!(status.success(), "{args:?} failed");
            outputs.push(snapshot(&out));
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(args.join(" "));
        }
    }
    r.record(
        8,
        differing.is_empty(),
        format!("{} invocations run twice, differing: {differing:?}", invocations.len()),
    );
}

fn budget_conservation(r: &mut Report) {
    let cfg = ExperimentConfig::default();
    let mut runs = 0;
    let mut broken = Vec::new();
    let mut check = |label: String, ledger: &stackvd::orchestrator::BudgetLedger| {
        runs += 1;
        let main_ok = ledger.main_spent + ledger.sibling_spent + ledger.main_remaining + ledger.reserve_remaining
            == ledger.total;
        let reserve_ok = ledger.sibling_spent + ledger.reserve_remaining == ledger.reserve_total;
        if !(main_ok && reserve_ok) {
            broken.push(label);
        }
    };
    for &seed in &cfg.seeds {
        let scenario = build_scenario(&cfg, seed).expect("scenario");
        for &kind in &BaselineKind::ALL {
            let (_, result) = run_cell(&scenario, &cfg.game, &cfg.run, kind).expect("run");
            check(format!("seed {seed} {kind}"), &result.budget);
        }
        for (name, switches) in ablation_variants() {
            let run = RunConfig { switches, ..cfg.run.clone() };
            let (_, result) = run_cell(&scenario, &cfg.game, &run, BaselineKind::Full).expect("run");
            check(format!("seed {seed} {name}"), &result.budget);
        }
        for budget in [0.5, 7.3, 101.0] {
            let run = RunConfig { budget, rounds: 7, ..cfg.run.clone() };
            let (_, result) = run_cell(&scenario, &cfg.game, &run, BaselineKind::Full).expect("run");
            check(format!("seed {seed} budget {budget}"), &result.budget);
        }
    }
    r.record(9, broken.is_empty(), format!("{runs} simulations, unbalanced: {broken:?}"));
}

#[test]
fn acceptance_criteria() {
    let mut r = Report { lines: Vec::new() };
    solver_vs_oracle(&mut r);
    sse_dominance(&mut r);
    bayes_engine(&mut r);
    verifier_cascade(&mut r);
    regret(&mut r);
    comparative_ordering(&mut r);
    ablation_direction(&mut r);
    determinism(&mut r);
    budget_conservation(&mut r);
    let failed: Vec<usize> = r.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
