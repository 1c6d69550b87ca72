//! Seeded comparison experiments: baselines, metrics, ablations and the
//! report files.

pub mod baselines;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::attack_graph::{
    generate_synthetic_graph, plant_ground_truth, plant_sibling_clones, presence, similarity_matrix, AttackGraph,
    GeneratorConfig, GroundTruth,
};
use crate::belief::{BeliefState, ObservationModel, ObservationModelFile};
use crate::error::{Error, Result};
use crate::game_model::GameParams;
use crate::orchestrator::{apply_mitigation, run_orchestration, RunConfig, RunInputs, RunResult, Switches};

pub use baselines::{allocate_baseline, make_policy, BaselineKind, BaselinePolicy, UcbPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// First round with a validated true finding.
    pub t2f: Option<usize>,
    /// Severity of validated true findings per unit budget.
    pub svub: f64,
    /// Share of validated candidates that are not real defects.
    pub fpr_human: f64,
    /// Validated findings from sibling tasks.
    pub sibling_yield: f64,
    /// Relative drop of the best attacker payoff at zero coverage.
    pub payoff_reduction: f64,
    /// Validated true findings.
    pub findings: usize,
}

/// Best attacker payoff over types and entry-to-goal paths at zero coverage:
/// the largest sum of `cvss * reward_scale * presence` along a path.
pub fn max_attacker_payoff(graph: &AttackGraph, params: &GameParams) -> f64 {
    let succ = graph.successors();
    let n = graph.vertices.len();
    let entries: Vec<usize> = graph
        .vertices
        .iter()
        .filter(|v| v.kind == crate::attack_graph::VertexKind::Entry)
        .map(|v| v.id)
        .collect();
    let mut best = 0.0f64;
    let mut any = false;
    for t in &params.types {
        let w: Vec<f64> = graph
            .vertices
            .iter()
            .map(|v| if v.is_goal() { 0.0 } else { v.cvss_score * t.reward_scale * presence(&v.phi) })
            .collect();
        // memoized longest path to a goal; None when no goal is reachable
        let mut memo: Vec<Option<Option<f64>>> = vec![None; n];
        fn go(v: usize, g: &AttackGraph, succ: &[Vec<usize>], w: &[f64], memo: &mut [Option<Option<f64>>]) -> Option<f64> {
            if let Some(x) = memo[v] {
                return x;
            }
            let r = if g.vertices[v].is_goal() {
                Some(0.0)
            } else {
                succ[v]
                    .iter()
                    .filter_map(|&s| go(s, g, succ, w, memo))
                    .fold(None, |a: Option<f64>, x| Some(a.map_or(x, |a| a.max(x))))
                    .map(|x| x + w[v])
            };
            memo[v] = Some(r);
            r
        }
        for &e in &entries {
            if let Some(x) = go(e, graph, &succ, &w, &mut memo) {
                best = if any { best.max(x) } else { x };
                any = true;
            }
        }
    }
    best
}

/// Metrics of one run, from the run record and the planted truth only.
pub fn compute_metrics(
    result: &RunResult,
    graph: &AttackGraph,
    params: &GameParams,
    truth: &GroundTruth,
    budget: f64,
) -> Metrics {
    let validated: Vec<_> = result.findings.iter().filter(|f| f.validated).collect();
    let true_found: Vec<_> = validated.iter().filter(|f| truth.contains(f.vertex, f.class)).collect();
    let svub = if budget > 0.0 {
        true_found.iter().map(|f| f.severity).sum::<f64>() / budget
    } else {
        0.0
    };
    let fpr_human = if validated.is_empty() {
        0.0
    } else {
        (validated.len() - true_found.len()) as f64 / validated.len() as f64
    };
    let t2f = true_found.iter().map(|f| f.round).min();
    let sibling_yield = validated.iter().filter(|f| f.is_sibling_hit).count() as f64;

    let a0 = max_attacker_payoff(graph, params);
    let mut after = graph.clone();
    let mut scratch = BeliefState::from_priors(graph);
    for &(v, c) in &result.mitigations {
        apply_mitigation(&mut after, &mut scratch, v, c);
    }
    let a1 = max_attacker_payoff(&after, params);
    let payoff_reduction = if a0.abs() > 0.0 { (a0 - a1) / a0.abs() } else { 0.0 };
    Metrics {
        t2f,
        svub,
        fpr_human,
        sibling_yield,
        payoff_reduction,
        findings: true_found.len(),
    }
}

/// Generator modulation standing in for different code bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Balanced,
    EntryHeavy,
    PrivHeavy,
    ConcurrencyHeavy,
}

impl Profile {
    pub fn apply(self, g: &mut GeneratorConfig) {
        match self {
            Profile::Balanced => {}
            Profile::EntryHeavy => {
                g.n_entry *= 2;
                g.n_func = g.n_func.saturating_sub(5);
            }
            Profile::PrivHeavy => g.n_priv *= 3,
            Profile::ConcurrencyHeavy => g.class_phi_scale = vec![0.6, 0.6, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Graph generator settings; the seed field is replaced by each run seed.
    pub generator: GeneratorConfig,
    pub profile: Profile,
    pub game: GameParams,
    pub observation: ObservationModelFile,
    /// Orchestration settings, including budget, rounds and switches.
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<BaselineKind>,
    /// Probability of planting a clone of a defect at each similar vertex.
    pub clone_prob: f64,
    /// Similarity above which clones are planted.
    pub clone_threshold: f64,
    /// Budgets for the findings-versus-budget curves; empty uses the
    /// per-round cumulative curve of the main budget.
    pub budget_sweep: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            profile: Profile::Balanced,
            game: GameParams::default(),
            observation: ObservationModelFile::default(),
            run: RunConfig::default(),
            seeds: (0..20).collect(),
            methods: BaselineKind::ALL.to_vec(),
            clone_prob: 0.3,
            clone_threshold: 0.85,
            budget_sweep: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            context: "experiment config".into(),
            source: e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if !(0.0..=1.0).contains(&self.clone_prob) || !(0.0..=1.0).contains(&self.clone_threshold) {
            return Err(Error::Config("clone_prob and clone_threshold must lie in [0,1]".into()));
        }
        if self.budget_sweep.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::Config("sweep budgets must be nonnegative".into()));
        }
        self.generator.validate()?;
        self.game.validate()?;
        self.run.validate()
    }
}

/// Graph, truth and tool model for one seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub graph: AttackGraph,
    pub truth: GroundTruth,
    pub model: ObservationModel,
    pub sim: Vec<Vec<f64>>,
}

pub fn build_scenario(cfg: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    let mut gen = cfg.generator.clone();
    gen.seed = seed;
    cfg.profile.apply(&mut gen);
    let graph = generate_synthetic_graph(&gen)?;
    let sim = similarity_matrix(&graph);
    let base = plant_ground_truth(&graph, seed);
    let truth = plant_sibling_clones(&graph, &base, &sim, cfg.clone_threshold, cfg.clone_prob, seed);
    let model = cfg.observation.resolve(&graph)?;
    Ok(Scenario { seed, graph, truth, model, sim })
}

/// Run settings of a comparison method on top of the experiment settings.
pub fn method_run_config(base: &RunConfig, kind: BaselineKind) -> RunConfig {
    let mut cfg = base.clone();
    match kind {
        BaselineKind::Full | BaselineKind::B5MultiAgentNoGt => {}
        BaselineKind::B6NoSibling => cfg.beta = 0.0,
        // the single-tool baselines have no sibling stage
        _ => cfg.switches.use_sibling = false,
    }
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub method: BaselineKind,
    pub fingerprint: String,
    pub metrics: Metrics,
    /// Validated true findings after each round.
    pub findings_by_round: Vec<usize>,
    pub budget_balanced: bool,
}

pub fn run_cell(
    scenario: &Scenario,
    params: &GameParams,
    run: &RunConfig,
    kind: BaselineKind,
) -> Result<(RunSummary, RunResult)> {
    let cfg = method_run_config(run, kind);
    let mut policy = make_policy(kind, cfg.switches.use_stackelberg, &cfg.solver);
    let inputs = RunInputs {
        graph: &scenario.graph,
        params,
        truth: &scenario.truth,
        model: &scenario.model,
        sim: &scenario.sim,
    };
    let result = run_orchestration(&inputs, &cfg, scenario.seed, policy.as_mut())
        .map_err(|e| e.with_context(format!("seed {} method {kind}", scenario.seed)))?;
    let metrics = compute_metrics(&result, &scenario.graph, params, &scenario.truth, cfg.budget);
    let findings_by_round = (1..=cfg.rounds)
        .map(|r| {
            result
                .findings
                .iter()
                .filter(|f| f.validated && f.round <= r && scenario.truth.contains(f.vertex, f.class))
                .count()
        })
        .collect();
    Ok((
        RunSummary {
            seed: scenario.seed,
            method: kind,
            fingerprint: result.fingerprint.clone(),
            metrics,
            findings_by_round,
            budget_balanced: result.budget.balances(),
        },
        result,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(xs: &[f64]) -> MeanStd {
        if xs.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: BaselineKind,
    pub runs: usize,
    pub svub: MeanStd,
    /// Over the runs that found anything.
    pub t2f: Option<MeanStd>,
    pub t2f_found: usize,
    pub fpr_human: MeanStd,
    pub sibling_yield: MeanStd,
    pub payoff_reduction: MeanStd,
}

fn method_row(method: BaselineKind, runs: &[&RunSummary]) -> MethodRow {
    let col = |f: &dyn Fn(&Metrics) -> f64| MeanStd::of(&runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let t2f: Vec<f64> = runs.iter().filter_map(|r| r.metrics.t2f.map(|x| x as f64)).collect();
    MethodRow {
        method,
        runs: runs.len(),
        svub: col(&|m| m.svub),
        t2f: (!t2f.is_empty()).then(|| MeanStd::of(&t2f)),
        t2f_found: t2f.len(),
        fpr_human: col(&|m| m.fpr_human),
        sibling_yield: col(&|m| m.sibling_yield),
        payoff_reduction: col(&|m| m.payoff_reduction),
    }
}

/// One-sided paired test that `a` exceeds `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub a: String,
    pub b: String,
    pub mean_diff: f64,
    pub wins: usize,
    pub n: usize,
    pub t: f64,
    pub p_value: f64,
    pub significant: bool,
}

pub const CONFIDENCE: f64 = 0.95;

pub fn paired_greater(a_name: &str, b_name: &str, a: &[f64], b: &[f64]) -> PairedTest {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let ms = MeanStd::of(&d);
    let (t, p) = if n < 2 {
        (f64::NAN, 1.0)
    } else if ms.std == 0.0 {
        if ms.mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (if ms.mean < 0.0 { f64::NEG_INFINITY } else { 0.0 }, 1.0)
        }
    } else {
        let t = ms.mean / (ms.std / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
        (t, 1.0 - dist.cdf(t))
    };
    PairedTest {
        a: a_name.into(),
        b: b_name.into(),
        mean_diff: ms.mean,
        wins: d.iter().filter(|x| **x > 0.0).count(),
        n,
        t,
        p_value: p,
        significant: p < 1.0 - CONFIDENCE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: f64,
    pub method: BaselineKind,
    pub findings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<MethodRow>,
    /// The full system against every other method, when both ran.
    pub comparisons: Vec<PairedTest>,
    pub curves: Vec<CurvePoint>,
    pub runs: Vec<RunSummary>,
}

impl ComparisonReport {
    pub fn row(&self, m: BaselineKind) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == m)
    }

    pub fn svub(&self, m: BaselineKind) -> Vec<f64> {
        self.runs.iter().filter(|r| r.method == m).map(|r| r.metrics.svub).collect()
    }

    pub fn comparison(&self, b: BaselineKind) -> Option<&PairedTest> {
        self.comparisons.iter().find(|c| c.b == b.label())
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from(
            "method,runs,svub_mean,svub_std,t2f_mean,t2f_std,t2f_found,fpr_mean,fpr_std,sibling_yield_mean,sibling_yield_std,payoff_reduction_mean,payoff_reduction_std\n",
        );
        for r in &self.rows {
            let (tm, ts) = r.t2f.map_or((String::new(), String::new()), |t| (t.mean.to_string(), t.std.to_string()));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.runs,
                r.svub.mean,
                r.svub.std,
                tm,
                ts,
                r.t2f_found,
                r.fpr_human.mean,
                r.fpr_human.std,
                r.sibling_yield.mean,
                r.sibling_yield.std,
                r.payoff_reduction.mean,
                r.payoff_reduction.std
            );
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("budget,method,findings\n");
        for p in &self.curves {
            let _ = writeln!(out, "{},{},{}", p.budget, p.method, p.findings);
        }
        out
    }
}

fn build_scenarios(cfg: &ExperimentConfig) -> Result<Vec<Scenario>> {
    cfg.seeds.par_iter().map(|&s| build_scenario(cfg, s)).collect()
}

fn run_grid(
    scenarios: &[Scenario],
    params: &GameParams,
    run: &RunConfig,
    methods: &[BaselineKind],
) -> Result<Vec<RunSummary>> {
    let cells: Vec<(usize, BaselineKind)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, _)| methods.iter().map(move |&m| (i, m)))
        .collect();
    cells
        .par_iter()
        .map(|&(i, m)| run_cell(&scenarios[i], params, run, m).map(|x| x.0))
        .collect()
}

/// Runs every (seed, method) cell and assembles the comparison report.
/// Output is independent of thread scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let scenarios = build_scenarios(cfg)?;
    let runs = run_grid(&scenarios, &cfg.game, &cfg.run, &cfg.methods)?;
    if let Some(bad) = runs.iter().find(|r| !r.budget_balanced) {
        return Err(Error::Invariant(format!("seed {} method {}: budget does not balance", bad.seed, bad.method)));
    }
    let by = |m: BaselineKind| runs.iter().filter(|r| r.method == m).collect::<Vec<_>>();
    let rows = cfg.methods.iter().map(|&m| method_row(m, &by(m))).collect();
    let mut comparisons = Vec::new();
    if cfg.methods.contains(&BaselineKind::Full) {
        let full: Vec<f64> = by(BaselineKind::Full).iter().map(|r| r.metrics.svub).collect();
        for &m in cfg.methods.iter().filter(|&&m| m != BaselineKind::Full) {
            let other: Vec<f64> = by(m).iter().map(|r| r.metrics.svub).collect();
            comparisons.push(paired_greater("full", m.label(), &full, &other));
        }
    }
    let curves = if cfg.budget_sweep.is_empty() {
        let mut pts = Vec::new();
        for &m in &cfg.methods {
            let rs = by(m);
            for k in 0..cfg.run.rounds {
                let mean = rs.iter().map(|r| r.findings_by_round[k] as f64).sum::<f64>() / rs.len() as f64;
                pts.push(CurvePoint {
                    budget: cfg.run.budget * (k + 1) as f64 / cfg.run.rounds as f64,
                    method: m,
                    findings: mean,
                });
            }
        }
        pts
    } else {
        let mut pts = Vec::new();
        for &b in &cfg.budget_sweep {
            let run = RunConfig { budget: b, ..cfg.run.clone() };
            let sweep = run_grid(&scenarios, &cfg.game, &run, &cfg.methods)?;
            for &m in &cfg.methods {
                let rs: Vec<_> = sweep.iter().filter(|r| r.method == m).collect();
                let mean = rs.iter().map(|r| r.metrics.findings as f64).sum::<f64>() / rs.len() as f64;
                pts.push(CurvePoint { budget: b, method: m, findings: mean });
            }
        }
        pts
    };
    Ok(ComparisonReport { rows, comparisons, curves, runs })
}

/// The full system with each component switched off in turn.
pub fn ablation_variants() -> Vec<(&'static str, Switches)> {
    let on = Switches::default();
    vec![
        ("full", on),
        ("no_stackelberg", Switches { use_stackelberg: false, ..on }),
        ("no_bayes_update", Switches { use_bayes_update: false, ..on }),
        ("no_verifier", Switches { use_verifier: false, ..on }),
        ("no_attack_graph", Switches { use_attack_graph: false, ..on }),
        ("no_sibling", Switches { use_sibling: false, ..on }),
        ("no_kcsan", Switches { use_kcsan: false, ..on }),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub switches: Switches,
    pub svub: MeanStd,
    pub fpr_human: MeanStd,
    /// Relative change of mean SVUB against the full system, in percent.
    pub delta_svub_pct: f64,
    /// Test that the full system beats the variant.
    pub test: PairedTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub runs: Vec<(String, RunSummary)>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("variant,svub_mean,svub_std,fpr_mean,delta_svub_pct,p_value,significant\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.variant, r.svub.mean, r.svub.std, r.fpr_human.mean, r.delta_svub_pct, r.test.p_value, r.test.significant
            );
        }
        out
    }
}

pub fn ablation_run(cfg: &ExperimentConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let scenarios = build_scenarios(cfg)?;
    let variants = ablation_variants();
    let cells: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..scenarios.len()).map(move |s| (v, s)))
        .collect();
    let results: Vec<RunSummary> = cells
        .par_iter()
        .map(|&(v, s)| {
            let run = RunConfig { switches: variants[v].1, ..cfg.run.clone() };
            run_cell(&scenarios[s], &cfg.game, &run, BaselineKind::Full).map(|x| x.0)
        })
        .collect::<Result<_>>()?;
    let per = scenarios.len();
    let svub = |v: usize| results[v * per..(v + 1) * per].iter().map(|r| r.metrics.svub).collect::<Vec<_>>();
    let full = svub(0);
    let full_mean = MeanStd::of(&full).mean;
    let rows = variants
        .iter()
        .enumerate()
        .map(|(v, (name, sw))| {
            let s = svub(v);
            let fpr: Vec<f64> = results[v * per..(v + 1) * per].iter().map(|r| r.metrics.fpr_human).collect();
            let ms = MeanStd::of(&s);
            AblationRow {
                variant: name.to_string(),
                switches: *sw,
                svub: ms,
                fpr_human: MeanStd::of(&fpr),
                delta_svub_pct: if full_mean != 0.0 { 100.0 * (ms.mean - full_mean) / full_mean } else { 0.0 },
                test: paired_greater("full", name, &full, &s),
            }
        })
        .collect();
    let runs = cells
        .iter()
        .zip(results)
        .map(|(&(v, _), r)| (variants[v].0.to_string(), r))
        .collect();
    Ok(AblationReport { rows, runs })
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: e,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Json {
            context: "serializing output".into(),
            source: e,
        })
}

/// `report.json`, `table.csv` and `curves.csv`.
pub fn write_comparison(dir: &Path, report: &ComparisonReport) -> Result<()> {
    write_file(dir, "report.json", &to_json(report)?)?;
    write_file(dir, "table.csv", &report.table_csv())?;
    write_file(dir, "curves.csv", &report.curves_csv())
}

/// `report.json` and `ablation.csv`.
pub fn write_ablation(dir: &Path, report: &AblationReport) -> Result<()> {
    write_file(dir, "report.json", &to_json(report)?)?;
    write_file(dir, "ablation.csv", &report.csv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack_graph::fixtures::{classes, edge, vertex};
    use crate::attack_graph::VertexKind;
    use crate::orchestrator::{BudgetLedger, Finding};
    use approx::assert_abs_diff_eq;

    fn empty_result() -> RunResult {
        RunResult {
            policy: "x".into(),
            seed: 0,
            fingerprint: String::new(),
            attacker_type: 0,
            findings: vec![],
            per_round: vec![],
            final_beliefs: BeliefState { b: vec![], round: 0 },
            mitigations: vec![],
            budget: BudgetLedger {
                total: 0,
                reserve_total: 0,
                main_spent: 0,
                sibling_spent: 0,
                main_remaining: 0,
                reserve_remaining: 0,
            },
            audit: vec![],
        }
    }

    fn finding(vertex: usize, severity: f64, round: usize) -> Finding {
        Finding {
            vertex,
            class: 0,
            severity,
            round,
            validated: true,
            is_sibling_hit: false,
            true_positive: true,
        }
    }

    /// Entry(0) -> A(1) -> Goal(3) and Entry(0) -> B(2) -> Goal(3).
    fn diamond_graph() -> AttackGraph {
        let mut vs = vec![
            vertex(0, VertexKind::Entry, vec![0.0]),
            vertex(1, VertexKind::Func, vec![0.5]),
            vertex(2, VertexKind::Func, vec![0.2]),
            vertex(3, VertexKind::Goal, vec![0.0]),
        ];
        vs[1].cvss_score = 7.8;
        vs[2].cvss_score = 5.5;
        AttackGraph {
            classes: classes(1),
            vertices: vs,
            edges: vec![edge(0, 1, 1.0), edge(0, 2, 1.0), edge(1, 3, 1.0), edge(2, 3, 1.0)],
        }
    }

    #[test]
    fn no_findings_metrics() {
        let g = diamond_graph();
        let m = compute_metrics(&empty_result(), &g, &GameParams::default(), &GroundTruth::default(), 10.0);
        assert_eq!(m.svub, 0.0);
        assert_eq!(m.t2f, None);
        assert_eq!(m.sibling_yield, 0.0);
        assert_eq!(m.fpr_human, 0.0);
        assert_eq!(m.payoff_reduction, 0.0);
    }

    #[test]
    fn svub_arithmetic() {
        let g = diamond_graph();
        let truth = GroundTruth { vuln: [(1, 0), (2, 0)].into_iter().collect() };
        let mut r = empty_result();
        r.findings = vec![finding(1, 7.8, 3), finding(2, 5.5, 2)];
        let m = compute_metrics(&r, &g, &GameParams::default(), &truth, 10.0);
        assert_abs_diff_eq!(m.svub, 1.33, epsilon = 1e-12);
        assert_eq!(m.t2f, Some(2));
    }

    #[test]
    fn escapes_raise_fpr_not_svub() {
        let g = diamond_graph();
        let truth = GroundTruth { vuln: [(1, 0)].into_iter().collect() };
        let mut r = empty_result();
        r.findings = vec![finding(1, 7.8, 1), finding(2, 5.5, 1)];
        let m = compute_metrics(&r, &g, &GameParams::default(), &truth, 10.0);
        assert_abs_diff_eq!(m.svub, 0.78, epsilon = 1e-12);
        assert_abs_diff_eq!(m.fpr_human, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn best_path_neutralized() {
        let g = diamond_graph();
        let mut r = empty_result();
        r.mitigations = vec![(1, 0), (2, 0)];
        let m = compute_metrics(&r, &g, &GameParams::default(), &GroundTruth::default(), 10.0);
        assert_abs_diff_eq!(m.payoff_reduction, 1.0, epsilon = 1e-12);
        // only the better path mitigated: the attacker falls back to B
        r.mitigations = vec![(1, 0)];
        let m = compute_metrics(&r, &g, &GameParams::default(), &GroundTruth::default(), 10.0);
        let a0 = 7.8 * 1.5 * 0.5;
        let a1 = 5.5 * 1.5 * 0.2;
        assert_abs_diff_eq!(m.payoff_reduction, (a0 - a1) / a0, epsilon = 1e-12);
    }

    #[test]
    fn paired_test_directions() {
        let a = [3.0, 4.0, 5.0, 6.0, 5.5];
        let b = [1.0, 2.5, 3.0, 2.0, 2.0];
        assert!(paired_greater("a", "b", &a, &b).significant);
        assert!(!paired_greater("b", "a", &b, &a).significant);
        assert!(!paired_greater("a", "a", &a, &a).significant);
    }

    fn small(methods: Vec<BaselineKind>, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            seeds,
            methods,
            run: RunConfig { rounds: 4, budget: 20.0, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn one_seed_one_method_one_row() {
        let r = run_experiment(&small(vec![BaselineKind::B1Uniform], vec![3])).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.runs.len(), 1);
        assert!(r.comparisons.is_empty());
        assert_eq!(r.curves.len(), 4);
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = small(vec![BaselineKind::Full, BaselineKind::B5MultiAgentNoGt], vec![1, 2, 3]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(to_json(&a).unwrap(), to_json(&b).unwrap());
        assert_eq!(a.table_csv(), b.table_csv());
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let e = run_experiment(&small(vec![BaselineKind::B1Uniform], vec![])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn full_ablation_row_has_zero_delta() {
        let cfg = small(vec![BaselineKind::Full], vec![1, 2]);
        let r = ablation_run(&cfg).unwrap();
        assert_eq!(r.rows.len(), ablation_variants().len());
        assert_eq!(r.row("full").unwrap().delta_svub_pct, 0.0);
    }
}
