use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use stackvd::attack_graph::{
    enumerate_paths, generate_synthetic_graph, plant_ground_truth, plant_sibling_clones, similarity_matrix,
    validate_graph, AttackGraph, GeneratorConfig,
};
use stackvd::belief::ObservationModelFile;
use stackvd::game_model::{random_game, GameInstance, GameParams};
use stackvd::harness::{self, ExperimentConfig};
use stackvd::learner;
use stackvd::orchestrator::{run_orchestration, RunInputs, StackelbergPolicy};
use stackvd::solver::{self, SolverConfig, SolverMethod};
use stackvd::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "stackvd", version, about = "Budgeted vulnerability discovery as a Bayesian Stackelberg game")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// JSON config file (an experiment config; `generate` also accepts a
    /// generator config).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Format of the primary output file.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CliSolver {
    Profile,
    Grid,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic attack graph and its planted defects.
    Generate {
        #[arg(long)]
        n_entry: Option<usize>,
        #[arg(long)]
        n_func: Option<usize>,
        #[arg(long)]
        n_priv: Option<usize>,
        #[arg(long)]
        n_goal: Option<usize>,
        #[arg(long)]
        n_classes: Option<usize>,
    },
    /// Solve the game on a graph.
    Solve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        game: Option<PathBuf>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_enum, default_value_t = CliSolver::Profile)]
        method: CliSolver,
        #[arg(long, default_value_t = 0.05)]
        grid_delta: f64,
        /// Attack paths kept for the game, highest prior score first.
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Run the orchestration loop on one graph.
    Simulate {
        /// Graph file; a synthetic graph from the seed when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        game: Option<PathBuf>,
        #[arg(long)]
        obs_model: Option<PathBuf>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Measure the regret of the online learner.
    Regret {
        #[arg(long, requires = "game")]
        graph: Option<PathBuf>,
        #[arg(long, requires = "graph")]
        game: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Compare the full system with the baselines.
    Compare {
        /// Run seeds `seed..seed+N` instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Switch components off one at a time.
    Ablate {
        #[arg(long)]
        seeds: Option<u64>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        context: format!("reading {}", path.display()),
        source: e,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::Json {
        context: format!("parsing {}", path.display()),
        source: e,
    })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: e,
    })?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_graph(path: &Path) -> Result<AttackGraph> {
    let g: AttackGraph = parse(path)?;
    let problems = validate_graph(&g);
    if !problems.is_empty() {
        return Err(Error::Config(format!("{}: {:?}", path.display(), problems)));
    }
    Ok(g)
}

fn experiment_config(global: &Global) -> Result<ExperimentConfig> {
    match &global.config {
        Some(p) => ExperimentConfig::from_json(&read(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn seeds_override(cfg: &mut ExperimentConfig, base: u64, n: Option<u64>) {
    if let Some(n) = n {
        cfg.seeds = (base..base + n).collect();
    }
}

fn top_paths(graph: &AttackGraph, k: usize) -> Vec<stackvd::attack_graph::AttackPath> {
    use stackvd::belief::BeliefState;
    use stackvd::orchestrator::{prune_paths, PruneConfig};
    let paths = enumerate_paths(graph, 5000);
    let beliefs = BeliefState::from_priors(graph);
    prune_paths(&paths, &beliefs, graph, &PruneConfig { theta: 0.0, top_k: k })
        .into_iter()
        .map(|i| paths[i].clone())
        .collect()
}

fn game_on_graph(graph: &AttackGraph, params: &GameParams, budget: f64, top_k: usize) -> Result<GameInstance> {
    let cells: Vec<Vec<f64>> = graph.vertices.iter().map(|v| v.phi.clone()).collect();
    Ok(params.instantiate(graph, &cells, top_paths(graph, top_k), budget)?)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    fs::create_dir_all(&g.out).map_err(|e| Error::Io {
        context: format!("creating {}", g.out.display()),
        source: e,
    })?;
    match cli.command {
        Command::Generate { n_entry, n_func, n_priv, n_goal, n_classes } => {
            let mut gen = match &g.config {
                Some(p) => {
                    let text = read(p)?;
                    // a bare generator config or a full experiment config
                    match serde_json::from_str::<GeneratorConfig>(&text) {
                        Ok(gc) => gc,
                        Err(_) => ExperimentConfig::from_json(&text)?.generator,
                    }
                }
                None => GeneratorConfig::default(),
            };
            gen.seed = g.seed;
            for (slot, v) in [
                (&mut gen.n_entry, n_entry),
                (&mut gen.n_func, n_func),
                (&mut gen.n_priv, n_priv),
                (&mut gen.n_goal, n_goal),
                (&mut gen.n_classes, n_classes),
            ] {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            let graph = generate_synthetic_graph(&gen)?;
            let truth = plant_ground_truth(&graph, g.seed);
            match g.format {
                Format::Json => {
                    write(&g.out, "graph.json", &(graph.to_json() + "\n"))?;
                    write(&g.out, "truth.json", &harness::to_json(&truth)?)?;
                }
                Format::Csv => {
                    let mut v = String::from("id,kind,cost_w,cvss,churn,reachability,phi\n");
                    for x in &graph.vertices {
                        let phi: Vec<String> = x.phi.iter().map(|p| p.to_string()).collect();
                        v.push_str(&format!(
                            "{},{:?},{},{},{},{},{}\n",
                            x.id,
                            x.kind,
                            x.cost_w,
                            x.cvss_score,
                            x.churn,
                            x.reachability,
                            phi.join(";")
                        ));
                    }
                    let mut e = String::from("src,dst,psi\n");
                    for x in &graph.edges {
                        e.push_str(&format!("{},{},{}\n", x.src, x.dst, x.psi));
                    }
                    write(&g.out, "vertices.csv", &v)?;
                    write(&g.out, "edges.csv", &e)?;
                }
            }
        }
        Command::Solve { graph, game, budget, method, grid_delta, top_k } => {
            let graph = load_graph(&graph)?;
            let params: GameParams = match game {
                Some(p) => parse(&p)?,
                None => GameParams::default(),
            };
            let game = game_on_graph(&graph, &params, budget.unwrap_or(params.budget), top_k)?;
            let cfg = SolverConfig {
                method: match method {
                    CliSolver::Profile => SolverMethod::ProfileEnumeration,
                    CliSolver::Grid => SolverMethod::GridOracle,
                },
                grid_delta,
                ..Default::default()
            };
            let s = solver::solve(&game, &cfg)?;
            match g.format {
                Format::Json => write(&g.out, "solution.json", &harness::to_json(&s)?)?,
                Format::Csv => {
                    let mut out = String::from("vertex,coverage\n");
                    for (v, c) in s.coverage.0.iter().enumerate() {
                        out.push_str(&format!("{v},{c}\n"));
                    }
                    write(&g.out, "solution.csv", &out)?;
                }
            }
            println!("objective {}", s.objective);
        }
        Command::Simulate { graph, game, obs_model, budget, rounds, beta, sigma, theta, top_k } => {
            let exp = experiment_config(g)?;
            let (graph, truth, sim) = match graph {
                Some(p) => {
                    let graph = load_graph(&p)?;
                    let sim = similarity_matrix(&graph);
                    let base = plant_ground_truth(&graph, g.seed);
                    let truth = plant_sibling_clones(&graph, &base, &sim, exp.clone_threshold, exp.clone_prob, g.seed);
                    (graph, truth, sim)
                }
                None => {
                    let s = harness::build_scenario(&exp, g.seed)?;
                    (s.graph, s.truth, s.sim)
                }
            };
            let params: GameParams = match game {
                Some(p) => parse(&p)?,
                None => exp.game.clone(),
            };
            let obs: ObservationModelFile = match obs_model {
                Some(p) => parse(&p)?,
                None => exp.observation.clone(),
            };
            let model = obs.resolve(&graph)?;
            let mut cfg = exp.run.clone();
            if let Some(x) = budget {
                cfg.budget = x;
            }
            if let Some(x) = rounds {
                cfg.rounds = x;
            }
            if let Some(x) = beta {
                cfg.beta = x;
            }
            if let Some(x) = sigma {
                cfg.sigma = x;
            }
            if let Some(x) = theta {
                cfg.prune.theta = x;
            }
            if let Some(x) = top_k {
                cfg.prune.top_k = x;
            }
            let inputs = RunInputs { graph: &graph, params: &params, truth: &truth, model: &model, sim: &sim };
            let mut policy = StackelbergPolicy { solver: cfg.solver.clone() };
            let result = run_orchestration(&inputs, &cfg, g.seed, &mut policy)?;
            let metrics = harness::compute_metrics(&result, &graph, &params, &truth, cfg.budget);
            write(&g.out, "run.json", &harness::to_json(&result)?)?;
            write(&g.out, "rounds.csv", &result.round_csv())?;
            write(&g.out, "metrics.json", &harness::to_json(&metrics)?)?;
            println!(
                "svub {} findings {} fpr {} spent {}/{}",
                metrics.svub,
                metrics.findings,
                metrics.fpr_human,
                result.budget.spent(),
                result.budget.total
            );
        }
        Command::Regret { graph, game, rounds, delta, seeds } => {
            let instance = match (graph, game) {
                (Some(gp), Some(pp)) => {
                    let graph = load_graph(&gp)?;
                    let params: GameParams = parse(&pp)?;
                    game_on_graph(&graph, &params, params.budget, 4)?
                }
                _ => default_regret_game(g.seed),
            };
            let grid = learner::build_grid(&instance, delta)?;
            let traces = (g.seed..g.seed + seeds)
                .map(|s| learner::run_on_grid(&instance, &grid, rounds, s))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            for (i, t) in traces.iter().enumerate() {
                write(&g.out, &format!("regret_{i:03}.csv"), &t.to_csv())?;
            }
            let summary = learner::summarize(&traces)?;
            let mut brief = serde_json::to_value(&summary).expect("summary serializes");
            if g.format == Format::Csv {
                // the curve lives in the CSV files
                brief.as_object_mut().map(|o| o.remove("mean_regret"));
            }
            write(&g.out, "summary.json", &harness::to_json(&brief)?)?;
            println!(
                "arms {} slope {} (95% CI {:?}) regret/T {} -> {}",
                summary.arms, summary.slope, summary.slope_ci95, summary.regret_rate_early, summary.regret_rate_final
            );
        }
        Command::Compare { seeds } => {
            let mut cfg = experiment_config(g)?;
            seeds_override(&mut cfg, g.seed, seeds);
            let report = harness::run_experiment(&cfg)?;
            harness::write_comparison(&g.out, &report)?;
            print!("{}", report.table_csv());
        }
        Command::Ablate { seeds } => {
            let mut cfg = experiment_config(g)?;
            seeds_override(&mut cfg, g.seed, seeds);
            let report = harness::ablation_run(&cfg)?;
            harness::write_ablation(&g.out, &report)?;
            print!("{}", report.csv());
        }
    }
    Ok(())
}

/// Three payload vertices with unit costs and budget 1.
fn default_regret_game(seed: u64) -> GameInstance {
    let mut game = random_game(seed, 3, 3, 2);
    game.budget = 1.0;
    game
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
