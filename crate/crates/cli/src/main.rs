//! Command-line entry point: train | eval | reproduce | gradcheck |
//! equivariance-check | dist-check | oracle.
//!
//! Exit codes: 0 success, 1 usage error, 2 check failure, 3 incomplete
//! experiment (some runs failed; artifacts for the rest were written).

use anyhow::{bail, Context, Result};
use chanmgr_cli::checks::{decentralized_check, equivariance_check, gradient_check, oracle_check, CheckReport};
use chanmgr_cli::config::{read_json, PolicyKind, RunConfig};
use chanmgr_cli::experiment::{run_experiment, ExperimentSpec, Scenario};
use chanmgr_cli::output::{content_hash, prepare_dir, resolve_out_dir, write_csv};
use chanmgr_core::baselines::{
    deserialize_checkpoint, dnn_train, evaluate_random, evaluate_relaxed, relaxed_gnn_train,
    serialize_dnn_params, Checkpoint, DnnPolicy,
};
use chanmgr_core::gnn::serialize_params;
use chanmgr_core::interference::StandardInterference;
use chanmgr_core::training::{evaluate, evaluate_model, train, EvalMode, TrainHistory};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "chanmgr",
    version,
    about = "Radio-channel management experiments: decentralized graph policies vs. baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Greedy,
    Sample,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Greedy => EvalMode::Greedy,
            ModeArg::Sample => EvalMode::Sample,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy on one graph; writes history, checkpoint, summary.
    Train {
        /// JSON run configuration (graph, policy, channels, objective, training knobs).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $CHANMGR_OUT or ./runs, plus a run name).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a saved checkpoint under a run configuration.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Override the config's seed (fresh evaluation draws).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's evaluation sample count.
        #[arg(long)]
        samples: Option<usize>,
        /// Action selection during evaluation.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run a named experiment scenario and emit CSV artifacts.
    Reproduce {
        /// Scenario tag; `custom` requires --config.
        #[arg(value_enum)]
        scenario: Scenario,
        /// Experiment spec overriding the scenario's versioned default grid.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replace the spec's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Compare analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify permutation equivariance on random tuples.
    EquivarianceCheck {
        #[arg(long, default_value_t = 100)]
        tuples: usize,
        /// Largest graph size drawn.
        #[arg(long, default_value_t = 16)]
        max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare decentralized message-passing execution with the
    /// centralized forward pass on one random instance.
    DistCheck {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-check interference against brute-force enumeration and
    /// proper-coloring witnesses.
    Oracle {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 12)]
        max_n: usize,
        #[arg(long, default_value_t = 4)]
        max_m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Train { config, seed, out, force } => run_train(&config, seed, out, force),
        Command::Eval { config, checkpoint, seed, samples, mode } => {
            run_eval(&config, &checkpoint, seed, samples, mode.map(EvalMode::from))
        }
        Command::Reproduce { scenario, config, seed, out, force } => {
            run_reproduce(scenario, config, seed, out, force)
        }
        Command::Gradcheck { instances, seed } => {
            finish_check("gradcheck", gradient_check(instances, seed)?)
        }
        Command::EquivarianceCheck { tuples, max_n, seed } => {
            finish_check("equivariance-check", equivariance_check(tuples, max_n, seed)?)
        }
        Command::DistCheck { n, q, seed } => {
            finish_check("dist-check", decentralized_check(n, q, seed)?)
        }
        Command::Oracle { instances, max_n, max_m, seed } => {
            finish_check("oracle", oracle_check(instances, max_n, max_m, seed)?)
        }
    }
}

fn finish_check(name: &str, report: CheckReport) -> Result<i32> {
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    println!("{name}: {verdict} — {}", report.detail);
    Ok(if report.passed { 0 } else { 2 })
}

fn history_rows(history: &TrainHistory<f64>) -> Vec<String> {
    history
        .deterministic_fields()
        .into_iter()
        .map(|(iteration, mean, std, grad)| format!("{iteration},{mean},{std},{grad}"))
        .collect()
}

fn run_train(config: &Path, seed: Option<u64>, out: Option<PathBuf>, force: bool) -> Result<i32> {
    let mut run_cfg: RunConfig = read_json(config)?;
    if let Some(s) = seed {
        run_cfg.seed = s;
        run_cfg.graph.seed = s;
    }
    let name = format!("train-{}-n{}-s{}", run_cfg.policy.label(), run_cfg.graph.n, run_cfg.seed);
    let dir = resolve_out_dir(out.as_deref(), &name);
    prepare_dir(&dir, force)?;

    let config_json = serde_json::to_string_pretty(&run_cfg)?;
    std::fs::write(dir.join("config.json"), &config_json)?;
    let hash = content_hash(&config_json);

    let topo = run_cfg.graph.build()?;
    let cfg = run_cfg.train_config()?;
    let samples = run_cfg.train.eval_samples;
    let mode = run_cfg.train.eval_mode;

    let (report, history) = match run_cfg.policy {
        PolicyKind::GnnPg => {
            let (params, history) = train(&topo, &cfg)?;
            let mut file = BufWriter::new(std::fs::File::create(dir.join("checkpoint.bin"))?);
            serialize_params(&mut file, &params)?;
            (evaluate(&params, &topo, &cfg, samples, mode)?, Some(history))
        }
        PolicyKind::GnnRelaxed => {
            let (params, history) = relaxed_gnn_train(&topo, &cfg)?;
            let mut file = BufWriter::new(std::fs::File::create(dir.join("checkpoint.bin"))?);
            serialize_params(&mut file, &params)?;
            (evaluate_relaxed(&params, &topo, &cfg, samples)?, Some(history))
        }
        PolicyKind::Dnn => {
            let (params, history) = dnn_train(&topo, &cfg)?;
            let mut file = BufWriter::new(std::fs::File::create(dir.join("checkpoint.bin"))?);
            serialize_dnn_params(&mut file, &params)?;
            let policy = DnnPolicy::new(params, topo.n(), cfg.space.actions())?;
            (
                evaluate_model(&policy, &topo, &cfg, &StandardInterference, samples, mode, cfg.seed)?,
                Some(history),
            )
        }
        PolicyKind::Random => (evaluate_random(&topo, &cfg, samples)?, None),
    };

    if let Some(history) = &history {
        write_csv(
            &dir.join("history.csv"),
            &hash,
            "iteration,mean_cost,std_cost,grad_norm",
            &history_rows(history),
        )?;
    }
    let summary = serde_json::json!({
        "policy": run_cfg.policy.label(),
        "n": run_cfg.graph.n,
        "q": run_cfg.graph.q,
        "seed": run_cfg.seed,
        "samples": samples,
        "mean_cost": report.mean,
        "std_cost": report.std,
        "config_hash": hash,
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{}: mean cost {:.6} ± {:.6} over {} samples → {}",
        run_cfg.policy.label(),
        report.mean,
        report.std,
        samples,
        dir.display()
    );
    Ok(0)
}

fn run_eval(
    config: &Path,
    checkpoint: &Path,
    seed: Option<u64>,
    samples: Option<usize>,
    mode: Option<EvalMode>,
) -> Result<i32> {
    let mut run_cfg: RunConfig = read_json(config)?;
    if let Some(s) = seed {
        run_cfg.seed = s;
    }
    let topo = run_cfg.graph.build()?;
    let cfg = run_cfg.train_config()?;
    let samples = samples.unwrap_or(run_cfg.train.eval_samples);
    let mode = mode.unwrap_or(run_cfg.train.eval_mode);

    let bytes = std::fs::read(checkpoint)
        .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let loaded: Checkpoint<f64> = deserialize_checkpoint(&mut bytes.as_slice())?;
    let report = match loaded {
        Checkpoint::Graph(params) => {
            if params.arch.actions == cfg.space.actions() {
                evaluate(&params, &topo, &cfg, samples, mode)?
            } else if params.arch.actions == cfg.space.channels() {
                // Readout width equals the channel count: parameters from
                // the relaxation trainer, evaluated by quantizing soft bits.
                evaluate_relaxed(&params, &topo, &cfg, samples)?
            } else {
                bail!(
                    "checkpoint emits {} outputs; config expects {} actions or {} channels",
                    params.arch.actions,
                    cfg.space.actions(),
                    cfg.space.channels()
                );
            }
        }
        Checkpoint::Dense(params) => {
            let policy = DnnPolicy::new(params, topo.n(), cfg.space.actions())?;
            evaluate_model(&policy, &topo, &cfg, &StandardInterference, samples, mode, cfg.seed)?
        }
    };
    println!("mean cost {:.6} ± {:.6} over {} samples", report.mean, report.std, samples);
    Ok(0)
}

fn run_reproduce(
    scenario: Scenario,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    force: bool,
) -> Result<i32> {
    let mut spec: ExperimentSpec = match &config {
        Some(path) => {
            let spec: ExperimentSpec = read_json(path)?;
            if spec.scenario != scenario {
                bail!(
                    "config describes scenario '{}' but '{}' was requested",
                    spec.scenario.label(),
                    scenario.label()
                );
            }
            spec
        }
        None => scenario
            .standard()
            .ok_or_else(|| anyhow::anyhow!("scenario 'custom' requires --config"))?,
    };
    if let Some(s) = seed {
        spec.seeds = vec![s];
    }
    let dir = resolve_out_dir(out.as_deref(), scenario.label());
    let record = run_experiment(&spec, &dir, force)?;
    for a in &record.aggregates {
        println!(
            "n={} q={} {} {}: mean cost {:.6} ± {:.6} ({} runs)",
            a.n,
            a.q,
            chanmgr_cli::experiment::objective_label(a.objective),
            a.policy.label(),
            a.mean,
            a.std,
            a.count
        );
    }
    if record.complete {
        println!("complete → {}", dir.display());
        Ok(0)
    } else {
        let failed = record.runs.iter().filter(|r| r.error.is_some()).count();
        eprintln!("incomplete: {failed} of {} runs failed → {}", record.runs.len(), dir.display());
        Ok(3)
    }
}
