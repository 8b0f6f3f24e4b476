//! Experiment orchestration: scenario grids, per-seed training runs,
//! aggregation across random graphs, and artifact emission.
//!
//! A scenario names a versioned default grid (standard grids use mean ±
//! one sample standard deviation across ten random graphs); `custom` runs
//! whatever grid the config file describes. Each grid point × seed is an
//! independent job; failures are recorded per run and the experiment
//! continues, flagging incompleteness at the end.

use crate::config::{PolicyKind, TrainTemplate};
use crate::output::{content_hash, prepare_dir, write_csv};
use anyhow::{bail, Context, Result};
use chanmgr_core::baselines::{
    dnn_train, evaluate_random, evaluate_relaxed, relaxed_gnn_train, DnnPolicy,
};
use chanmgr_core::graph::Topology;
use chanmgr_core::interference::{Objective, StandardInterference};
use chanmgr_core::policy::ActionSpace;
use chanmgr_core::training::{evaluate, evaluate_model, train, TrainHistory};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Named experiment setups, each mapping to a versioned default grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Small-scale convergence study: ten APs, four channels, sparse graphs.
    SmallTraining,
    /// Cost versus network size at fixed edge probability.
    NodeSweep,
    /// Cost versus edge probability at fixed network size.
    DensitySweep,
    /// Mean and max objectives side by side on the same networks.
    ObjectiveSweep,
    /// Decentralized-versus-centralized gap as density grows.
    GnnVsDnn,
    /// Grid taken verbatim from the config file.
    Custom,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::SmallTraining => "small-training",
            Scenario::NodeSweep => "node-sweep",
            Scenario::DensitySweep => "density-sweep",
            Scenario::ObjectiveSweep => "objective-sweep",
            Scenario::GnnVsDnn => "gnn-vs-dnn",
            Scenario::Custom => "custom",
        }
    }

    /// The versioned default spec, or `None` for `custom` (which must come
    /// from a config file).
    pub fn standard(self) -> Option<ExperimentSpec> {
        let seeds: Vec<u64> = (0..10).collect();
        let spec = match self {
            Scenario::SmallTraining => ExperimentSpec {
                scenario: self,
                nodes: vec![10],
                edge_probs: vec![0.25],
                channels: 4,
                objectives: vec![Objective::Mean],
                seeds,
                policies: vec![PolicyKind::GnnPg, PolicyKind::GnnRelaxed, PolicyKind::Random],
                train: TrainTemplate { iterations: 1500, ..TrainTemplate::default() },
            },
            Scenario::NodeSweep => ExperimentSpec {
                scenario: self,
                nodes: vec![10, 15, 20, 25, 30],
                edge_probs: vec![0.5],
                channels: 4,
                objectives: vec![Objective::Mean],
                seeds,
                policies: vec![
                    PolicyKind::GnnPg,
                    PolicyKind::Dnn,
                    PolicyKind::GnnRelaxed,
                    PolicyKind::Random,
                ],
                train: TrainTemplate::default(),
            },
            Scenario::DensitySweep => ExperimentSpec {
                scenario: self,
                nodes: vec![20],
                edge_probs: vec![0.2, 0.4, 0.6, 0.8, 1.0],
                channels: 4,
                objectives: vec![Objective::Mean],
                seeds,
                policies: vec![
                    PolicyKind::GnnPg,
                    PolicyKind::Dnn,
                    PolicyKind::GnnRelaxed,
                    PolicyKind::Random,
                ],
                train: TrainTemplate::default(),
            },
            Scenario::ObjectiveSweep => ExperimentSpec {
                scenario: self,
                nodes: vec![20],
                edge_probs: vec![0.5],
                channels: 4,
                objectives: vec![Objective::Mean, Objective::Max],
                seeds,
                policies: vec![PolicyKind::GnnPg, PolicyKind::Dnn, PolicyKind::Random],
                train: TrainTemplate::default(),
            },
            Scenario::GnnVsDnn => ExperimentSpec {
                scenario: self,
                nodes: vec![20],
                edge_probs: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
                channels: 4,
                objectives: vec![Objective::Mean],
                seeds,
                policies: vec![PolicyKind::GnnPg, PolicyKind::Dnn],
                train: TrainTemplate::default(),
            },
            Scenario::Custom => return None,
        };
        Some(spec)
    }
}

pub fn objective_label(o: Objective) -> &'static str {
    match o {
        Objective::Mean => "mean",
        Objective::Max => "max",
    }
}

/// Full description of one experiment: the grid, the seeds, the policies
/// to train, and the shared training template.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Network sizes to sweep.
    pub nodes: Vec<usize>,
    /// Edge probabilities to sweep.
    pub edge_probs: Vec<f64>,
    /// Number of radio channels.
    pub channels: usize,
    /// Objectives to run (most scenarios use one; the objective comparison
    /// runs both).
    pub objectives: Vec<Objective>,
    /// One independent run per seed; the seed drives both the random graph
    /// and the training streams.
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub train: TrainTemplate,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty()
            || self.edge_probs.is_empty()
            || self.seeds.is_empty()
            || self.policies.is_empty()
            || self.objectives.is_empty()
        {
            bail!("experiment grid, seeds, policies, and objectives must all be non-empty");
        }
        if self.nodes.iter().any(|&n| n == 0) {
            bail!("network sizes must be positive");
        }
        if self.edge_probs.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            bail!("edge probabilities must lie in [0, 1]");
        }
        if self.train.iterations == 0 || self.train.batch == 0 {
            bail!("training iterations and batch must be positive");
        }
        if self.train.eval_samples == 0 {
            bail!("evaluation needs at least one sample");
        }
        // Channel-count bounds are enforced when the action space is built.
        ActionSpace::subsets(self.channels)?;
        Ok(())
    }

    /// True when the grid has a single (n, q) point per objective, i.e. the
    /// table's x-axis is the training iteration rather than n or q.
    pub fn single_point(&self) -> bool {
        self.nodes.len() == 1 && self.edge_probs.len() == 1
    }

    fn plan(&self) -> Vec<(Objective, usize, f64, u64, PolicyKind)> {
        let mut plan = Vec::new();
        for &objective in &self.objectives {
            for &n in &self.nodes {
                for &q in &self.edge_probs {
                    for &seed in &self.seeds {
                        for &policy in &self.policies {
                            plan.push((objective, n, q, seed, policy));
                        }
                    }
                }
            }
        }
        plan
    }
}

/// Outcome of one (grid point, seed, policy) job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub n: usize,
    pub q: f64,
    pub objective: Objective,
    pub seed: u64,
    pub policy: PolicyKind,
    /// Mean evaluation cost, absent when the run failed.
    pub final_cost: Option<f64>,
    pub error: Option<String>,
    /// Wall time; kept out of the serialized record so record files are
    /// byte-reproducible (timings go to a sidecar file).
    #[serde(skip)]
    pub seconds: f64,
    /// Training curve (iteration, batch mean cost); bulk data emitted as
    /// CSV rather than stored in the record.
    #[serde(skip)]
    pub curve: Option<Vec<(usize, f64)>>,
}

/// Mean ± sample std of final costs across the seeds of one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub q: f64,
    pub objective: Objective,
    pub policy: PolicyKind,
    /// Successful runs contributing to the statistics.
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Everything an experiment produced. The serialized form contains only
/// deterministic fields, so identical specs yield byte-identical records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    /// Hash of the spec document that produced this record.
    pub spec_hash: String,
    /// Hash of the fully resolved per-run configurations.
    pub config_hash: String,
    pub runs: Vec<SeedRun>,
    pub aggregates: Vec<Aggregate>,
    /// False when any run failed.
    pub complete: bool,
    #[serde(skip)]
    pub wall_seconds: f64,
}

fn sample_std(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

fn curve_points(history: &TrainHistory<f64>) -> Vec<(usize, f64)> {
    history.records.iter().map(|r| (r.iteration, r.mean_cost)).collect()
}

struct RunOutput {
    final_cost: f64,
    curve: Option<Vec<(usize, f64)>>,
}

fn execute_run(
    objective: Objective,
    n: usize,
    q: f64,
    seed: u64,
    policy: PolicyKind,
    channels: usize,
    template: &TrainTemplate,
) -> Result<RunOutput> {
    let topo = Topology::gen_er_graph(n, q, seed)?;
    let space = ActionSpace::subsets(channels)?;
    let cfg = template.materialize(space, objective, seed);
    let samples = template.eval_samples;
    match policy {
        PolicyKind::GnnPg => {
            let (params, history) = train(&topo, &cfg)?;
            let report = evaluate(&params, &topo, &cfg, samples, template.eval_mode)?;
            Ok(RunOutput { final_cost: report.mean, curve: Some(curve_points(&history)) })
        }
        PolicyKind::GnnRelaxed => {
            let (params, history) = relaxed_gnn_train(&topo, &cfg)?;
            let report = evaluate_relaxed(&params, &topo, &cfg, samples)?;
            Ok(RunOutput { final_cost: report.mean, curve: Some(curve_points(&history)) })
        }
        PolicyKind::Dnn => {
            let (params, history) = dnn_train(&topo, &cfg)?;
            let dnn = DnnPolicy::new(params, topo.n(), cfg.space.actions())?;
            let report = evaluate_model(
                &dnn,
                &topo,
                &cfg,
                &StandardInterference,
                samples,
                template.eval_mode,
                cfg.seed,
            )?;
            Ok(RunOutput { final_cost: report.mean, curve: Some(curve_points(&history)) })
        }
        PolicyKind::Random => {
            let report = evaluate_random(&topo, &cfg, samples)?;
            Ok(RunOutput { final_cost: report.mean, curve: None })
        }
    }
}

/// Runs the whole grid, writes artifacts into `out_dir`, and returns the
/// record. Individual run failures do not abort the experiment; they leave
/// the record flagged incomplete.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path, force: bool) -> Result<RunRecord> {
    spec.validate()?;
    prepare_dir(out_dir, force)?;
    let started = Instant::now();

    let spec_json = serde_json::to_string_pretty(spec).context("serializing spec")?;
    std::fs::write(out_dir.join("spec.json"), &spec_json)
        .with_context(|| format!("writing {}", out_dir.join("spec.json").display()))?;
    let spec_hash = content_hash(&spec_json);

    let plan = spec.plan();
    let resolved: Vec<_> = plan
        .iter()
        .map(|&(objective, n, q, seed, policy)| {
            let space = ActionSpace::subsets(spec.channels).expect("validated channels");
            (n, q, seed, policy, spec.train.materialize(space, objective, seed))
        })
        .collect();
    let config_hash =
        content_hash(&serde_json::to_string(&resolved).context("serializing resolved configs")?);

    // Jobs are independent (each run derives every random stream from its own
    // seed), so a bounded worker pool changes wall time but not results; the
    // slots vector keeps output in plan order regardless of scheduling.
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(plan.len().max(1));
    let mut slots: Vec<Option<SeedRun>> = (0..plan.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let done = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        let next = &next;
        let done = &done;
        let plan = &plan;
        let train = &spec.train;
        let channels = spec.channels;
        let mut handles = Vec::with_capacity(workers);
        for _ in 0..workers {
            handles.push(scope.spawn(move || loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&(objective, n, q, seed, policy)) = plan.get(idx) else {
                    return;
                };
                let t0 = Instant::now();
                let outcome = execute_run(objective, n, q, seed, policy, channels, train);
                let seconds = t0.elapsed().as_secs_f64();
                let run = match outcome {
                    Ok(out) => SeedRun {
                        n,
                        q,
                        objective,
                        seed,
                        policy,
                        final_cost: Some(out.final_cost),
                        error: None,
                        seconds,
                        curve: out.curve,
                    },
                    Err(e) => SeedRun {
                        n,
                        q,
                        objective,
                        seed,
                        policy,
                        final_cost: None,
                        error: Some(e.to_string()),
                        seconds,
                        curve: None,
                    },
                };
                done.lock().expect("worker poisoned the result list").push((idx, run));
            }));
        }
        for h in handles {
            if let Err(p) = h.join() {
                std::panic::resume_unwind(p);
            }
        }
        for (idx, run) in done.lock().expect("worker poisoned the result list").drain(..) {
            slots[idx] = Some(run);
        }
    });
    let runs: Vec<SeedRun> = slots.into_iter().map(|s| s.expect("every job ran")).collect();

    let aggregates = aggregate(spec, &runs);
    let complete = runs.iter().all(|r| r.error.is_none());
    let record = RunRecord {
        scenario: spec.scenario,
        spec_hash,
        config_hash,
        runs,
        aggregates,
        complete,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    emit_artifacts(spec, &record, out_dir)?;
    Ok(record)
}

fn aggregate(spec: &ExperimentSpec, runs: &[SeedRun]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &objective in &spec.objectives {
        for &n in &spec.nodes {
            for &q in &spec.edge_probs {
                for &policy in &spec.policies {
                    let costs: Vec<f64> = runs
                        .iter()
                        .filter(|r| {
                            r.objective == objective
                                && r.n == n
                                && r.q == q
                                && r.policy == policy
                                && r.error.is_none()
                        })
                        .filter_map(|r| r.final_cost)
                        .collect();
                    if costs.is_empty() {
                        continue;
                    }
                    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
                    out.push(Aggregate {
                        n,
                        q,
                        objective,
                        policy,
                        count: costs.len(),
                        mean,
                        std: sample_std(&costs, mean),
                    });
                }
            }
        }
    }
    out
}

fn emit_artifacts(spec: &ExperimentSpec, record: &RunRecord, out_dir: &Path) -> Result<()> {
    let record_json = serde_json::to_string_pretty(record).context("serializing record")?;
    std::fs::write(out_dir.join("record.json"), record_json)
        .with_context(|| format!("writing {}", out_dir.join("record.json").display()))?;

    let timing = serde_json::json!({
        "total_seconds": record.wall_seconds,
        "runs": record
            .runs
            .iter()
            .map(|r| {
                serde_json::json!({
                    "n": r.n,
                    "q": r.q,
                    "objective": objective_label(r.objective),
                    "seed": r.seed,
                    "policy": r.policy.label(),
                    "seconds": r.seconds,
                })
            })
            .collect::<Vec<_>>(),
    });
    std::fs::write(out_dir.join("timing.json"), serde_json::to_string_pretty(&timing)?)
        .with_context(|| format!("writing {}", out_dir.join("timing.json").display()))?;

    // Final costs per grid point and policy (every scenario gets this).
    let rows: Vec<String> = record
        .aggregates
        .iter()
        .map(|a| {
            format!(
                "{},{},{},{},{},{},{}",
                a.n,
                a.q,
                objective_label(a.objective),
                a.policy.label(),
                a.mean,
                a.std,
                a.count
            )
        })
        .collect();
    write_csv(
        &out_dir.join("final.csv"),
        &record.spec_hash,
        "n,q,objective,policy,mean_cost,std_cost,runs",
        &rows,
    )?;

    if spec.single_point() {
        emit_curves(spec, record, out_dir)?;
    } else {
        emit_sweeps(spec, record, out_dir)?;
    }
    if spec.scenario == Scenario::GnnVsDnn {
        emit_gap(spec, record, out_dir)?;
    }
    Ok(())
}

/// Training curves aggregated across seeds: mean ± std of the batch cost at
/// each iteration. Histories shortened by early stopping are padded with
/// their final value so every seed contributes to every iteration.
fn emit_curves(spec: &ExperimentSpec, record: &RunRecord, out_dir: &Path) -> Result<()> {
    for &objective in &spec.objectives {
        for &policy in &spec.policies {
            let curves: Vec<&Vec<(usize, f64)>> = record
                .runs
                .iter()
                .filter(|r| r.objective == objective && r.policy == policy && r.error.is_none())
                .filter_map(|r| r.curve.as_ref())
                .collect();
            if curves.is_empty() {
                continue;
            }
            let longest = curves.iter().map(|c| c.len()).max().unwrap_or(0);
            let mut rows = Vec::with_capacity(longest);
            for t in 0..longest {
                let costs: Vec<f64> = curves
                    .iter()
                    .filter_map(|c| c.get(t).or_else(|| c.last()).map(|&(_, cost)| cost))
                    .collect();
                let mean = costs.iter().sum::<f64>() / costs.len() as f64;
                rows.push(format!("{},{},{}", t, mean, sample_std(&costs, mean)));
            }
            let name = format!("curve-{}-{}.csv", objective_label(objective), policy.label());
            write_csv(
                &out_dir.join(name),
                &record.spec_hash,
                "iteration,mean_cost,std_cost",
                &rows,
            )?;
        }
    }
    Ok(())
}

/// One table per policy with a row per grid point: the table's x-axis is
/// n or q.
fn emit_sweeps(spec: &ExperimentSpec, record: &RunRecord, out_dir: &Path) -> Result<()> {
    for &policy in &spec.policies {
        let rows: Vec<String> = record
            .aggregates
            .iter()
            .filter(|a| a.policy == policy)
            .map(|a| {
                format!(
                    "{},{},{},{},{}",
                    a.n,
                    a.q,
                    objective_label(a.objective),
                    a.mean,
                    a.std
                )
            })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let name = format!("sweep-{}.csv", policy.label());
        write_csv(
            &out_dir.join(name),
            &record.spec_hash,
            "n,q,objective,mean_cost,std_cost",
            &rows,
        )?;
    }
    Ok(())
}

/// Decentralized-versus-centralized degradation per grid point.
fn emit_gap(spec: &ExperimentSpec, record: &RunRecord, out_dir: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for &objective in &spec.objectives {
        for &n in &spec.nodes {
            for &q in &spec.edge_probs {
                let find = |policy: PolicyKind| {
                    record
                        .aggregates
                        .iter()
                        .find(|a| {
                            a.objective == objective && a.n == n && a.q == q && a.policy == policy
                        })
                        .map(|a| a.mean)
                };
                if let (Some(gnn), Some(dnn)) = (find(PolicyKind::GnnPg), find(PolicyKind::Dnn)) {
                    rows.push(format!("{},{},{},{},{}", n, q, gnn, dnn, (gnn - dnn).abs()));
                }
            }
        }
    }
    if !rows.is_empty() {
        write_csv(
            &out_dir.join("gap.csv"),
            &record.spec_hash,
            "n,q,gnn_mean,dnn_mean,abs_gap",
            &rows,
        )?;
    }
    Ok(())
}
