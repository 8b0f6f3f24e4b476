//! JSON run configurations and the policy-kind tags shared across
//! subcommands. Field names mirror the library's `TrainConfig` so a config
//! file reads the same as the in-code structure; command-line flags
//! override file values after parsing.

use anyhow::{Context, Result};
use chanmgr_core::gnn::GnnArch;
use chanmgr_core::graph::{Normalization, Topology};
use chanmgr_core::interference::Objective;
use chanmgr_core::policy::ActionSpace;
use chanmgr_core::traffic::DemandModel;
use chanmgr_core::training::{EvalMode, OptimizerSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Erdős–Rényi graph parameters for one experiment instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub q: f64,
    pub seed: u64,
}

impl GraphSpec {
    pub fn build(&self) -> Result<Topology> {
        Topology::gen_er_graph(self.n, self.q, self.seed)
            .with_context(|| format!("generating graph n={} q={}", self.n, self.q))
    }
}

/// Which controller a run trains or evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Graph network trained with the score-function policy gradient.
    GnnPg,
    /// Graph network trained through the continuous relaxation.
    GnnRelaxed,
    /// Centralized dense network trained with the same policy gradient.
    Dnn,
    /// Uniform random channel selection (no training).
    Random,
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::GnnPg => "gnn-pg",
            PolicyKind::GnnRelaxed => "gnn-relaxed",
            PolicyKind::Dnn => "dnn",
            PolicyKind::Random => "random",
        }
    }
}

/// Training knobs shared by every run of an experiment; a template plus
/// (action space, objective, seed) materializes a full `TrainConfig`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTemplate {
    pub iterations: usize,
    pub batch: usize,
    pub optimizer: OptimizerSpec<f64>,
    pub baseline: bool,
    pub norm: Normalization,
    pub demands: DemandModel<f64>,
    pub eval_samples: usize,
    /// How final evaluations pick actions (greedy argmax or sampling).
    #[serde(default)]
    pub eval_mode: EvalMode,
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub target_cost: Option<f64>,
    /// Network-shape override; `None` uses the standard shape.
    #[serde(default)]
    pub arch: Option<GnnArch>,
}

impl Default for TrainTemplate {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch: 256,
            optimizer: OptimizerSpec::adam(5e-3),
            baseline: true,
            norm: Normalization::default(),
            demands: DemandModel::default(),
            eval_samples: 200,
            eval_mode: EvalMode::default(),
            eval_every: None,
            target_cost: None,
            arch: None,
        }
    }
}

impl TrainTemplate {
    pub fn materialize(&self, space: ActionSpace, objective: Objective, seed: u64) -> TrainConfig<f64> {
        let mut cfg = TrainConfig::new(space);
        cfg.iterations = self.iterations;
        cfg.batch = self.batch;
        cfg.optimizer = self.optimizer;
        cfg.seed = seed;
        cfg.objective = objective;
        cfg.baseline = self.baseline;
        cfg.norm = self.norm;
        cfg.demands = self.demands;
        cfg.eval_samples = self.eval_samples;
        cfg.eval_every = self.eval_every;
        cfg.target_cost = self.target_cost;
        cfg.arch = self.arch.clone();
        cfg
    }
}

/// One self-contained training (or evaluation) run: a graph, a policy
/// kind, and the full training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub graph: GraphSpec,
    pub policy: PolicyKind,
    pub channels: usize,
    pub objective: Objective,
    pub seed: u64,
    pub train: TrainTemplate,
}

impl RunConfig {
    pub fn space(&self) -> Result<ActionSpace> {
        Ok(ActionSpace::subsets(self.channels)?)
    }

    pub fn train_config(&self) -> Result<TrainConfig<f64>> {
        Ok(self.train.materialize(self.space()?, self.objective, self.seed))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
