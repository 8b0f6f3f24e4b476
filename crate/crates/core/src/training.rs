//! Policy-gradient training loop and evaluation.
//!
//! Each iteration draws a batch of demand vectors, runs the policy network
//! forward, samples one joint action per demand, observes the resulting
//! cost through an opaque callback, forms the score-function gradient, and
//! takes one optimizer step. The cost enters only as a number per episode —
//! the trainer never differentiates it, so any measurement source with the
//! same shape can replace the built-in interference model.

use crate::error::{Error, Result};
use crate::gnn::{
    gnn_backward, gnn_backward_batch, gnn_forward, gnn_forward_batch, BatchedTape, ForwardTape,
    GnnArch, GnnParams,
};
use crate::graph::{Normalization, ShiftMatrix, Topology};
use crate::interference::{CostModel, Objective, StandardInterference};
use crate::policy::{
    advantage_weights, greedy_actions, log_density_upstream, sample_actions, ActionSpace,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::traffic::{DemandModel, Demands};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Substream tags: every random decision in a run draws from a stream
/// derived from the run seed and one of these, so the decisions are
/// independent and individually reproducible.
pub mod seed_tags {
    /// Parameter initialization.
    pub const INIT: u64 = 1;
    /// Demand vectors consumed by the training loop.
    pub const DEMANDS: u64 = 2;
    /// Action sampling in the training loop.
    pub const ACTIONS: u64 = 3;
    /// Evaluation demand vectors (and sampling-mode actions).
    pub const EVAL: u64 = 4;
    /// Per-node decentralized sampling; combined with the node id.
    pub const NODE: u64 = 5;
}

/// A differentiable policy network: demands in, per-node logits out, with
/// reverse-mode gradients exposed over a flat parameter vector.
///
/// Implementations record whatever intermediates they need in `Tape`; the
/// trainer treats it as opaque and hands it back for the gradient.
pub trait PolicyModel<T: Scalar> {
    type Tape;
    type BatchTape;

    /// Number of nodes the model produces logits for.
    fn nodes(&self) -> usize;

    /// Logit-row width (must equal the action-space size).
    fn actions(&self) -> usize;

    fn forward(&self, demands: &Demands<T>) -> Result<(Array2<T>, Self::Tape)>;

    /// Gradient of `⟨logits, upstream⟩` as a flat vector aligned with
    /// [`flat`](PolicyModel::flat).
    fn grad_flat(&self, tape: &Self::Tape, upstream: &Array2<T>) -> Result<Vec<T>>;

    /// Forward over a whole batch of demand vectors; semantically a map of
    /// [`forward`](PolicyModel::forward), but implementations may fuse the
    /// batch into wider operations.
    fn forward_batch(&self, demands: &[Demands<T>]) -> Result<(Vec<Array2<T>>, Self::BatchTape)>;

    /// Gradient of `Σ_e ⟨logits_e, upstream_e⟩`, flat; semantically the sum
    /// of per-episode [`grad_flat`](PolicyModel::grad_flat) calls.
    fn grad_flat_batch(&self, tape: &Self::BatchTape, upstreams: &[Array2<T>]) -> Result<Vec<T>>;

    fn flat(&self) -> Vec<T>;

    fn set_flat(&mut self, flat: &[T]) -> Result<()>;
}

/// The graph policy: shared filter parameters bound to one topology's shift
/// matrix for the duration of a run.
#[derive(Debug, Clone)]
pub struct GnnPolicy<T: Scalar> {
    pub params: GnnParams<T>,
    pub shift: ShiftMatrix<T>,
}

impl<T: Scalar> GnnPolicy<T> {
    /// Random-initialized policy on `topo` using the architecture's own
    /// normalization tag; initialization draws from the run seed's
    /// dedicated substream.
    pub fn init(topo: &Topology, arch: &GnnArch, seed: u64) -> Result<Self> {
        let shift = ShiftMatrix::build(topo, arch.norm);
        let mut rng = rng::substream(seed, &[seed_tags::INIT]);
        Ok(Self { params: GnnParams::init(arch, &mut rng)?, shift })
    }
}

impl<T: Scalar> PolicyModel<T> for GnnPolicy<T> {
    type Tape = ForwardTape<T>;
    type BatchTape = BatchedTape<T>;

    fn nodes(&self) -> usize {
        self.shift.n()
    }

    fn actions(&self) -> usize {
        self.params.arch.actions
    }

    fn forward(&self, demands: &Demands<T>) -> Result<(Array2<T>, Self::Tape)> {
        gnn_forward(&self.params, &self.shift, demands)
    }

    fn grad_flat(&self, tape: &Self::Tape, upstream: &Array2<T>) -> Result<Vec<T>> {
        Ok(gnn_backward(&self.params, &self.shift, tape, upstream)?.to_flat())
    }

    fn forward_batch(&self, demands: &[Demands<T>]) -> Result<(Vec<Array2<T>>, Self::BatchTape)> {
        gnn_forward_batch(&self.params, &self.shift, demands)
    }

    fn grad_flat_batch(&self, tape: &Self::BatchTape, upstreams: &[Array2<T>]) -> Result<Vec<T>> {
        Ok(gnn_backward_batch(&self.params, &self.shift, tape, upstreams)?.to_flat())
    }

    fn flat(&self) -> Vec<T> {
        self.params.to_flat()
    }

    fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        self.params.set_from_flat(flat)
    }
}

/// Parameter-update rule. The plain step is exactly
/// `θ ← θ − α·g`; the adaptive rule rescales per coordinate by running
/// first/second gradient moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub enum OptimizerSpec<T: Scalar> {
    Sgd { step: T },
    Adam { step: T, beta1: T, beta2: T, epsilon: T },
}

impl<T: Scalar> Default for OptimizerSpec<T> {
    fn default() -> Self {
        OptimizerSpec::Adam {
            step: T::from_f64_exact(1e-3),
            beta1: T::from_f64_exact(0.9),
            beta2: T::from_f64_exact(0.999),
            epsilon: T::from_f64_exact(1e-8),
        }
    }
}

impl<T: Scalar> OptimizerSpec<T> {
    pub fn sgd(step: f64) -> Self {
        OptimizerSpec::Sgd { step: T::from_f64_exact(step) }
    }

    pub fn adam(step: f64) -> Self {
        match Self::default() {
            OptimizerSpec::Adam { beta1, beta2, epsilon, .. } => {
                OptimizerSpec::Adam { step: T::from_f64_exact(step), beta1, beta2, epsilon }
            }
            OptimizerSpec::Sgd { .. } => unreachable!("default is adaptive"),
        }
    }

    pub fn step_size(&self) -> T {
        match *self {
            OptimizerSpec::Sgd { step } | OptimizerSpec::Adam { step, .. } => step,
        }
    }

    fn validate(&self) -> Result<()> {
        let step = self.step_size();
        if !(step.is_finite() && step >= T::zero()) {
            return Err(Error::Config("step size must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Running optimizer state over a flat parameter vector.
pub struct Optimizer<T: Scalar> {
    spec: OptimizerSpec<T>,
    /// First/second moment accumulators (adaptive rule only).
    moments: Option<(Vec<T>, Vec<T>)>,
    steps: u32,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(spec: OptimizerSpec<T>, dim: usize) -> Self {
        let moments = match spec {
            OptimizerSpec::Adam { .. } => Some((vec![T::zero(); dim], vec![T::zero(); dim])),
            OptimizerSpec::Sgd { .. } => None,
        };
        Self { spec, moments, steps: 0 }
    }

    /// One descent step in place.
    pub fn apply(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), grad.len(), "gradient/parameter length");
        match self.spec {
            OptimizerSpec::Sgd { step } => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= step * g;
                }
            }
            OptimizerSpec::Adam { step, beta1, beta2, epsilon } => {
                self.steps += 1;
                let (m, v) = self.moments.as_mut().expect("adaptive state");
                let t = T::from_f64_exact(f64::from(self.steps));
                let c1 = T::one() - beta1.powf(t);
                let c2 = T::one() - beta2.powf(t);
                for i in 0..params.len() {
                    m[i] = beta1 * m[i] + (T::one() - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (T::one() - beta2) * grad[i] * grad[i];
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    params[i] -= step * mhat / (vhat.sqrt() + epsilon);
                }
            }
        }
    }
}

/// Everything a training run depends on besides the topology. Identical
/// (topology, config) pairs produce identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct TrainConfig<T: Scalar> {
    pub iterations: usize,
    /// Episodes per gradient estimate.
    pub batch: usize,
    pub optimizer: OptimizerSpec<T>,
    pub seed: u64,
    pub objective: Objective,
    /// Subtract the batch-mean cost before weighting (variance reduction);
    /// leave off to get the raw unbiased estimator.
    pub baseline: bool,
    pub norm: Normalization,
    pub demands: DemandModel<T>,
    pub space: ActionSpace,
    /// Network shape override; `None` means the standard shape sized to the
    /// action space, with the config's normalization tag.
    #[serde(default)]
    pub arch: Option<GnnArch>,
    /// Run a greedy evaluation every this many iterations (used for early
    /// stopping); `None` disables mid-run evaluation.
    #[serde(default)]
    pub eval_every: Option<usize>,
    /// Demand samples per mid-run evaluation.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    /// Stop once a mid-run evaluation's mean cost reaches this value.
    #[serde(default)]
    pub target_cost: Option<T>,
}

fn default_eval_samples() -> usize {
    200
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(space: ActionSpace) -> Self {
        Self {
            iterations: 500,
            batch: 64,
            optimizer: OptimizerSpec::default(),
            seed: 0,
            objective: Objective::Mean,
            baseline: true,
            norm: Normalization::default(),
            demands: DemandModel::default(),
            space,
            arch: None,
            eval_every: None,
            eval_samples: default_eval_samples(),
            target_cost: None,
        }
    }

    /// Checks the loop parameters only (iterations, batch, optimizer); the
    /// relaxed trainer uses this because its readout width is the channel
    /// count, not the action count.
    pub(crate) fn validate_run(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        self.optimizer.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_run()?;
        if let Some(arch) = &self.arch {
            arch.validate()?;
            if arch.actions != self.space.actions() {
                return Err(Error::Config(format!(
                    "architecture emits {} logits but the action space has {} actions",
                    arch.actions,
                    self.space.actions()
                )));
            }
        }
        Ok(())
    }

    /// The architecture this config trains: the override if present, else
    /// the standard shape sized to the action space.
    pub fn resolved_arch(&self) -> Result<GnnArch> {
        self.validate()?;
        Ok(self.arch.clone().unwrap_or_else(|| {
            let mut arch = GnnArch::standard(self.space.actions());
            arch.norm = self.norm;
            arch
        }))
    }
}

/// One training-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord<T: Scalar> {
    pub iteration: usize,
    pub mean_cost: T,
    pub std_cost: T,
    pub grad_norm: T,
    /// Wall time of the iteration; the only non-deterministic field.
    pub seconds: f64,
}

/// Per-iteration training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory<T: Scalar> {
    pub records: Vec<HistoryRecord<T>>,
}

impl<T: Scalar> Default for TrainHistory<T> {
    fn default() -> Self {
        Self { records: Vec::new() }
    }
}

impl<T: Scalar> TrainHistory<T> {
    pub fn final_mean_cost(&self) -> Option<T> {
        self.records.last().map(|r| r.mean_cost)
    }

    /// CSV with a header row; one line per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,mean_cost,std_cost,grad_norm,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.mean_cost, r.std_cost, r.grad_norm, r.seconds
            ));
        }
        out
    }

    /// The reproducible projection: everything except wall time. Two runs
    /// of the same (topology, config) compare equal here.
    pub fn deterministic_fields(&self) -> Vec<(usize, T, T, T)> {
        self.records
            .iter()
            .map(|r| (r.iteration, r.mean_cost, r.std_cost, r.grad_norm))
            .collect()
    }
}

/// Observer hook, called after every iteration with the fresh record and
/// the current model (for periodic checkpointing or progress display).
pub type Observer<'a, T, P> = &'a mut dyn FnMut(&HistoryRecord<T>, &P);

/// Trains any [`PolicyModel`] with the score-function estimator against an
/// opaque cost callback. This is the shared engine behind the graph policy
/// and the dense centralized baseline: both see the same demand stream and
/// the same action-sampling stream for a given seed.
pub fn train_model<T: Scalar, P: PolicyModel<T>>(
    model: &mut P,
    topo: &Topology,
    cfg: &TrainConfig<T>,
    cost: &dyn CostModel<T>,
    mut observe: Option<Observer<'_, T, P>>,
) -> Result<TrainHistory<T>> {
    cfg.validate()?;
    if model.nodes() != topo.n() {
        return Err(Error::DimensionMismatch(format!(
            "model covers {} nodes, topology has {}",
            model.nodes(),
            topo.n()
        )));
    }
    if model.actions() != cfg.space.actions() {
        return Err(Error::Config(format!(
            "model emits {} logits but the action space has {} actions",
            model.actions(),
            cfg.space.actions()
        )));
    }
    let n = topo.n();
    let mut demand_rng = rng::substream(cfg.seed, &[seed_tags::DEMANDS]);
    let mut action_rng = rng::substream(cfg.seed, &[seed_tags::ACTIONS]);
    let mut flat = model.flat();
    let mut opt = Optimizer::new(cfg.optimizer, flat.len());
    let mut history = TrainHistory::default();
    for iter in 0..cfg.iterations {
        let started = Instant::now();
        // demand draws first (stream order matches the per-episode loop),
        // then one fused forward over the whole batch
        let demands: Vec<_> = (0..cfg.batch).map(|_| cfg.demands.sample(n, &mut demand_rng)).collect();
        let (logits, btape) = model.forward_batch(&demands)?;
        let mut actions = Vec::with_capacity(cfg.batch);
        let mut costs = Vec::with_capacity(cfg.batch);
        for (d, lg) in demands.iter().zip(&logits) {
            let sample = sample_actions(lg, &cfg.space, &mut action_rng)?;
            let u = cost.utilizations(d, topo, &sample.selection);
            let r = cfg.objective.evaluate(d, &u);
            if !r.is_finite() {
                return Err(Error::Diverged {
                    iteration: iter,
                    reason: "non-finite episode cost".into(),
                });
            }
            actions.push(sample.actions);
            costs.push(r);
        }
        let weights = advantage_weights(&costs, cfg.baseline)?;
        // advantage weights fold into the upstreams, so the fused backward
        // yields the full score gradient in one deterministic reduction
        let mut upstreams = Vec::with_capacity(cfg.batch);
        for ((lg, acts), w) in logits.iter().zip(&actions).zip(&weights) {
            let mut up = log_density_upstream(lg, acts)?;
            let w = *w;
            up.mapv_inplace(|v| v * w);
            upstreams.push(up);
        }
        let grad = model.grad_flat_batch(&btape, &upstreams)?;
        let grad_norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::Diverged { iteration: iter, reason: "non-finite gradient".into() });
        }
        opt.apply(&mut flat, &grad);
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: iter, reason: "non-finite parameter".into() });
        }
        model.set_flat(&flat)?;
        let record = HistoryRecord {
            iteration: iter,
            mean_cost: mean(&costs),
            std_cost: sample_std(&costs),
            grad_norm,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(obs) = observe.as_mut() {
            obs(&record, model);
        }
        history.records.push(record);
        // Early stop once a mid-run greedy evaluation reaches the target.
        // The evaluation reuses the seed's evaluation substream — the same
        // draws a post-training evaluation sees — so stopping at a target
        // means the reported metric itself has reached it, and the training
        // streams are never perturbed.
        if let (Some(every), Some(target)) = (cfg.eval_every, cfg.target_cost) {
            if every > 0 && (iter + 1) % every == 0 {
                let report = evaluate_model(
                    model,
                    topo,
                    cfg,
                    cost,
                    cfg.eval_samples,
                    EvalMode::Greedy,
                    cfg.seed,
                )?;
                if report.mean <= target {
                    break;
                }
            }
        }
    }
    Ok(history)
}

/// Trains the graph policy on one topology with the built-in interference
/// cost. Fully reproducible from the arguments.
pub fn train<T: Scalar>(
    topo: &Topology,
    cfg: &TrainConfig<T>,
) -> Result<(GnnParams<T>, TrainHistory<T>)> {
    let arch = cfg.resolved_arch()?;
    let mut policy = GnnPolicy::init(topo, &arch, cfg.seed)?;
    let history = train_model(&mut policy, topo, cfg, &StandardInterference, None)?;
    Ok((policy.params, history))
}

/// Action-selection protocol during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Deterministic per-node argmax.
    #[default]
    Greedy,
    /// Draw actions from the policy distribution.
    Sample,
}

/// Evaluation statistics over freshly drawn demand vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T: Scalar> {
    pub mean: T,
    pub std: T,
    pub costs: Vec<T>,
}

/// Evaluates any policy model over `samples` fresh demand draws from the
/// given seed's evaluation substream.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model<T: Scalar, P: PolicyModel<T>>(
    model: &P,
    topo: &Topology,
    cfg: &TrainConfig<T>,
    cost: &dyn CostModel<T>,
    samples: usize,
    mode: EvalMode,
    seed: u64,
) -> Result<EvalReport<T>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one sample".into()));
    }
    let mut rng = rng::substream(seed, &[seed_tags::EVAL]);
    let mut costs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let d = cfg.demands.sample(topo.n(), &mut rng);
        let (logits, _) = model.forward(&d)?;
        let sample = match mode {
            EvalMode::Greedy => greedy_actions(&logits, &cfg.space)?,
            EvalMode::Sample => sample_actions(&logits, &cfg.space, &mut rng)?,
        };
        let u = cost.utilizations(&d, topo, &sample.selection);
        costs.push(cfg.objective.evaluate(&d, &u));
    }
    Ok(EvalReport { mean: mean(&costs), std: sample_std(&costs), costs })
}

/// Evaluates trained graph-policy parameters with the built-in
/// interference cost, deterministic in `cfg.seed`.
pub fn evaluate<T: Scalar>(
    params: &GnnParams<T>,
    topo: &Topology,
    cfg: &TrainConfig<T>,
    samples: usize,
    mode: EvalMode,
) -> Result<EvalReport<T>> {
    let policy = GnnPolicy { params: clone_for_eval(params, cfg)?, shift: ShiftMatrix::build(topo, params.arch.norm) };
    evaluate_model(&policy, topo, cfg, &StandardInterference, samples, mode, cfg.seed)
}

fn clone_for_eval<T: Scalar>(params: &GnnParams<T>, cfg: &TrainConfig<T>) -> Result<GnnParams<T>> {
    if params.arch.actions != cfg.space.actions() {
        return Err(Error::Config(format!(
            "parameters emit {} logits but the action space has {} actions",
            params.arch.actions,
            cfg.space.actions()
        )));
    }
    Ok(params.clone())
}

pub(crate) fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::from_f64_exact(xs.len() as f64)
}

/// Sample standard deviation (n−1 denominator); zero for fewer than two
/// samples.
pub(crate) fn sample_std<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>()
        / T::from_f64_exact((xs.len() - 1) as f64);
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::Utilizations;

    fn small_cfg(seed: u64) -> TrainConfig<f64> {
        let mut cfg = TrainConfig::new(ActionSpace::subsets(2).unwrap());
        cfg.iterations = 3;
        cfg.batch = 4;
        cfg.seed = seed;
        cfg.arch = Some(GnnArch {
            features: vec![4, 3],
            order: 2,
            nonlinearity: crate::gnn::Nonlinearity::Relu,
            actions: 3,
            bias: true,
            norm: Normalization::MaxDegree,
        });
        cfg
    }

    #[test]
    fn zero_step_is_a_fixed_point() {
        let topo = Topology::gen_er_graph(5, 0.5, 1).unwrap();
        let mut cfg = small_cfg(7);
        cfg.optimizer = OptimizerSpec::sgd(0.0);
        cfg.iterations = 1;
        let arch = cfg.resolved_arch().unwrap();
        let before = GnnPolicy::<f64>::init(&topo, &arch, cfg.seed).unwrap().params;
        let (after, history) = train(&topo, &cfg).unwrap();
        assert_eq!(before.to_flat(), after.to_flat());
        assert_eq!(history.records.len(), 1);
    }

    #[test]
    fn isolated_node_costs_zero_every_iteration() {
        let topo = Topology::from_edges(1, []).unwrap();
        let cfg = small_cfg(3);
        let (_, history) = train(&topo, &cfg).unwrap();
        for r in &history.records {
            assert_eq!(r.mean_cost, 0.0);
            assert_eq!(r.std_cost, 0.0);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let topo = Topology::gen_er_graph(6, 0.4, 9).unwrap();
        let cfg = small_cfg(11);
        let (p1, h1) = train(&topo, &cfg).unwrap();
        let (p2, h2) = train(&topo, &cfg).unwrap();
        assert_eq!(p1.to_flat(), p2.to_flat());
        assert_eq!(h1.deterministic_fields(), h2.deterministic_fields());
    }

    #[test]
    fn different_seeds_diverge() {
        let topo = Topology::gen_er_graph(6, 0.4, 9).unwrap();
        let (p1, _) = train(&topo, &small_cfg(1)).unwrap();
        let (p2, _) = train(&topo, &small_cfg(2)).unwrap();
        assert_ne!(p1.to_flat(), p2.to_flat());
    }

    /// Cost model that returns a constant utilization regardless of the
    /// selection — exercises the model-free boundary.
    struct FlatCost;
    impl CostModel<f64> for FlatCost {
        fn utilizations(
            &self,
            d: &Demands<f64>,
            _topo: &Topology,
            _sel: &crate::interference::ChannelSelection,
        ) -> Utilizations<f64> {
            Utilizations::from_elem(d.len(), 2.0)
        }
    }

    #[test]
    fn mock_cost_model_is_accepted() {
        let topo = Topology::gen_er_graph(4, 0.5, 5).unwrap();
        let cfg = small_cfg(13);
        let arch = cfg.resolved_arch().unwrap();
        let mut policy = GnnPolicy::<f64>::init(&topo, &arch, cfg.seed).unwrap();
        let history = train_model(&mut policy, &topo, &cfg, &FlatCost, None).unwrap();
        // cost = mean(d_i · 2.0), strictly positive with these demands
        assert!(history.records.iter().all(|r| r.mean_cost > 0.0));
    }

    #[test]
    fn evaluation_is_deterministic_and_mode_sensitive() {
        let topo = Topology::gen_er_graph(6, 0.4, 21).unwrap();
        let cfg = small_cfg(17);
        let (params, _) = train(&topo, &cfg).unwrap();
        let a = evaluate(&params, &topo, &cfg, 50, EvalMode::Greedy).unwrap();
        let b = evaluate(&params, &topo, &cfg, 50, EvalMode::Greedy).unwrap();
        assert_eq!(a, b);
        let c = evaluate(&params, &topo, &cfg, 500, EvalMode::Sample).unwrap();
        assert!(c.costs.len() == 500 && c.mean.is_finite());
    }

    #[test]
    fn observer_sees_every_iteration() {
        let topo = Topology::gen_er_graph(4, 0.5, 2).unwrap();
        let cfg = small_cfg(19);
        let arch = cfg.resolved_arch().unwrap();
        let mut policy = GnnPolicy::<f64>::init(&topo, &arch, cfg.seed).unwrap();
        let mut seen = Vec::new();
        let mut obs = |r: &HistoryRecord<f64>, _m: &GnnPolicy<f64>| seen.push(r.iteration);
        train_model(&mut policy, &topo, &cfg, &StandardInterference, Some(&mut obs)).unwrap();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn adam_state_updates_parameters() {
        let mut opt = Optimizer::new(OptimizerSpec::<f64>::default(), 2);
        let mut p = vec![1.0, -1.0];
        opt.apply(&mut p, &[0.5, -0.5]);
        // first adaptive step moves each coordinate by ≈ step (bias-corrected
        // moments cancel the magnitude): 1e-3 · g/|g| up to epsilon
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn early_stopping_halts_on_target() {
        // flat-zero cost model reaches any positive target immediately
        struct ZeroCost;
        impl CostModel<f64> for ZeroCost {
            fn utilizations(
                &self,
                d: &Demands<f64>,
                _topo: &Topology,
                _sel: &crate::interference::ChannelSelection,
            ) -> Utilizations<f64> {
                Utilizations::zeros(d.len())
            }
        }
        let topo = Topology::gen_er_graph(4, 0.5, 3).unwrap();
        let mut cfg = small_cfg(23);
        cfg.iterations = 50;
        cfg.eval_every = Some(1);
        cfg.eval_samples = 5;
        cfg.target_cost = Some(0.01);
        let arch = cfg.resolved_arch().unwrap();
        let mut policy = GnnPolicy::<f64>::init(&topo, &arch, cfg.seed).unwrap();
        let history = train_model(&mut policy, &topo, &cfg, &ZeroCost, None).unwrap();
        assert_eq!(history.records.len(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let space = ActionSpace::subsets(2).unwrap();
        let mut cfg = TrainConfig::<f64>::new(space);
        cfg.iterations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::<f64>::new(space);
        cfg.batch = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::<f64>::new(space);
        cfg.arch = Some(GnnArch::standard(4)); // 4 ≠ 3 actions
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let topo = Topology::gen_er_graph(4, 0.5, 2).unwrap();
        let (_, history) = train(&topo, &small_cfg(29)).unwrap();
        let csv = history.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,mean_cost,std_cost,grad_norm,seconds"));
        assert_eq!(lines.count(), 3);
    }
}
