//! Comparison policies: uniformly random selection, a centralized dense
//! network trained with the same score-function machinery, and the graph
//! network trained by continuous relaxation of the channel bits.

use crate::error::{Error, Result};
use crate::gnn::{
    gnn_backward, gnn_forward, read_container, write_container, ArchHeader, GnnArch, GnnParams,
    Nonlinearity,
};
use crate::graph::{ShiftMatrix, Topology};
use crate::interference::{
    channel_utilization, ChannelSelection, CostModel, Objective, StandardInterference,
};
use crate::policy::ActionSpace;
use crate::rng;
use crate::scalar::Scalar;
use crate::training::{
    mean, sample_std, seed_tags, train_model, EvalReport, HistoryRecord, PolicyModel, TrainConfig,
    TrainHistory,
};
use crate::traffic::Demands;
use ndarray::{Array1, Array2, Axis};
use rand_core::RngCore;
use std::io::{Read, Write};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Random baseline
// ---------------------------------------------------------------------------

/// Uniformly random selection: each AP draws its action index uniformly
/// over the action set, independently of everything.
pub fn random_policy(
    n: usize,
    space: &ActionSpace,
    rng: &mut impl RngCore,
) -> Result<ChannelSelection> {
    let a = space.actions();
    let actions: Vec<usize> = (0..n).map(|_| rng::uniform_index(rng, a)).collect();
    space.selection(&actions)
}

/// Mean/std cost of the random baseline over `samples` fresh demand draws.
/// The demand stream matches the one greedy model evaluation uses for the
/// same seed; the selections come from a separate substream.
pub fn evaluate_random<T: Scalar>(
    topo: &Topology,
    cfg: &TrainConfig<T>,
    samples: usize,
) -> Result<EvalReport<T>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one sample".into()));
    }
    let cost = StandardInterference;
    let mut demand_rng = rng::substream(cfg.seed, &[seed_tags::EVAL]);
    let mut action_rng = rng::substream(cfg.seed, &[seed_tags::EVAL, seed_tags::ACTIONS]);
    let mut costs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let d = cfg.demands.sample(topo.n(), &mut demand_rng);
        let sel = random_policy(topo.n(), &cfg.space, &mut action_rng)?;
        let u = CostModel::utilizations(&cost, &d, topo, &sel);
        costs.push(cfg.objective.evaluate(&d, &u));
    }
    Ok(EvalReport { mean: mean(&costs), std: sample_std(&costs), costs })
}

// ---------------------------------------------------------------------------
// Centralized dense baseline
// ---------------------------------------------------------------------------

/// Fully connected network mapping the whole demand vector to every node's
/// logits at once. The first dense layer ties outputs to input positions,
/// so this policy is centralized and not permutation-equivariant — it is
/// the upper-baseline counterpart to the graph policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnParams<T: Scalar> {
    /// Layer widths, input first: [n, hidden…, n·A].
    pub widths: Vec<usize>,
    pub nonlinearity: Nonlinearity,
    pub bias: bool,
    /// Weight matrices, shape (out, in), one per consecutive width pair.
    pub weights: Vec<Array2<T>>,
    /// Bias vectors, one per layer; empty when `bias` is off.
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> DnnParams<T> {
    /// Default shape for an n-node policy: two hidden layers of 256.
    pub fn policy_widths(n: usize, actions: usize) -> Vec<usize> {
        vec![n, 256, 256, n * actions]
    }

    fn validate_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("dense network needs positive input/output widths".into()));
        }
        Ok(())
    }

    pub fn zeros(widths: Vec<usize>, nonlinearity: Nonlinearity, bias: bool) -> Result<Self> {
        Self::validate_widths(&widths)?;
        let weights = widths.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let biases = if bias {
            widths[1..].iter().map(|&w| Array1::zeros(w)).collect()
        } else {
            Vec::new()
        };
        Ok(Self { widths, nonlinearity, bias, weights, biases })
    }

    /// Uniform [−√(1/fan_in), √(1/fan_in)] weights, zero biases; draws in
    /// flat parameter order.
    pub fn init(
        widths: Vec<usize>,
        nonlinearity: Nonlinearity,
        bias: bool,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        let mut p = Self::zeros(widths, nonlinearity, bias)?;
        for w in &mut p.weights {
            let a = (T::one() / T::from_f64_exact(w.ncols() as f64)).sqrt();
            for v in w.iter_mut() {
                *v = rng::uniform_symmetric(rng, a);
            }
        }
        Ok(p)
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        let w: usize = self.widths.windows(2).map(|w| w[0] * w[1]).sum();
        let b: usize = if self.bias { self.widths[1..].iter().sum() } else { 0 };
        w + b
    }

    /// Flat vector: per layer the weight matrix (output-major), then its
    /// bias; layers in order.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.layer_count() {
            out.extend(self.weights[l].iter().copied());
            if self.bias {
                out.extend(self.biases[l].iter().copied());
            }
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter().copied();
        for l in 0..self.layer_count() {
            for v in self.weights[l].iter_mut() {
                *v = it.next().expect("counted");
            }
            if self.bias {
                for v in self.biases[l].iter_mut() {
                    *v = it.next().expect("counted");
                }
            }
        }
        Ok(())
    }

    /// Forward pass on one input vector; hidden layers use the configured
    /// nonlinearity, the output layer is linear.
    pub fn forward_vec(&self, x: &Array1<T>) -> Result<(Array1<T>, DnnTape<T>)> {
        if x.len() != self.widths[0] {
            return Err(Error::DimensionMismatch(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.widths[0]
            )));
        }
        let last = self.layer_count() - 1;
        let mut inputs = Vec::with_capacity(self.layer_count());
        let mut pre = Vec::with_capacity(self.layer_count());
        let mut h = x.clone();
        for l in 0..=last {
            let mut z = self.weights[l].dot(&h);
            if self.bias {
                z = z + &self.biases[l];
            }
            inputs.push(h);
            h = if l == last { z.clone() } else { z.mapv(|v| self.nonlinearity.apply(v)) };
            pre.push(z);
        }
        Ok((h, DnnTape { inputs, pre }))
    }

    /// Gradient of `⟨output, upstream⟩` in flat order.
    pub fn backward_vec(&self, tape: &DnnTape<T>, upstream: &Array1<T>) -> Result<Vec<T>> {
        let last = self.layer_count() - 1;
        if tape.pre.len() != self.layer_count() || upstream.len() != *self.widths.last().unwrap() {
            return Err(Error::DimensionMismatch("tape does not match network".into()));
        }
        let mut grads_w: Vec<Array2<T>> = Vec::with_capacity(self.layer_count());
        let mut grads_b: Vec<Array1<T>> = Vec::with_capacity(self.layer_count());
        let mut g = upstream.clone();
        for l in (0..=last).rev() {
            let gz = if l == last {
                g
            } else {
                let mut gz = g;
                gz.zip_mut_with(&tape.pre[l], |gi, &z| *gi *= self.nonlinearity.derivative(z));
                gz
            };
            let gw = gz
                .view()
                .insert_axis(Axis(1))
                .dot(&tape.inputs[l].view().insert_axis(Axis(0)));
            grads_w.push(gw);
            grads_b.push(gz.clone());
            g = self.weights[l].t().dot(&gz);
        }
        grads_w.reverse();
        grads_b.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for l in 0..=last {
            flat.extend(grads_w[l].iter().copied());
            if self.bias {
                flat.extend(grads_b[l].iter().copied());
            }
        }
        Ok(flat)
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Intermediates of one dense forward pass.
#[derive(Debug, Clone)]
pub struct DnnTape<T: Scalar> {
    /// Input vector of each layer (h_0 is the network input).
    inputs: Vec<Array1<T>>,
    /// Pre-activation of each layer.
    pre: Vec<Array1<T>>,
}

/// Intermediates of one batched dense forward pass; episode `b` is row `b`
/// of every matrix.
#[derive(Debug, Clone)]
pub struct DnnBatchTape<T: Scalar> {
    inputs: Vec<Array2<T>>,
    pre: Vec<Array2<T>>,
}

impl<T: Scalar> DnnParams<T> {
    /// Forward pass over a batch of inputs stacked as matrix rows;
    /// equivalent to mapping [`forward_vec`](DnnParams::forward_vec) but
    /// runs each layer as a single matrix product.
    pub fn forward_batch(&self, x: &Array2<T>) -> Result<(Array2<T>, DnnBatchTape<T>)> {
        if x.ncols() != self.widths[0] {
            return Err(Error::DimensionMismatch(format!(
                "input rows have {} entries, network expects {}",
                x.ncols(),
                self.widths[0]
            )));
        }
        let last = self.layer_count() - 1;
        let mut inputs = Vec::with_capacity(self.layer_count());
        let mut pre = Vec::with_capacity(self.layer_count());
        let mut h = x.clone();
        for l in 0..=last {
            let mut z = h.dot(&self.weights[l].t());
            if self.bias {
                z = z + &self.biases[l].view().insert_axis(Axis(0));
            }
            inputs.push(h);
            h = if l == last { z.clone() } else { z.mapv(|v| self.nonlinearity.apply(v)) };
            pre.push(z);
        }
        Ok((h, DnnBatchTape { inputs, pre }))
    }

    /// Gradient of `Σ_b ⟨output_b, upstream_b⟩` in flat order; the batch
    /// sum happens inside the per-layer matrix products.
    pub fn backward_batch(&self, tape: &DnnBatchTape<T>, upstream: &Array2<T>) -> Result<Vec<T>> {
        let last = self.layer_count() - 1;
        if tape.pre.len() != self.layer_count()
            || upstream.ncols() != *self.widths.last().unwrap()
            || upstream.nrows() != tape.pre[0].nrows()
        {
            return Err(Error::DimensionMismatch("batched tape does not match network".into()));
        }
        let mut grads_w: Vec<Array2<T>> = Vec::with_capacity(self.layer_count());
        let mut grads_b: Vec<Array1<T>> = Vec::with_capacity(self.layer_count());
        let mut g = upstream.clone();
        for l in (0..=last).rev() {
            let gz = if l == last {
                g
            } else {
                let mut gz = g;
                gz.zip_mut_with(&tape.pre[l], |gi, &z| *gi *= self.nonlinearity.derivative(z));
                gz
            };
            grads_w.push(gz.t().dot(&tape.inputs[l]));
            grads_b.push(gz.sum_axis(Axis(0)));
            g = gz.dot(&self.weights[l]);
        }
        grads_w.reverse();
        grads_b.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for l in 0..=last {
            flat.extend(grads_w[l].iter().copied());
            if self.bias {
                flat.extend(grads_b[l].iter().copied());
            }
        }
        Ok(flat)
    }
}

/// The dense network acting as an n-node policy: the flat output is read
/// node-major as an n×A logit matrix.
#[derive(Debug, Clone)]
pub struct DnnPolicy<T: Scalar> {
    pub params: DnnParams<T>,
    n: usize,
    actions: usize,
}

impl<T: Scalar> DnnPolicy<T> {
    pub fn new(params: DnnParams<T>, n: usize, actions: usize) -> Result<Self> {
        if params.widths[0] != n || *params.widths.last().unwrap() != n * actions {
            return Err(Error::Config(format!(
                "dense widths {:?} do not map {n} demands to {n}×{actions} logits",
                params.widths
            )));
        }
        Ok(Self { params, n, actions })
    }

    /// Random-initialized default-width policy for one topology, drawing
    /// from the run seed's initialization substream.
    pub fn init(topo: &Topology, space: &ActionSpace, seed: u64) -> Result<Self> {
        let n = topo.n();
        let a = space.actions();
        let mut rng = rng::substream(seed, &[seed_tags::INIT]);
        let params = DnnParams::init(
            DnnParams::<T>::policy_widths(n, a),
            Nonlinearity::Relu,
            true,
            &mut rng,
        )?;
        Self::new(params, n, a)
    }
}

impl<T: Scalar> PolicyModel<T> for DnnPolicy<T> {
    type Tape = DnnTape<T>;
    type BatchTape = DnnBatchTape<T>;

    fn nodes(&self) -> usize {
        self.n
    }

    fn actions(&self) -> usize {
        self.actions
    }

    fn forward(&self, demands: &Demands<T>) -> Result<(Array2<T>, Self::Tape)> {
        let (out, tape) = self.params.forward_vec(demands)?;
        let logits = Array2::from_shape_vec((self.n, self.actions), out.to_vec())
            .expect("output width checked at construction");
        Ok((logits, tape))
    }

    fn grad_flat(&self, tape: &Self::Tape, upstream: &Array2<T>) -> Result<Vec<T>> {
        let flat_up = Array1::from_iter(upstream.iter().copied());
        self.params.backward_vec(tape, &flat_up)
    }

    fn forward_batch(&self, demands: &[Demands<T>]) -> Result<(Vec<Array2<T>>, Self::BatchTape)> {
        if demands.is_empty() {
            return Err(Error::InvalidParameter("batched forward needs at least one signal".into()));
        }
        let mut x = Array2::zeros((demands.len(), self.n));
        for (row, d) in demands.iter().enumerate() {
            if d.len() != self.n {
                return Err(Error::DimensionMismatch(format!(
                    "every demand vector must have one entry per node ({})",
                    self.n
                )));
            }
            x.row_mut(row).assign(d);
        }
        let (out, tape) = self.params.forward_batch(&x)?;
        let logits = demands
            .iter()
            .enumerate()
            .map(|(b, _)| {
                Array2::from_shape_vec((self.n, self.actions), out.row(b).to_vec())
                    .expect("output width checked at construction")
            })
            .collect();
        Ok((logits, tape))
    }

    fn grad_flat_batch(&self, tape: &Self::BatchTape, upstreams: &[Array2<T>]) -> Result<Vec<T>> {
        let width = self.n * self.actions;
        let mut up = Array2::zeros((upstreams.len(), width));
        for (row, u) in upstreams.iter().enumerate() {
            if u.dim() != (self.n, self.actions) {
                return Err(Error::DimensionMismatch("upstream shape mismatch".into()));
            }
            for (dst, &src) in up.row_mut(row).iter_mut().zip(u.iter()) {
                *dst = src;
            }
        }
        self.params.backward_batch(tape, &up)
    }

    fn flat(&self) -> Vec<T> {
        self.params.to_flat()
    }

    fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        self.params.set_from_flat(flat)
    }
}

/// Trains the centralized dense baseline with the identical score-function
/// machinery and cost callback as the graph policy; for a given seed both
/// consume the same demand and action streams.
pub fn dnn_train<T: Scalar>(
    topo: &Topology,
    cfg: &TrainConfig<T>,
) -> Result<(DnnParams<T>, TrainHistory<T>)> {
    let mut policy = DnnPolicy::init(topo, &cfg.space, cfg.seed)?;
    let history = train_model(&mut policy, topo, cfg, &StandardInterference, None)?;
    Ok((policy.params, history))
}

/// Writes dense-network parameters into the shared checkpoint container
/// (distinguished from graph checkpoints by the header's kind tag).
pub fn serialize_dnn_params<T: Scalar, W: Write>(w: &mut W, params: &DnnParams<T>) -> Result<()> {
    let header = ArchHeader::Dnn {
        widths: params.widths.clone(),
        nonlinearity: params.nonlinearity,
        bias: params.bias,
    };
    let flat = params.to_flat();
    write_container(w, &header, flat.iter().map(|v| v.to_f64().expect("finite parameter")))
}

pub fn deserialize_dnn_params<T: Scalar, R: Read>(r: &mut R) -> Result<DnnParams<T>> {
    let (header, values) = read_container(r)?;
    let ArchHeader::Dnn { widths, nonlinearity, bias } = header else {
        return Err(Error::Checkpoint("expected a dense-network header".into()));
    };
    let mut params = DnnParams::zeros(widths, nonlinearity, bias)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let flat: Vec<T> = values.iter().map(|&v| T::from_f64_exact(v)).collect();
    params.set_from_flat(&flat)?;
    if !params.all_finite() {
        return Err(Error::Checkpoint("non-finite parameter in payload".into()));
    }
    Ok(params)
}

/// Either kind of trained policy, as stored in a checkpoint.
#[derive(Debug, Clone)]
pub enum Checkpoint<T: Scalar> {
    Graph(GnnParams<T>),
    Dense(DnnParams<T>),
}

/// Reads a checkpoint of either kind, dispatching on the header tag.
pub fn deserialize_checkpoint<T: Scalar, R: Read>(r: &mut R) -> Result<Checkpoint<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::Checkpoint(format!("read: {e}")))?;
    let (header, _) = read_container(&mut buf.as_slice())?;
    match header {
        ArchHeader::Gnn { .. } => {
            Ok(Checkpoint::Graph(crate::gnn::deserialize_params(&mut buf.as_slice())?))
        }
        ArchHeader::Dnn { .. } => Ok(Checkpoint::Dense(deserialize_dnn_params(&mut buf.as_slice())?)),
    }
}

// ---------------------------------------------------------------------------
// Continuous-relaxation baseline
// ---------------------------------------------------------------------------

/// Floor on the soft channel count, keeping the load split finite when a
/// node's soft bits all collapse toward zero.
pub const SOFT_COUNT_FLOOR: f64 = 1e-6;

/// Numerically safe logistic squash into (0, 1).
fn logistic<T: Scalar>(y: T) -> T {
    if y >= T::zero() {
        T::one() / (T::one() + (-y).exp())
    } else {
        let e = y.exp();
        e / (T::one() + e)
    }
}

/// Soft channel bits: the logistic of each per-(node, channel) output.
pub fn soft_bits<T: Scalar>(outputs: &Array2<T>) -> Array2<T> {
    outputs.mapv(logistic)
}

/// Differentiable surrogate of the interference objective on soft bits
/// c̃ ∈ (0,1), and its gradient with respect to those bits.
///
/// The load split uses the soft channel count M̃_j = Σ_ℓ c̃_jℓ floored at
/// [`SOFT_COUNT_FLOOR`]; while a floor is active its derivative is zero.
/// The per-node worst channel and (for the max objective) the worst node
/// stay hard maxima — the subgradient is routed entirely to the attaining
/// channel/node, lowest index on ties. At 0/1 vertices the surrogate equals
/// the discrete objective exactly.
pub fn soft_cost_and_grad<T: Scalar>(
    demands: &Demands<T>,
    topo: &Topology,
    ctilde: &Array2<T>,
    objective: Objective,
) -> Result<(T, Array2<T>)> {
    let n = topo.n();
    let m = ctilde.ncols();
    if ctilde.nrows() != n || demands.len() != n {
        return Err(Error::DimensionMismatch("soft bits must be n×M".into()));
    }
    let floor = T::from_f64_exact(SOFT_COUNT_FLOOR);
    // soft counts M̃_j (floored), load shares s_j = d_j / M̃_j, and whether
    // the floor is inactive (gradient flows through the count only then)
    let mut count = Array1::zeros(n);
    let mut share = Array1::zeros(n);
    let mut live = vec![false; n];
    for j in 0..n {
        let raw = ctilde.row(j).sum();
        count[j] = if raw > floor { raw } else { floor };
        live[j] = raw > floor;
        share[j] = demands[j] / count[j];
    }
    // per-node worst channel of the soft interference
    let mut u = Array1::zeros(n);
    let mut worst_channel = vec![0usize; n];
    for i in 0..n {
        let mut best = T::neg_infinity();
        for l in 0..m {
            let neigh: T = topo.neighbors(i).iter().map(|&j| ctilde[[j, l]] * share[j]).sum();
            let v = ctilde[[i, l]] * neigh;
            if v > best {
                best = v;
                worst_channel[i] = l;
            }
        }
        u[i] = best;
    }
    // objective value and the per-node weight its subgradient assigns
    let n_t = T::from_f64_exact(n as f64);
    let mut weights = Array1::zeros(n);
    let cost = match objective {
        Objective::Mean => {
            for i in 0..n {
                weights[i] = demands[i] / n_t;
            }
            demands.iter().zip(u.iter()).map(|(&d, &ui)| d * ui).sum::<T>() / n_t
        }
        Objective::Max => {
            let mut best = T::neg_infinity();
            let mut arg = 0;
            for i in 0..n {
                let v = demands[i] * u[i];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            weights[arg] = demands[arg];
            best
        }
    };
    // gradient: for each node i with worst channel ℓ and weight w_i,
    //   u_i = c̃_iℓ Σ_{j∈N(i)} c̃_jℓ d_j/M̃_j
    // contributes through c̃_iℓ, each neighbor's c̃_jℓ, and each neighbor's
    // soft count (all of that neighbor's channels)
    let mut grad = Array2::zeros((n, m));
    for i in 0..n {
        let w = weights[i];
        if w == T::zero() {
            continue;
        }
        let l = worst_channel[i];
        let neigh: T = topo.neighbors(i).iter().map(|&j| ctilde[[j, l]] * share[j]).sum();
        grad[[i, l]] += w * neigh;
        for &j in topo.neighbors(i) {
            grad[[j, l]] += w * ctilde[[i, l]] * share[j];
            if live[j] {
                // d(1/M̃_j)/dc̃_jq = −1/M̃_j² for every channel q
                let through_count =
                    w * ctilde[[i, l]] * ctilde[[j, l]] * demands[j] / (count[j] * count[j]);
                for q in 0..m {
                    grad[[j, q]] -= through_count;
                }
            }
        }
    }
    Ok((cost, grad))
}

/// Quantizes soft bits to a hard selection: a channel is kept when its bit
/// reaches 0.5; a node whose bits all fall below takes its single largest
/// bit (lowest channel on ties).
pub fn quantize_soft_bits<T: Scalar>(ctilde: &Array2<T>) -> Result<ChannelSelection> {
    let half = T::from_f64_exact(0.5);
    let m = ctilde.ncols();
    let mut masks = Vec::with_capacity(ctilde.nrows());
    for row in ctilde.rows() {
        let mut mask = 0u32;
        for (l, &c) in row.iter().enumerate() {
            if c >= half {
                mask |= 1 << l;
            }
        }
        if mask == 0 {
            let mut best = 0;
            for l in 1..m {
                if row[l] > row[best] {
                    best = l;
                }
            }
            mask = 1 << best;
        }
        masks.push(mask);
    }
    ChannelSelection::from_masks(m, masks)
}

/// Resolves the relaxed trainer's architecture: the readout emits one
/// output per channel (not per subset action).
fn relaxed_arch<T: Scalar>(cfg: &TrainConfig<T>) -> Result<GnnArch> {
    let m = cfg.space.channels();
    match &cfg.arch {
        None => {
            let mut arch = GnnArch::standard(m);
            arch.norm = cfg.norm;
            Ok(arch)
        }
        Some(a) if a.actions == m => Ok(a.clone()),
        Some(a) => Err(Error::Config(format!(
            "relaxed training needs one output per channel ({m}), architecture has {}",
            a.actions
        ))),
    }
}

/// Trains the graph network by gradient descent through the analytic soft
/// objective (model-based by construction: it differentiates the
/// interference formula instead of sampling it).
///
/// History records report the quantized discrete cost of the batch — the
/// deployable performance at that iteration — while gradients follow the
/// soft surrogate; `grad_norm` is the surrogate gradient's norm.
pub fn relaxed_gnn_train<T: Scalar>(
    topo: &Topology,
    cfg: &TrainConfig<T>,
) -> Result<(GnnParams<T>, TrainHistory<T>)> {
    cfg.validate_run()?;
    let arch = relaxed_arch(cfg)?;
    let shift = ShiftMatrix::build(topo, arch.norm);
    let mut init_rng = rng::substream(cfg.seed, &[seed_tags::INIT]);
    let mut params = GnnParams::init(&arch, &mut init_rng)?;
    let mut demand_rng = rng::substream(cfg.seed, &[seed_tags::DEMANDS]);
    let n = topo.n();
    let mut flat = params.to_flat();
    let mut opt = crate::training::Optimizer::new(cfg.optimizer, flat.len());
    let batch_t = T::from_f64_exact(cfg.batch as f64);
    let mut history = TrainHistory::default();
    for iter in 0..cfg.iterations {
        let started = Instant::now();
        let mut grad = vec![T::zero(); flat.len()];
        let mut hard_costs = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let d = cfg.demands.sample(n, &mut demand_rng);
            let (outputs, tape) = gnn_forward(&params, &shift, &d)?;
            let ctilde = soft_bits(&outputs);
            let (soft, soft_grad) = soft_cost_and_grad(&d, topo, &ctilde, cfg.objective)?;
            if !soft.is_finite() {
                return Err(Error::Diverged {
                    iteration: iter,
                    reason: "non-finite surrogate cost".into(),
                });
            }
            // chain through the logistic: dc̃/dy = c̃(1−c̃)
            let mut upstream = soft_grad;
            upstream.zip_mut_with(&ctilde, |g, &c| *g *= c * (T::one() - c));
            let g = gnn_backward(&params, &shift, &tape, &upstream)?.to_flat();
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += gi / batch_t;
            }
            let sel = quantize_soft_bits(&ctilde)?;
            let u = channel_utilization(&d, topo, &sel)?;
            hard_costs.push(cfg.objective.evaluate(&d, &u));
        }
        let grad_norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::Diverged { iteration: iter, reason: "non-finite gradient".into() });
        }
        opt.apply(&mut flat, &grad);
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: iter, reason: "non-finite parameter".into() });
        }
        params.set_from_flat(&flat)?;
        history.records.push(HistoryRecord {
            iteration: iter,
            mean_cost: mean(&hard_costs),
            std_cost: sample_std(&hard_costs),
            grad_norm,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, history))
}

/// Evaluates relaxation-trained parameters: squash, quantize, score with
/// the discrete objective. Deterministic in `cfg.seed` (no action
/// sampling); the demand stream matches greedy model evaluation.
pub fn evaluate_relaxed<T: Scalar>(
    params: &GnnParams<T>,
    topo: &Topology,
    cfg: &TrainConfig<T>,
    samples: usize,
) -> Result<EvalReport<T>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one sample".into()));
    }
    if params.arch.actions != cfg.space.channels() {
        return Err(Error::Config(format!(
            "relaxed parameters emit {} outputs but the space has {} channels",
            params.arch.actions,
            cfg.space.channels()
        )));
    }
    let shift = ShiftMatrix::build(topo, params.arch.norm);
    let mut rng = rng::substream(cfg.seed, &[seed_tags::EVAL]);
    let mut costs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let d = cfg.demands.sample(topo.n(), &mut rng);
        let (outputs, _) = gnn_forward(params, &shift, &d)?;
        let sel = quantize_soft_bits(&soft_bits(&outputs))?;
        let u = channel_utilization(&d, topo, &sel)?;
        costs.push(cfg.objective.evaluate(&d, &u));
    }
    Ok(EvalReport { mean: mean(&costs), std: sample_std(&costs), costs })
}
