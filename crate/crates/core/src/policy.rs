//! Factorized per-node action distribution and the score-function gradient.
//!
//! Each node turns its logit row into a categorical distribution by softmax
//! and draws its own action independently, so the joint density factorizes
//! across nodes and every node can sample locally. The learning signal is
//! the likelihood-ratio (score-function) estimator: cost times the gradient
//! of the log-density, needing no derivative of the cost itself.

use crate::error::{Error, Result};
use crate::gnn::{gnn_backward, GnnParams};
use crate::graph::ShiftMatrix;
use crate::interference::{ChannelSelection, MAX_CHANNELS};
use crate::rng;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView1};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

/// How per-node actions map to channel masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    /// Actions index the 2^M − 1 nonempty channel subsets; an AP may occupy
    /// several channels at once.
    #[default]
    Subsets,
    /// Actions index single channels (A = M); kept for comparison runs.
    SingleChannel,
}

/// The per-node action set: M channels and an index↔mask bijection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    channels: usize,
    #[serde(default)]
    mode: ActionMode,
}

/// Widest subset-mode space: 2^16 − 1 actions is already a 65535-wide
/// logit row; anything larger is a configuration mistake.
pub const MAX_SUBSET_CHANNELS: usize = 16;

impl ActionSpace {
    pub fn subsets(channels: usize) -> Result<Self> {
        Self::new(channels, ActionMode::Subsets)
    }

    pub fn single_channel(channels: usize) -> Result<Self> {
        Self::new(channels, ActionMode::SingleChannel)
    }

    pub fn new(channels: usize, mode: ActionMode) -> Result<Self> {
        let limit = match mode {
            ActionMode::Subsets => MAX_SUBSET_CHANNELS,
            ActionMode::SingleChannel => MAX_CHANNELS,
        };
        if channels == 0 || channels > limit {
            return Err(Error::InvalidParameter(format!(
                "channel count must lie in 1..={limit} for {mode:?}, got {channels}"
            )));
        }
        Ok(Self { channels, mode })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn mode(&self) -> ActionMode {
        self.mode
    }

    /// Number of actions A per node.
    pub fn actions(&self) -> usize {
        match self.mode {
            ActionMode::Subsets => (1usize << self.channels) - 1,
            ActionMode::SingleChannel => self.channels,
        }
    }

    /// Channel mask for action index `a`.
    pub fn mask(&self, a: usize) -> Result<u32> {
        if a >= self.actions() {
            return Err(Error::InvalidParameter(format!(
                "action index {a} out of range 0..{}",
                self.actions()
            )));
        }
        Ok(match self.mode {
            ActionMode::Subsets => (a + 1) as u32,
            ActionMode::SingleChannel => 1 << a,
        })
    }

    /// Inverse of [`mask`](ActionSpace::mask); `None` when the mask is not
    /// an encodable action (empty, out of range, or multi-bit in
    /// single-channel mode).
    pub fn index_of_mask(&self, mask: u32) -> Option<usize> {
        match self.mode {
            ActionMode::Subsets => {
                let idx = (mask as usize).checked_sub(1)?;
                (idx < self.actions()).then_some(idx)
            }
            ActionMode::SingleChannel => {
                let c = mask.trailing_zeros() as usize;
                (mask.count_ones() == 1 && c < self.channels).then_some(c)
            }
        }
    }

    /// Builds the selection induced by per-node action indices.
    pub fn selection(&self, actions: &[usize]) -> Result<ChannelSelection> {
        let masks = actions.iter().map(|&a| self.mask(a)).collect::<Result<Vec<_>>>()?;
        ChannelSelection::from_masks(self.channels, masks)
    }
}

/// Subset-mode action encoding: the M-bit mask is the binary expansion of
/// `a + 1`, so index 0 is {channel 0} and index 2^M − 2 is the full set.
pub fn action_to_mask(a: usize, channels: usize) -> Result<u32> {
    ActionSpace::subsets(channels)?.mask(a)
}

/// One sampled joint action: indices, induced selection, per-node log-probs.
#[derive(Debug, Clone)]
pub struct PolicySample<T: Scalar> {
    pub actions: Vec<usize>,
    pub selection: ChannelSelection,
    pub log_probs: Array1<T>,
}

impl<T: Scalar> PolicySample<T> {
    /// Joint log-density: the distribution factorizes across nodes.
    pub fn log_density(&self) -> T {
        self.log_probs.iter().copied().sum()
    }
}

/// Log-softmax of one logit row with max-subtraction stabilization.
fn log_softmax_row<T: Scalar>(row: ArrayView1<T>) -> Result<Array1<T>> {
    let mut max = T::neg_infinity();
    for &z in row.iter() {
        if !z.is_finite() {
            return Err(Error::NonFinite("logit".into()));
        }
        if z > max {
            max = z;
        }
    }
    let shifted = row.mapv(|z| z - max);
    let lse = shifted.iter().map(|&z| z.exp()).sum::<T>().ln();
    Ok(shifted.mapv(|z| z - lse))
}

/// Draws one action per node from the softmax of its logit row.
pub fn sample_actions<T: Scalar>(
    logits: &Array2<T>,
    space: &ActionSpace,
    rng: &mut impl RngCore,
) -> Result<PolicySample<T>> {
    if logits.ncols() != space.actions() {
        return Err(Error::DimensionMismatch(format!(
            "logit rows have {} entries, action space has {}",
            logits.ncols(),
            space.actions()
        )));
    }
    let n = logits.nrows();
    let mut actions = Vec::with_capacity(n);
    let mut log_probs = Array1::zeros(n);
    for i in 0..n {
        let logp = log_softmax_row(logits.row(i))?;
        let u: T = rng::unit_half_open(rng);
        // inverse-CDF walk in action order; rounding can leave the total
        // marginally below u, in which case the last action wins
        let mut acc = T::zero();
        let mut chosen = logp.len() - 1;
        for (a, &lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                chosen = a;
                break;
            }
        }
        actions.push(chosen);
        log_probs[i] = logp[chosen];
    }
    let selection = space.selection(&actions)?;
    Ok(PolicySample { actions, selection, log_probs })
}

/// Greedy decoding: per node the argmax action (lowest index on ties).
pub fn greedy_actions<T: Scalar>(logits: &Array2<T>, space: &ActionSpace) -> Result<PolicySample<T>> {
    if logits.ncols() != space.actions() {
        return Err(Error::DimensionMismatch(format!(
            "logit rows have {} entries, action space has {}",
            logits.ncols(),
            space.actions()
        )));
    }
    let n = logits.nrows();
    let mut actions = Vec::with_capacity(n);
    let mut log_probs = Array1::zeros(n);
    for i in 0..n {
        let logp = log_softmax_row(logits.row(i))?;
        let mut best = 0;
        for a in 1..logp.len() {
            if logp[a] > logp[best] {
                best = a;
            }
        }
        actions.push(best);
        log_probs[i] = logp[best];
    }
    let selection = space.selection(&actions)?;
    Ok(PolicySample { actions, selection, log_probs })
}

/// Joint log-density of the given actions under the given logits:
/// `Σ_i log softmax(logits_i)[a_i]`.
pub fn log_density<T: Scalar>(logits: &Array2<T>, actions: &[usize]) -> Result<T> {
    if actions.len() != logits.nrows() {
        return Err(Error::DimensionMismatch("one action per node required".into()));
    }
    let mut total = T::zero();
    for (i, &a) in actions.iter().enumerate() {
        let logp = log_softmax_row(logits.row(i))?;
        if a >= logp.len() {
            return Err(Error::InvalidParameter(format!("action index {a} out of range")));
        }
        total += logp[a];
    }
    Ok(total)
}

/// Gradient of the joint log-density with respect to the logits: row i is
/// `onehot(a_i) − softmax(logits_i)`. Rows sum to zero, which is what makes
/// the estimator invariant to per-row logit shifts.
pub fn log_density_upstream<T: Scalar>(
    logits: &Array2<T>,
    actions: &[usize],
) -> Result<Array2<T>> {
    if actions.len() != logits.nrows() {
        return Err(Error::DimensionMismatch("one action per node required".into()));
    }
    let mut up = Array2::zeros(logits.dim());
    for (i, &a) in actions.iter().enumerate() {
        let logp = log_softmax_row(logits.row(i))?;
        if a >= logp.len() {
            return Err(Error::InvalidParameter(format!("action index {a} out of range")));
        }
        for (j, &lp) in logp.iter().enumerate() {
            up[[i, j]] = -lp.exp();
        }
        up[[i, a]] += T::one();
    }
    Ok(up)
}

/// One training sample: the forward tape behind the sampled actions and the
/// observed cost. `Tape` is whichever tape type the policy network records.
#[derive(Debug, Clone)]
pub struct Episode<T: Scalar, Tape> {
    pub logits: Array2<T>,
    pub tape: Tape,
    pub actions: Vec<usize>,
    pub cost: T,
}

/// Per-episode weights of the score-function estimator: `(R_τ − b)/T` with
/// `b` the batch-mean cost when the baseline is on, else zero.
pub fn advantage_weights<T: Scalar>(costs: &[T], use_baseline: bool) -> Result<Vec<T>> {
    if costs.is_empty() {
        return Err(Error::InvalidParameter("empty episode batch".into()));
    }
    let t = T::from_f64_exact(costs.len() as f64);
    let b = if use_baseline {
        costs.iter().copied().sum::<T>() / t
    } else {
        T::zero()
    };
    Ok(costs.iter().map(|&r| (r - b) / t).collect())
}

/// Score-function gradient of expected cost for the graph policy:
/// `(1/T) Σ_τ (R_τ − b) ∇ log f_τ`, each `∇ log f_τ` obtained by running
/// the network backward from the log-density gradient of episode τ.
/// Episodes contribute in batch order, so the reduction is deterministic.
pub fn score_gradient<T: Scalar>(
    params: &GnnParams<T>,
    shift: &ShiftMatrix<T>,
    episodes: &[Episode<T, crate::gnn::ForwardTape<T>>],
    use_baseline: bool,
) -> Result<GnnParams<T>> {
    let costs: Vec<T> = episodes.iter().map(|e| e.cost).collect();
    let weights = advantage_weights(&costs, use_baseline)?;
    let mut total = GnnParams::zeros(&params.arch)?;
    let mut total_flat = total.to_flat();
    for (ep, w) in episodes.iter().zip(weights) {
        let upstream = log_density_upstream(&ep.logits, &ep.actions)?;
        let g = gnn_backward(params, shift, &ep.tape, &upstream)?;
        for (acc, gi) in total_flat.iter_mut().zip(g.to_flat()) {
            *acc += w * gi;
        }
    }
    total.set_from_flat(&total_flat)?;
    Ok(total)
}
