//! Graph convolutional filters, the layered GNN with a per-node logit
//! readout, and exact reverse-mode gradients for that architecture.
//!
//! A filter applies a polynomial of the shift matrix to a node signal,
//! `Σ_{k=0}^K h_k S^k x`, evaluated iteratively so `S^k` is never formed.
//! A layer runs a bank of such filters between feature channels followed by
//! a pointwise nonlinearity. The final layer's features feed a per-node
//! shared linear map (an order-0 filter bank) producing one logit per
//! action; that readout head is the only part of the architecture that is
//! not a graph filter, and it mixes nothing across nodes, so the stack stays
//! permutation-equivariant and every node can evaluate its own output from
//! `L·K`-hop information.

use crate::error::{Error, Result};
use crate::graph::{Normalization, ShiftMatrix};
use crate::rng;
use crate::scalar::Scalar;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, Axis};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Pointwise activation applied after each filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Relu,
    /// No-op activation; turns the network linear for analysis and tests.
    Identity,
}

impl Nonlinearity {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Nonlinearity::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Nonlinearity::Identity => z,
        }
    }

    /// Derivative at `z`; the ReLU kink at exactly 0 uses subgradient 0.
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Nonlinearity::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Nonlinearity::Identity => T::one(),
        }
    }
}

impl std::fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Identity => "identity",
        })
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Nonlinearity::Relu),
            "identity" => Ok(Nonlinearity::Identity),
            other => Err(Error::InvalidParameter(format!(
                "unknown nonlinearity '{other}'"
            ))),
        }
    }
}

/// Network shape: layer widths, filter order, activation, and readout.
///
/// The input is always a single feature per node (the demand scalar), so
/// `features` lists the widths of layers 1..=L only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnArch {
    /// Filter counts F_1..F_L; the layer count L is the length.
    pub features: Vec<usize>,
    /// Filter order K: each filter carries K+1 taps and reaches K hops.
    pub order: usize,
    pub nonlinearity: Nonlinearity,
    /// Readout width A: number of per-node action logits.
    pub actions: usize,
    /// Whether the readout adds a per-action bias.
    pub bias: bool,
    /// Shift normalization the parameters were trained against; recorded in
    /// checkpoints so a loaded model is evaluated on the same operator.
    pub norm: Normalization,
}

impl GnnArch {
    /// The default shape: 4 layers of 32, 64, 64, 32 order-3 filters with
    /// ReLU, and a biased readout of width `actions`.
    pub fn standard(actions: usize) -> Self {
        Self {
            features: vec![32, 64, 64, 32],
            order: 3,
            nonlinearity: Nonlinearity::Relu,
            actions,
            bias: true,
            norm: Normalization::default(),
        }
    }

    pub fn layers(&self) -> usize {
        self.features.len()
    }

    /// Feature width entering layer `l` (0-based); F_0 = 1.
    pub fn input_width(&self, l: usize) -> usize {
        if l == 0 {
            1
        } else {
            self.features[l - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.features.iter().any(|&f| f == 0) {
            return Err(Error::Config("zero-width layer".into()));
        }
        if self.actions == 0 {
            return Err(Error::Config("readout needs at least one action".into()));
        }
        Ok(())
    }

    /// Total learnable scalar count:
    /// `Σ_ℓ F_{ℓ−1}·F_ℓ·(K+1) + F_L·A (+ A)`.
    pub fn param_count(&self) -> usize {
        let taps: usize = (0..self.layers())
            .map(|l| self.input_width(l) * self.features[l] * (self.order + 1))
            .sum();
        let f_last = *self.features.last().expect("validated arch");
        taps + f_last * self.actions + if self.bias { self.actions } else { 0 }
    }
}

/// All learnable parameters: per-layer filter taps plus the readout map.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams<T: Scalar> {
    pub arch: GnnArch,
    /// One tensor per layer, shape (F_out, F_in, K+1): `taps[l][[f, g, k]]`
    /// is tap k of the filter from input feature g to output feature f.
    pub taps: Vec<Array3<T>>,
    /// Readout weights, shape (A, F_L): row a maps the final feature vector
    /// of a node to that node's logit for action a.
    pub readout_w: Array2<T>,
    /// Readout bias, length A; present iff `arch.bias`.
    pub readout_b: Option<Array1<T>>,
}

impl<T: Scalar> GnnParams<T> {
    /// All-zero parameters of the given shape.
    pub fn zeros(arch: &GnnArch) -> Result<Self> {
        arch.validate()?;
        let taps = (0..arch.layers())
            .map(|l| Array3::zeros((arch.features[l], arch.input_width(l), arch.order + 1)))
            .collect();
        let f_last = *arch.features.last().expect("validated arch");
        Ok(Self {
            arch: arch.clone(),
            taps,
            readout_w: Array2::zeros((arch.actions, f_last)),
            readout_b: arch.bias.then(|| Array1::zeros(arch.actions)),
        })
    }

    /// Random initialization: taps uniform on [−a, a] with
    /// a = √(1/(F_in·(K+1))), readout likewise with fan-in F_L, biases zero.
    /// The scaling keeps layer output variance bounded under a normalized
    /// shift. Draws happen in flat parameter order, so the result is a pure
    /// function of the stream state.
    pub fn init(arch: &GnnArch, rng: &mut impl RngCore) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let k1 = T::from_f64_exact((arch.order + 1) as f64);
        for (l, taps) in p.taps.iter_mut().enumerate() {
            let fan_in = T::from_f64_exact(arch.input_width(l) as f64);
            let a = (T::one() / (fan_in * k1)).sqrt();
            for v in taps.iter_mut() {
                *v = rng::uniform_symmetric(rng, a);
            }
        }
        let f_last = *arch.features.last().expect("validated arch");
        let a = (T::one() / T::from_f64_exact(f_last as f64)).sqrt();
        for v in p.readout_w.iter_mut() {
            *v = rng::uniform_symmetric(rng, a);
        }
        Ok(p)
    }

    /// Flat parameter vector in serialization order: layers in order, each
    /// output-major / input-minor / tap-minor, then readout weights
    /// (action-major), then bias.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.arch.param_count());
        for taps in &self.taps {
            out.extend(taps.iter().copied());
        }
        out.extend(self.readout_w.iter().copied());
        if let Some(b) = &self.readout_b {
            out.extend(b.iter().copied());
        }
        out
    }

    /// Overwrites every parameter from a flat vector in [`to_flat`] order.
    ///
    /// [`to_flat`]: GnnParams::to_flat
    pub fn set_from_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.arch.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has {} entries, architecture has {}",
                flat.len(),
                self.arch.param_count()
            )));
        }
        let mut it = flat.iter().copied();
        for taps in &mut self.taps {
            for v in taps.iter_mut() {
                *v = it.next().expect("counted");
            }
        }
        for v in self.readout_w.iter_mut() {
            *v = it.next().expect("counted");
        }
        if let Some(b) = &mut self.readout_b {
            for v in b.iter_mut() {
                *v = it.next().expect("counted");
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.taps.iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.readout_w.iter().all(|v| v.is_finite())
            && self.readout_b.iter().flatten().all(|v| v.is_finite())
    }
}

/// Recorded intermediates from one forward pass: per layer the shifted
/// signal stack {S^k x} and the pre-activation, plus the final features and
/// logits. Together with the parameters and shift that produced it, this is
/// sufficient to replay the exact gradient.
#[derive(Debug, Clone)]
pub struct ForwardTape<T: Scalar> {
    n: usize,
    /// Per layer: shifted input stacks, index k holds S^k X_{ℓ−1} (n×F_in).
    shifted: Vec<Vec<Array2<T>>>,
    /// Per layer: pre-activation Z_ℓ (n×F_out).
    pre: Vec<Array2<T>>,
    /// Post-activation features of the last layer (n×F_L).
    features_out: Array2<T>,
    /// Readout output (n×A).
    pub logits: Array2<T>,
}

impl<T: Scalar> ForwardTape<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Smallest |pre-activation| across all layers: the distance to the
    /// nearest activation kink. Finite-difference gradient checks need this
    /// comfortably larger than the probe step, otherwise the two-sided
    /// difference straddles a non-smooth point and measures nothing.
    pub fn min_abs_preactivation(&self) -> T {
        let mut min = T::infinity();
        for z in &self.pre {
            for &v in z.iter() {
                if v.abs() < min {
                    min = v.abs();
                }
            }
        }
        min
    }
}

/// One graph convolutional filter: `Σ_{k=0}^K taps[k] · S^k x`, evaluated
/// by iterated shifting (z_{k} = S z_{k−1}); `S^k` is never materialized.
pub fn gcf_apply<T: Scalar>(taps: &[T], s: &ShiftMatrix<T>, x: &Array1<T>) -> Result<Array1<T>> {
    if taps.is_empty() {
        return Err(Error::InvalidParameter("filter needs at least one tap".into()));
    }
    let mut z = x.clone();
    let mut out = x.mapv(|v| v * taps[0]);
    for &h in &taps[1..] {
        z = s.apply(z.view())?;
        out.zip_mut_with(&z, |o, &zi| *o += h * zi);
    }
    Ok(out)
}

/// Full forward pass on demand signal `x0` (one feature per node), given
/// a shift matrix built on the same topology. Returns per-node action
/// logits and the tape for the backward pass.
pub fn gnn_forward<T: Scalar>(
    params: &GnnParams<T>,
    s: &ShiftMatrix<T>,
    x0: &Array1<T>,
) -> Result<(Array2<T>, ForwardTape<T>)> {
    let arch = &params.arch;
    arch.validate()?;
    let n = s.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "signal has {} entries, shift has {n} nodes",
            x0.len()
        )));
    }
    let mut x = x0.view().insert_axis(Axis(1)).to_owned();
    let mut shifted = Vec::with_capacity(arch.layers());
    let mut pre = Vec::with_capacity(arch.layers());
    for (l, taps) in params.taps.iter().enumerate() {
        let (f_out, f_in) = (arch.features[l], arch.input_width(l));
        if taps.dim() != (f_out, f_in, arch.order + 1) || x.ncols() != f_in {
            return Err(Error::Config(format!(
                "layer {l} tensor shape {:?} does not match architecture",
                taps.dim()
            )));
        }
        // stack of shifted inputs: S^0 X, S^1 X, ..., S^K X
        let mut stack = Vec::with_capacity(arch.order + 1);
        stack.push(x);
        for k in 1..=arch.order {
            let next = s.apply_matrix(stack[k - 1].view())?;
            stack.push(next);
        }
        // Z = Σ_k (S^k X) H_k^T, summed in tap order
        let mut z = Array2::zeros((n, f_out));
        for (k, xs) in stack.iter().enumerate() {
            let h_k = taps.index_axis(Axis(2), k);
            z = z + xs.dot(&h_k.t());
        }
        x = z.mapv(|v| arch.nonlinearity.apply(v));
        shifted.push(stack);
        pre.push(z);
    }
    if params.readout_w.dim() != (arch.actions, x.ncols()) {
        return Err(Error::Config("readout shape does not match architecture".into()));
    }
    let mut logits = x.dot(&params.readout_w.t());
    if let Some(b) = &params.readout_b {
        logits = logits + &b.view().insert_axis(Axis(0));
    }
    Ok((
        logits.clone(),
        ForwardTape { n, shifted, pre, features_out: x, logits },
    ))
}

/// Reverse-mode gradient of `⟨logits, upstream⟩` with respect to every
/// parameter, replayed from the tape of the matching forward call.
///
/// `params` and `s` must be the exact values used in that forward pass
/// (shape mismatches are detected; value mismatches are a contract
/// violation this function cannot see). The adjoint of the shift recursion
/// uses the symmetry of `S` — undirected topology, scalar scale — so the
/// same `apply` serves in both directions.
pub fn gnn_backward<T: Scalar>(
    params: &GnnParams<T>,
    s: &ShiftMatrix<T>,
    tape: &ForwardTape<T>,
    upstream: &Array2<T>,
) -> Result<GnnParams<T>> {
    let arch = &params.arch;
    if tape.n != s.n()
        || tape.pre.len() != arch.layers()
        || upstream.dim() != (tape.n, arch.actions)
        || tape.features_out.ncols() != *arch.features.last().expect("validated arch")
    {
        return Err(Error::DimensionMismatch(
            "tape does not match parameters/shift/upstream".into(),
        ));
    }
    let mut grad = GnnParams::zeros(arch)?;
    // readout: logits = X_L W^T + b
    grad.readout_w = upstream.t().dot(&tape.features_out);
    if let Some(gb) = &mut grad.readout_b {
        *gb = upstream.sum_axis(Axis(0));
    }
    let mut gx = upstream.dot(&params.readout_w); // d⟨·⟩/dX_L
    for l in (0..arch.layers()).rev() {
        // through the nonlinearity: gz = gx ⊙ σ'(Z_ℓ)
        let mut gz = gx;
        gz.zip_mut_with(&tape.pre[l], |g, &z| *g *= arch.nonlinearity.derivative(z));
        // tap gradients: dZ/dh_k pairs gz with the recorded S^k X_{ℓ−1}
        for k in 0..=arch.order {
            let gk = gz.t().dot(&tape.shifted[l][k]);
            grad.taps[l].index_axis_mut(Axis(2), k).assign(&gk);
        }
        if l == 0 {
            break; // the input is data, not a parameter
        }
        // input gradient Σ_k S^k (gz H_k), evaluated by Horner's scheme
        let taps = &params.taps[l];
        let mut acc = gz.dot(&taps.index_axis(Axis(2), arch.order));
        for k in (0..arch.order).rev() {
            acc = s.apply_matrix(acc.view())?;
            acc = acc + gz.dot(&taps.index_axis(Axis(2), k));
        }
        gx = acc;
    }
    Ok(grad)
}

/// Recorded intermediates from one batched forward pass over `batch`
/// independent input signals sharing the shift matrix and parameters.
///
/// Episode `b`'s width-`F` feature block occupies columns `b·F..(b+1)·F`
/// of each concatenated `(n, batch·F)` matrix, so reshaping to
/// `(n·batch, F)` is a free reinterpretation of the same storage.
#[derive(Debug, Clone)]
pub struct BatchedTape<T: Scalar> {
    n: usize,
    batch: usize,
    /// Per layer, per shift power k: S^k X_{ℓ−1} concatenated, (n, batch·F_in).
    shifted: Vec<Vec<Array2<T>>>,
    /// Per layer: pre-activation, (n, batch·F_out).
    pre: Vec<Array2<T>>,
    /// Post-activation features of the last layer, (n, batch·F_L).
    features_out: Array2<T>,
}

impl<T: Scalar> BatchedTape<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn as_rows<T: Scalar>(x: &Array2<T>, rows: usize, cols: usize) -> Result<ndarray::ArrayView2<'_, T>> {
    x.view()
        .into_shape_with_order((rows, cols))
        .map_err(|e| Error::DimensionMismatch(format!("batch reshape: {e}")))
}

/// Forward pass over a batch of input signals at once. Equivalent to
/// mapping [`gnn_forward`] over the batch (up to floating-point summation
/// order), but the per-layer work runs as single wide matrix products,
/// which is substantially faster than dispatching per episode.
pub fn gnn_forward_batch<T: Scalar>(
    params: &GnnParams<T>,
    s: &ShiftMatrix<T>,
    signals: &[Array1<T>],
) -> Result<(Vec<Array2<T>>, BatchedTape<T>)> {
    let arch = &params.arch;
    arch.validate()?;
    let n = s.n();
    let b = signals.len();
    if b == 0 {
        return Err(Error::InvalidParameter("batched forward needs at least one signal".into()));
    }
    if signals.iter().any(|x| x.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "every signal must have one entry per node ({n})"
        )));
    }
    // episode b is column b (input width is 1)
    let mut x = Array2::zeros((n, b));
    for (col, sig) in signals.iter().enumerate() {
        x.column_mut(col).assign(sig);
    }
    let mut shifted = Vec::with_capacity(arch.layers());
    let mut pre = Vec::with_capacity(arch.layers());
    for (l, taps) in params.taps.iter().enumerate() {
        let (f_out, f_in) = (arch.features[l], arch.input_width(l));
        if taps.dim() != (f_out, f_in, arch.order + 1) || x.ncols() != b * f_in {
            return Err(Error::Config(format!(
                "layer {l} tensor shape {:?} does not match architecture",
                taps.dim()
            )));
        }
        let mut stack = Vec::with_capacity(arch.order + 1);
        stack.push(x);
        for k in 1..=arch.order {
            let next = s.apply_matrix(stack[k - 1].view())?;
            stack.push(next);
        }
        // Z = Σ_k (S^k X) H_k^T as one (n·b, F_in)·(F_in, F_out) product
        // per k, accumulated in place
        let mut z = Array2::zeros((n * b, f_out));
        for (k, xs) in stack.iter().enumerate() {
            let h_k = taps.index_axis(Axis(2), k);
            general_mat_mul(T::one(), &as_rows(xs, n * b, f_in)?, &h_k.t(), T::one(), &mut z);
        }
        let z = z
            .into_shape_with_order((n, b * f_out))
            .map_err(|e| Error::DimensionMismatch(format!("batch reshape: {e}")))?;
        x = z.mapv(|v| arch.nonlinearity.apply(v));
        shifted.push(stack);
        pre.push(z);
    }
    let f_last = *arch.features.last().expect("validated arch");
    if params.readout_w.dim() != (arch.actions, f_last) {
        return Err(Error::Config("readout shape does not match architecture".into()));
    }
    let mut flat_logits = as_rows(&x, n * b, f_last)?.dot(&params.readout_w.t());
    if let Some(bias) = &params.readout_b {
        flat_logits = flat_logits + &bias.view().insert_axis(Axis(0));
    }
    // row i·b + e of the flat product is node i of episode e
    let mut logits = vec![Array2::zeros((n, arch.actions)); b];
    for i in 0..n {
        for (e, out) in logits.iter_mut().enumerate() {
            out.row_mut(i).assign(&flat_logits.row(i * b + e));
        }
    }
    Ok((logits, BatchedTape { n, batch: b, shifted, pre, features_out: x }))
}

/// Reverse-mode gradient of `Σ_e ⟨logits_e, upstream_e⟩` over a batched
/// tape; the per-episode contributions are summed inside the matrix
/// products. Equivalent to summing [`gnn_backward`] over the batch up to
/// floating-point summation order.
pub fn gnn_backward_batch<T: Scalar>(
    params: &GnnParams<T>,
    s: &ShiftMatrix<T>,
    tape: &BatchedTape<T>,
    upstreams: &[Array2<T>],
) -> Result<GnnParams<T>> {
    let arch = &params.arch;
    let (n, b) = (tape.n, tape.batch);
    let f_last = *arch.features.last().expect("validated arch");
    if tape.n != s.n()
        || tape.pre.len() != arch.layers()
        || upstreams.len() != b
        || upstreams.iter().any(|u| u.dim() != (n, arch.actions))
        || tape.features_out.ncols() != b * f_last
    {
        return Err(Error::DimensionMismatch(
            "batched tape does not match parameters/shift/upstreams".into(),
        ));
    }
    // interleave upstream rows to match the (n·b, ·) flat layout
    let mut up = Array2::zeros((n * b, arch.actions));
    for (e, u) in upstreams.iter().enumerate() {
        for i in 0..n {
            up.row_mut(i * b + e).assign(&u.row(i));
        }
    }
    let mut grad = GnnParams::zeros(arch)?;
    grad.readout_w = up.t().dot(&as_rows(&tape.features_out, n * b, f_last)?);
    if let Some(gb) = &mut grad.readout_b {
        *gb = up.sum_axis(Axis(0));
    }
    let mut gx = up.dot(&params.readout_w); // (n·b, F_L)
    for l in (0..arch.layers()).rev() {
        let (f_out, f_in) = (arch.features[l], arch.input_width(l));
        let mut gz = gx;
        gz.zip_mut_with(&as_rows(&tape.pre[l], n * b, f_out)?, |g, &z| {
            *g *= arch.nonlinearity.derivative(z)
        });
        for k in 0..=arch.order {
            let gk = gz.t().dot(&as_rows(&tape.shifted[l][k], n * b, f_in)?);
            grad.taps[l].index_axis_mut(Axis(2), k).assign(&gk);
        }
        if l == 0 {
            break;
        }
        // Horner over k: H-products act on the feature axis in (n·b, ·)
        // form, the shift acts on the node axis in (n, b·F) form
        let taps = &params.taps[l];
        let mut acc = gz.dot(&taps.index_axis(Axis(2), arch.order));
        for k in (0..arch.order).rev() {
            let wide = acc
                .into_shape_with_order((n, b * f_in))
                .map_err(|e| Error::DimensionMismatch(format!("batch reshape: {e}")))?;
            let shifted = s.apply_matrix(wide.view())?;
            acc = shifted
                .into_shape_with_order((n * b, f_in))
                .map_err(|e| Error::DimensionMismatch(format!("batch reshape: {e}")))?;
            general_mat_mul(T::one(), &gz, &taps.index_axis(Axis(2), k), T::one(), &mut acc);
        }
        gx = acc;
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
// Layout: magic "CMGR", format version u16 LE, u32 LE header length, JSON
// architecture header, then every tensor as little-endian f64 in flat
// parameter order. Shared by the graph policy and the dense baseline, which
// are told apart by the header's "kind" tag.
// ---------------------------------------------------------------------------

/// Magic bytes opening every checkpoint file.
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CMGR";
/// Current container format version.
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub(crate) enum ArchHeader {
    Gnn {
        #[serde(rename = "L")]
        l: usize,
        features: Vec<usize>,
        #[serde(rename = "K")]
        k: usize,
        nonlinearity: Nonlinearity,
        #[serde(rename = "A")]
        a: usize,
        bias: bool,
        norm: Normalization,
    },
    Dnn {
        widths: Vec<usize>,
        nonlinearity: Nonlinearity,
        bias: bool,
    },
}

impl ArchHeader {
    fn value_count(&self) -> Result<usize> {
        match self {
            ArchHeader::Gnn { .. } => Ok(self.to_gnn_arch()?.param_count()),
            ArchHeader::Dnn { widths, bias, .. } => {
                if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
                    return Err(Error::Checkpoint("invalid dense layer widths".into()));
                }
                let weights: usize = widths.windows(2).map(|w| w[0] * w[1]).sum();
                let biases: usize = if *bias { widths[1..].iter().sum() } else { 0 };
                Ok(weights + biases)
            }
        }
    }

    fn to_gnn_arch(&self) -> Result<GnnArch> {
        match self {
            ArchHeader::Gnn { l, features, k, nonlinearity, a, bias, norm } => {
                if *l != features.len() {
                    return Err(Error::Checkpoint(format!(
                        "header claims {l} layers but lists {} widths",
                        features.len()
                    )));
                }
                let arch = GnnArch {
                    features: features.clone(),
                    order: *k,
                    nonlinearity: *nonlinearity,
                    actions: *a,
                    bias: *bias,
                    norm: *norm,
                };
                arch.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
                Ok(arch)
            }
            ArchHeader::Dnn { .. } => {
                Err(Error::Checkpoint("expected a graph-network header".into()))
            }
        }
    }
}

pub(crate) fn write_container<W: Write>(
    w: &mut W,
    header: &ArchHeader,
    values: impl Iterator<Item = f64>,
) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len())
        .map_err(|_| Error::Checkpoint("header too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_container<R: Read>(r: &mut R) -> Result<(ArchHeader, Vec<f64>)> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic bytes")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let mut ver = [0u8; 2];
    read_exact(r, &mut ver, "format version")?;
    let version = u16::from_le_bytes(ver);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let mut len = [0u8; 4];
    read_exact(r, &mut len, "header length")?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    read_exact(r, &mut json, "architecture header")?;
    let header: ArchHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::Checkpoint(format!("bad architecture header: {e}")))?;
    let count = header.value_count()?;
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut buf, "parameter payload")?;
        values.push(f64::from_le_bytes(buf));
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok((header, values)),
        _ => Err(Error::Checkpoint("trailing bytes after parameter payload".into())),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint(format!("truncated checkpoint: missing {what}")))
}

/// Writes parameters in the checkpoint container format. Values are stored
/// as 64-bit floats, so an f64 round trip is bit-exact.
pub fn serialize_params<T: Scalar, W: Write>(w: &mut W, params: &GnnParams<T>) -> Result<()> {
    let arch = &params.arch;
    arch.validate()?;
    let header = ArchHeader::Gnn {
        l: arch.layers(),
        features: arch.features.clone(),
        k: arch.order,
        nonlinearity: arch.nonlinearity,
        a: arch.actions,
        bias: arch.bias,
        norm: arch.norm,
    };
    let flat = params.to_flat();
    write_container(w, &header, flat.iter().map(|v| v.to_f64().expect("finite parameter")))
}

/// Reads parameters written by [`serialize_params`], validating magic,
/// version, header consistency, and exact payload size.
pub fn deserialize_params<T: Scalar, R: Read>(r: &mut R) -> Result<GnnParams<T>> {
    let (header, values) = read_container(r)?;
    let arch = header.to_gnn_arch()?;
    let mut params = GnnParams::zeros(&arch)?;
    let flat: Vec<T> = values.iter().map(|&v| T::from_f64_exact(v)).collect();
    params.set_from_flat(&flat)?;
    if !params.all_finite() {
        return Err(Error::Checkpoint("non-finite parameter in payload".into()));
    }
    Ok(params)
}
