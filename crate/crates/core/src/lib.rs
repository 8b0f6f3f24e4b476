//! Simulator and learning library for channel allocation in WLANs.
//!
//! A network of access points is modeled as an undirected interference
//! graph. A graph-neural-network policy maps per-AP traffic demands to a
//! categorical distribution over channel subsets, and is trained with the
//! score-function policy gradient against a pluggable interference cost.
//! The trained policy runs either centrally or node-by-node with synchronous
//! neighbor message exchanges.
//!
//! Modules:
//! - [`graph`]: topologies, shift operators, permutations
//! - [`traffic`]: rectified-Gaussian demand sampling
//! - [`interference`]: utilization, objectives, coloring oracle
//! - [`gnn`]: graph convolutional network with exact reverse-mode gradients
//! - [`policy`]: channel-subset action space and the score-function estimator
//! - [`training`]: REINFORCE loop, optimizers, evaluation
//! - [`baselines`]: random, centralized DNN, and continuous-relaxation policies
//! - [`distexec`]: decentralized execution over a message bus
//!
//! All numeric code is generic over [`Scalar`]; the aliases below pin the
//! `f64` instantiations used by the command-line tools and experiments.

pub mod baselines;
pub mod distexec;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod interference;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod traffic;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Shift operator over `f64`, the precision used by the experiment tools.
pub type ShiftMatrix64 = graph::ShiftMatrix<f64>;
/// GNN parameters over `f64`.
pub type GnnParams64 = gnn::GnnParams<f64>;
/// Centralized DNN parameters over `f64`.
pub type DnnParams64 = baselines::DnnParams<f64>;
/// Demand model over `f64`.
pub type DemandModel64 = traffic::DemandModel<f64>;
/// Training configuration over `f64`.
pub type TrainConfig64 = training::TrainConfig<f64>;
/// Training history over `f64`.
pub type TrainHistory64 = training::TrainHistory<f64>;
