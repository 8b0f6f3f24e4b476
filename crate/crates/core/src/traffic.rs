//! Traffic demand sampling.

use crate::rng;
use crate::scalar::Scalar;
use ndarray::Array1;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

/// Per-AP demand vector; entries are nonnegative load units.
pub type Demands<T> = Array1<T>;

/// Rectified-Gaussian demand model: each AP draws `max(Normal(mean, std), 0)`
/// independently.
///
/// Normal variates come from the Box–Muller transform over the shared seeded
/// stream ([`rng::standard_normal`]), so a fixed stream state yields the same
/// vector on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct DemandModel<T: Scalar> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> Default for DemandModel<T> {
    fn default() -> Self {
        Self {
            mean: T::from_f64_exact(0.8),
            std: T::from_f64_exact(0.4),
        }
    }
}

impl<T: Scalar> DemandModel<T> {
    pub fn new(mean: T, std: T) -> crate::Result<Self> {
        if !(std > T::zero()) || !std.is_finite() || !mean.is_finite() {
            return Err(crate::Error::InvalidParameter(
                "demand model needs a finite mean and std > 0".into(),
            ));
        }
        Ok(Self { mean, std })
    }

    /// Draws one demand vector of length `n`.
    pub fn sample(&self, n: usize, rng: &mut impl RngCore) -> Demands<T> {
        Array1::from_shape_fn(n, |_| {
            let z: T = rng::standard_normal(rng);
            (self.mean + self.std * z).max(T::zero())
        })
    }
}

/// One CSV row of a demand trace: `run_id, sample_id, d_0, .., d_{n-1}`.
pub fn demand_csv_row<T: Scalar>(run_id: u64, sample_id: u64, d: &Demands<T>) -> String {
    let mut row = format!("{run_id},{sample_id}");
    for v in d.iter() {
        row.push(',');
        row.push_str(&v.to_string());
    }
    row
}
