//! Interference model, worst-channel utilization, and scalar objectives.

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::scalar::Scalar;
use crate::traffic::Demands;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// Per-AP interference load on the worst channel; entries are nonnegative
/// and zero when no neighbor shares a channel.
pub type Utilizations<T> = Array1<T>;

/// Hard cap on the channel count so selections fit in a `u32` mask.
pub const MAX_CHANNELS: usize = 32;

/// Per-AP binary channel selection, stored as one bitmask per AP.
///
/// Every AP selects at least one channel: the load model splits an AP's
/// traffic equally over its selected channels, which leaves the empty
/// selection undefined, so it is excluded from the representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSelection {
    m: usize,
    masks: Vec<u32>,
}

impl ChannelSelection {
    pub fn from_masks(m: usize, masks: Vec<u32>) -> Result<Self> {
        if m == 0 || m > MAX_CHANNELS {
            return Err(Error::InvalidParameter(format!(
                "channel count must lie in 1..={MAX_CHANNELS}, got {m}"
            )));
        }
        let full = mask_all(m);
        for (i, &mask) in masks.iter().enumerate() {
            if mask == 0 {
                return Err(Error::InvalidParameter(format!(
                    "AP {i} selects no channel"
                )));
            }
            if mask & !full != 0 {
                return Err(Error::InvalidParameter(format!(
                    "AP {i} selects a channel outside 0..{m}"
                )));
            }
        }
        Ok(Self { m, masks })
    }

    /// Single-channel selection per AP, e.g. a coloring witness.
    pub fn from_single_channels(m: usize, channels: &[usize]) -> Result<Self> {
        let masks = channels
            .iter()
            .map(|&c| {
                if c >= m {
                    Err(Error::InvalidParameter(format!("channel {c} out of range")))
                } else {
                    Ok(1u32 << c)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_masks(m, masks)
    }

    pub fn n(&self) -> usize {
        self.masks.len()
    }

    /// Number of channels in the system.
    pub fn channels(&self) -> usize {
        self.m
    }

    pub fn mask(&self, i: usize) -> u32 {
        self.masks[i]
    }

    /// Whether AP `i` selects channel `l`.
    pub fn selected(&self, i: usize, l: usize) -> bool {
        self.masks[i] >> l & 1 == 1
    }

    /// Count of channels selected by AP `i` (always >= 1).
    pub fn count(&self, i: usize) -> usize {
        self.masks[i].count_ones() as usize
    }

    pub fn permute(&self, perm: &crate::graph::Permutation) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::DimensionMismatch("permutation size".into()));
        }
        let mut masks = vec![0u32; self.n()];
        for (i, &m) in self.masks.iter().enumerate() {
            masks[perm.apply(i)] = m;
        }
        Self::from_masks(self.m, masks)
    }

    /// n rows by M columns of `0`/`1`, comma separated, one AP per line.
    pub fn to_csv_grid(&self) -> String {
        let mut out = String::new();
        for &mask in &self.masks {
            for l in 0..self.m {
                if l > 0 {
                    out.push(',');
                }
                out.push(if mask >> l & 1 == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_grid(text: &str) -> Result<Self> {
        let mut masks = Vec::new();
        let mut m = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut mask = 0u32;
            let mut width = 0;
            for (l, field) in line.split(',').enumerate() {
                match field.trim() {
                    "1" => mask |= 1 << l,
                    "0" => {}
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "line {}: expected 0/1, got '{other}'",
                            lineno + 1
                        )))
                    }
                }
                width = l + 1;
            }
            if *m.get_or_insert(width) != width {
                return Err(Error::InvalidParameter("ragged selection grid".into()));
            }
            masks.push(mask);
        }
        let m = m.ok_or_else(|| Error::InvalidParameter("empty selection grid".into()))?;
        Self::from_masks(m, masks)
    }
}

fn mask_all(m: usize) -> u32 {
    if m == 32 {
        u32::MAX
    } else {
        (1u32 << m) - 1
    }
}

/// Interference inflicted on one AP by one neighbor on one channel:
/// `adjacent * c_il * c_jl * d_j / m_j`.
///
/// Callers handle the `i = j` case (self-interference is zero by definition)
/// and guarantee `m_j >= 1`.
pub fn interference_term<T: Scalar>(d_j: T, adjacent: bool, c_il: bool, c_jl: bool, m_j: usize) -> T {
    assert!(m_j >= 1, "AP with an empty channel selection");
    if adjacent && c_il && c_jl {
        d_j / T::from_f64_exact(m_j as f64)
    } else {
        T::zero()
    }
}

/// Worst-channel utilization per AP: for each AP the summed co-channel
/// interference from its neighbors, maximized over channels.
pub fn channel_utilization<T: Scalar>(
    demands: &Demands<T>,
    topo: &Topology,
    selection: &ChannelSelection,
) -> Result<Utilizations<T>> {
    let n = topo.n();
    if demands.len() != n || selection.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "demands ({}), selection ({}), topology ({})",
            demands.len(),
            selection.n(),
            n
        )));
    }
    let m = selection.channels();
    // per-channel load each AP contributes: d_j / M_j on its selected channels
    let share: Vec<T> = (0..n)
        .map(|j| demands[j] / T::from_f64_exact(selection.count(j) as f64))
        .collect();
    let mut u = Array1::zeros(n);
    for i in 0..n {
        let mut worst = T::zero();
        for l in 0..m {
            if !selection.selected(i, l) {
                continue;
            }
            let mut acc = T::zero();
            for &j in topo.neighbors(i) {
                if selection.selected(j, l) {
                    acc += share[j];
                }
            }
            if acc > worst {
                worst = acc;
            }
        }
        u[i] = worst;
    }
    Ok(u)
}

/// Scalar objective over per-AP utilizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Demand-weighted mean: `(1/N) Σ d_i u_i`.
    #[default]
    Mean,
    /// Demand-weighted worst AP: `max_i d_i u_i`.
    Max,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Mean => "mean",
            Objective::Max => "max",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Objective::Mean),
            "max" => Ok(Objective::Max),
            other => Err(Error::InvalidParameter(format!("unknown objective '{other}'"))),
        }
    }
}

impl Objective {
    pub fn evaluate<T: Scalar>(&self, demands: &Demands<T>, u: &Utilizations<T>) -> T {
        match self {
            Objective::Mean => weighted_mean_objective(demands, u),
            Objective::Max => weighted_max_objective(demands, u),
        }
    }
}

/// `(1/N) Σ_i d_i u_i` for one demand sample.
pub fn weighted_mean_objective<T: Scalar>(demands: &Demands<T>, u: &Utilizations<T>) -> T {
    assert_eq!(demands.len(), u.len(), "objective length mismatch");
    let n = T::from_f64_exact(demands.len() as f64);
    demands.iter().zip(u.iter()).map(|(&d, &ui)| d * ui).sum::<T>() / n
}

/// `max_i d_i u_i` for one demand sample (zero for an empty network).
pub fn weighted_max_objective<T: Scalar>(demands: &Demands<T>, u: &Utilizations<T>) -> T {
    assert_eq!(demands.len(), u.len(), "objective length mismatch");
    demands
        .iter()
        .zip(u.iter())
        .map(|(&d, &ui)| d * ui)
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Cost feedback the trainer observes.
///
/// The training loop never sees a closed-form interference expression; it
/// only calls this, so swapping in measurements (or a mock) leaves the
/// learner untouched.
pub trait CostModel<T: Scalar>: Send + Sync {
    fn utilizations(
        &self,
        demands: &Demands<T>,
        topo: &Topology,
        selection: &ChannelSelection,
    ) -> Utilizations<T>;
}

/// The default cost model: [`channel_utilization`] over the shared-channel
/// load-splitting interference term.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardInterference;

impl<T: Scalar> CostModel<T> for StandardInterference {
    fn utilizations(
        &self,
        demands: &Demands<T>,
        topo: &Topology,
        selection: &ChannelSelection,
    ) -> Utilizations<T> {
        channel_utilization(demands, topo, selection).expect("consistent dimensions")
    }
}

/// Node limit for the exponential coloring search.
pub const ORACLE_MAX_NODES: usize = 20;

/// Result of [`zero_interference_oracle`].
#[derive(Debug, Clone)]
pub struct ColoringOutcome {
    pub achievable: bool,
    /// A single-channel-per-AP selection realizing zero interference.
    pub witness: Option<ChannelSelection>,
}

/// Searches for a proper `m`-coloring of the topology by backtracking.
///
/// A proper coloring with single-channel selections gives every AP zero
/// utilization for every demand vector. Guarded to `n <= 20` because the
/// search is exponential in the worst case.
pub fn zero_interference_oracle(topo: &Topology, m: usize) -> Result<ColoringOutcome> {
    if topo.n() > ORACLE_MAX_NODES {
        return Err(Error::TooLarge(format!(
            "coloring oracle is guarded to n <= {ORACLE_MAX_NODES}, got n = {}",
            topo.n()
        )));
    }
    if m == 0 || m > MAX_CHANNELS {
        return Err(Error::InvalidParameter(format!(
            "channel count must lie in 1..={MAX_CHANNELS}, got {m}"
        )));
    }
    let n = topo.n();
    // order nodes by descending degree; fewer branches survive early
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(topo.degree(i)));
    let mut colors = vec![usize::MAX; n];
    if color_backtrack(topo, &order, 0, m, &mut colors) {
        let witness = ChannelSelection::from_single_channels(m, &colors)?;
        Ok(ColoringOutcome { achievable: true, witness: Some(witness) })
    } else {
        Ok(ColoringOutcome { achievable: false, witness: None })
    }
}

fn color_backtrack(
    topo: &Topology,
    order: &[usize],
    pos: usize,
    m: usize,
    colors: &mut [usize],
) -> bool {
    if pos == order.len() {
        return true;
    }
    let v = order[pos];
    let mut banned = 0u32;
    for &w in topo.neighbors(v) {
        if colors[w] != usize::MAX {
            banned |= 1 << colors[w];
        }
    }
    for c in 0..m {
        if banned >> c & 1 == 1 {
            continue;
        }
        colors[v] = c;
        if color_backtrack(topo, order, pos + 1, m, colors) {
            return true;
        }
        colors[v] = usize::MAX;
        // symmetry break: a fresh color index is interchangeable with any
        // later fresh one, so trying the first unused color is enough
        if colors_in_use(colors) <= c {
            break;
        }
    }
    false
}

fn colors_in_use(colors: &[usize]) -> usize {
    colors
        .iter()
        .filter(|&&c| c != usize::MAX)
        .map(|&c| c + 1)
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair() -> Topology {
        Topology::from_edges(2, [(0, 1)]).unwrap()
    }

    #[test]
    fn selection_invariants() {
        assert!(ChannelSelection::from_masks(4, vec![0b1, 0b1111]).is_ok());
        assert!(ChannelSelection::from_masks(4, vec![0]).is_err(), "empty selection");
        assert!(ChannelSelection::from_masks(2, vec![0b100]).is_err(), "out of range");
        assert!(ChannelSelection::from_masks(0, vec![]).is_err());
    }

    #[test]
    fn term_matches_load_split() {
        assert_eq!(interference_term(1.0f64, true, true, true, 2), 0.5);
        assert_eq!(interference_term(1.0f64, false, true, true, 2), 0.0);
        assert_eq!(interference_term(0.6f64, true, true, false, 1), 0.0);
    }

    #[test]
    #[should_panic(expected = "empty channel selection")]
    fn term_rejects_zero_channel_count() {
        let _ = interference_term(1.0f64, true, true, true, 0);
    }

    #[test]
    fn disjoint_channels_have_zero_utilization() {
        let sel = ChannelSelection::from_masks(2, vec![0b01, 0b10]).unwrap();
        let d = array![1.0f64, 0.8];
        let u = channel_utilization(&d, &pair(), &sel).unwrap();
        assert_eq!(u, array![0.0, 0.0]);
    }

    #[test]
    fn utilization_hand_case() {
        // AP0 on both channels, AP1 on channel 0 only
        let sel = ChannelSelection::from_masks(2, vec![0b11, 0b01]).unwrap();
        let d = array![1.0f64, 0.8];
        let u = channel_utilization(&d, &pair(), &sel).unwrap();
        assert!((u[0] - 0.8).abs() < 1e-15);
        assert!((u[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_single_channel() {
        let topo = Topology::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let sel = ChannelSelection::from_masks(1, vec![1, 1, 1]).unwrap();
        let d = array![1.0f64, 1.0, 1.0];
        let u = channel_utilization(&d, &topo, &sel).unwrap();
        assert_eq!(u, array![2.0, 2.0, 2.0]);
    }

    #[test]
    fn objectives_hand_values() {
        let d = array![1.0f64, 1.0];
        let u = array![0.8f64, 0.5];
        assert!((weighted_mean_objective(&d, &u) - 0.65).abs() < 1e-15);
        assert!((weighted_max_objective(&d, &u) - 0.8).abs() < 1e-15);
        let zero = array![0.0f64, 0.0];
        assert_eq!(weighted_mean_objective(&d, &zero), 0.0);
        assert_eq!(weighted_max_objective(&d, &zero), 0.0);
    }

    #[test]
    fn single_ap_has_zero_objective() {
        let topo = Topology::from_edges(1, []).unwrap();
        let sel = ChannelSelection::from_masks(4, vec![0b1]).unwrap();
        let d = array![2.5f64];
        let u = channel_utilization(&d, &topo, &sel).unwrap();
        assert_eq!(weighted_max_objective(&d, &u), 0.0);
    }

    #[test]
    fn demand_scaling_is_quadratic_on_shared_channel() {
        // one shared channel on a fixed graph: u scales with d, the weight
        // scales again, so the objective scales by 4 when demands double
        let topo = Topology::gen_er_graph(6, 0.6, 12).unwrap();
        let sel = ChannelSelection::from_masks(1, vec![1; 6]).unwrap();
        let d1 = array![0.3f64, 1.0, 0.7, 0.9, 0.2, 0.5];
        let d2 = d1.mapv(|v| 2.0 * v);
        let o1 = weighted_mean_objective(&d1, &channel_utilization(&d1, &topo, &sel).unwrap());
        let o2 = weighted_mean_objective(&d2, &channel_utilization(&d2, &topo, &sel).unwrap());
        assert!((o2 - 4.0 * o1).abs() < 1e-12 * o1.abs().max(1.0));
    }

    #[test]
    fn coloring_path_is_two_colorable() {
        let topo = Topology::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let out = zero_interference_oracle(&topo, 2).unwrap();
        assert!(out.achievable);
        let witness = out.witness.unwrap();
        let d = array![1.0f64, 1.0, 1.0, 1.0];
        let u = channel_utilization(&d, &topo, &witness).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coloring_k5_needs_five_channels() {
        let k5 = Topology::gen_er_graph(5, 1.0, 0).unwrap();
        assert!(!zero_interference_oracle(&k5, 4).unwrap().achievable);
        assert!(zero_interference_oracle(&k5, 5).unwrap().achievable);
    }

    #[test]
    fn coloring_guard_refuses_large_instances() {
        let topo = Topology::gen_er_graph(21, 0.1, 0).unwrap();
        assert!(matches!(
            zero_interference_oracle(&topo, 3),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn csv_grid_round_trip() {
        let sel = ChannelSelection::from_masks(3, vec![0b101, 0b010, 0b111]).unwrap();
        let text = sel.to_csv_grid();
        assert_eq!(text, "1,0,1\n0,1,0\n1,1,1\n");
        assert_eq!(ChannelSelection::from_csv_grid(&text).unwrap(), sel);
    }
}
