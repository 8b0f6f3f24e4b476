//! AP interference graphs, shift operators, and node permutations.

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Undirected interference graph over access points.
///
/// Nodes are indexed `0..n`. The edge list is kept sorted with `i < j`, and
/// the instance is fully determined by `(n, q, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    q: f64,
    seed: u64,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

/// Wire form of [`Topology`]: `{"n":..,"q":..,"seed":..,"edges":[[i,j],..]}`
/// with edges sorted lexicographically, byte-stable for a given instance.
#[derive(Serialize, Deserialize)]
struct TopologyDoc {
    n: usize,
    q: f64,
    seed: u64,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Samples an Erdős–Rényi graph: each unordered pair is an edge
    /// independently with probability `q`.
    pub fn gen_er_graph(n: usize, q: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("node count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "edge probability must lie in [0, 1], got {q}"
            )));
        }
        let mut stream = rng::substream(seed, &[u64::from_le_bytes(*b"er-graph")]);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let u: f64 = rng::unit_half_open(&mut stream);
                if u < q {
                    edges.push((i, j));
                }
            }
        }
        Self::from_parts(n, q, seed, edges)
    }

    /// Builds a topology from an explicit edge list (useful for fixed test
    /// instances). Pairs may come in any order; duplicates are rejected.
    /// Generation metadata (`q`, `seed`) is zeroed.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut normalized = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a},{b}) out of range for n={n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate edge".into()));
        }
        Self::from_parts(n, 0.0, 0, normalized)
    }

    fn from_parts(n: usize, q: f64, seed: u64, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, q, seed, edges, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbor indices of `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// BFS hop distances from `source`; unreachable nodes get `usize::MAX`.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Relabels nodes: node `i` becomes node `perm[i]`.
    pub fn permute(&self, perm: &Permutation) -> Result<Self> {
        perm.check_len(self.n)?;
        let edges = self
            .edges
            .iter()
            .map(|&(i, j)| (perm.apply(i), perm.apply(j)))
            .collect::<Vec<_>>();
        let mut topo = Self::from_edges(self.n, edges)?;
        topo.q = self.q;
        topo.seed = self.seed;
        Ok(topo)
    }

    /// Serializes to the canonical JSON document.
    pub fn to_json(&self) -> String {
        let doc = TopologyDoc {
            n: self.n,
            q: self.q,
            seed: self.seed,
            edges: self.edges.clone(),
        };
        serde_json::to_string(&doc).expect("topology serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TopologyDoc = serde_json::from_str(text)?;
        let mut topo = Self::from_edges(doc.n, doc.edges)?;
        topo.q = doc.q;
        topo.seed = doc.seed;
        Ok(topo)
    }
}

/// How the binary adjacency is scaled into a shift operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Raw 0/1 adjacency.
    None,
    /// Divided by the maximum node degree (1 if the graph has no edges).
    #[default]
    MaxDegree,
    /// Divided by the largest-magnitude adjacency eigenvalue.
    Spectral,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            Normalization::None => "none",
            Normalization::MaxDegree => "max-degree",
            Normalization::Spectral => "spectral",
        };
        f.write_str(tag)
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "max-degree" => Ok(Normalization::MaxDegree),
            "spectral" => Ok(Normalization::Spectral),
            other => Err(Error::InvalidParameter(format!("unknown normalization '{other}'"))),
        }
    }
}

/// Symmetric graph shift operator: scaled binary adjacency, zero diagonal.
///
/// All nonzero entries share one scale factor, so the matrix is stored as
/// neighbor lists plus that scalar. Products are computed sparsely.
#[derive(Debug, Clone)]
pub struct ShiftMatrix<T: Scalar> {
    n: usize,
    scale: T,
    norm: Normalization,
    neighbors: Vec<Vec<usize>>,
}

/// Relative tolerance for the power-iteration eigenvalue estimate.
const POWER_ITERATION_TOL: f64 = 1e-10;
const POWER_ITERATION_MAX_STEPS: usize = 100_000;

impl<T: Scalar> ShiftMatrix<T> {
    /// Builds the shift operator for `topo` under the given normalization.
    pub fn build(topo: &Topology, norm: Normalization) -> Self {
        let scale = match norm {
            Normalization::None => T::one(),
            Normalization::MaxDegree => {
                let d = topo.max_degree();
                if d == 0 {
                    T::one()
                } else {
                    T::one() / T::from_f64_exact(d as f64)
                }
            }
            Normalization::Spectral => {
                let lambda = largest_adjacency_eigenvalue(topo);
                if lambda <= f64::EPSILON {
                    T::one()
                } else {
                    T::one() / T::from_f64_exact(lambda)
                }
            }
        };
        Self {
            n: topo.n(),
            scale,
            norm,
            neighbors: (0..topo.n()).map(|i| topo.neighbors(i).to_vec()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn norm(&self) -> Normalization {
        self.norm
    }

    /// The shared value of all nonzero entries.
    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        if self.neighbors[i].binary_search(&j).is_ok() {
            self.scale
        } else {
            T::zero()
        }
    }

    /// `S x` via neighbor lists. Summation runs over ascending neighbor
    /// indices, so the result is reproducible.
    pub fn apply(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "signal has {} entries, shift operator is {}x{}",
                x.len(),
                self.n,
                self.n
            )));
        }
        let mut out = Array1::zeros(self.n);
        for i in 0..self.n {
            let mut acc = T::zero();
            for &j in &self.neighbors[i] {
                acc += x[j];
            }
            out[i] = acc * self.scale;
        }
        Ok(out)
    }

    /// `S X` for a node-major feature matrix `X` (n rows, F columns).
    pub fn apply_matrix(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} rows, shift operator is {}x{}",
                x.nrows(),
                self.n,
                self.n
            )));
        }
        let f = x.ncols();
        let mut out = Array2::zeros((self.n, f));
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let outs = out.as_slice_mut().expect("standard layout");
        for i in 0..self.n {
            let row = &mut outs[i * f..(i + 1) * f];
            for &j in &self.neighbors[i] {
                let src = &xs[j * f..(j + 1) * f];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += *s;
                }
            }
            for o in row.iter_mut() {
                *o *= self.scale;
            }
        }
        Ok(out)
    }

    /// Dense copy, mainly for oracles and diagnostics.
    pub fn to_dense(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for &j in &self.neighbors[i] {
                m[[i, j]] = self.scale;
            }
        }
        m
    }

    /// `P S Pᵀ`: relabels rows and columns, keeping the scale.
    pub fn permute(&self, perm: &Permutation) -> Result<Self> {
        perm.check_len(self.n)?;
        let mut neighbors = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for &j in &self.neighbors[i] {
                neighbors[perm.apply(i)].push(perm.apply(j));
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n: self.n, scale: self.scale, norm: self.norm, neighbors })
    }
}

/// Largest-magnitude adjacency eigenvalue by power iteration.
///
/// Iterates on `A + Δ·I` (Δ = max degree) so the top eigenvalue of the
/// shifted matrix is simple in magnitude even on bipartite graphs, then
/// subtracts the shift back out.
fn largest_adjacency_eigenvalue(topo: &Topology) -> f64 {
    let n = topo.n();
    if topo.edge_count() == 0 {
        return 0.0;
    }
    let delta = topo.max_degree() as f64;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda_shifted = 0.0f64;
    for _ in 0..POWER_ITERATION_MAX_STEPS {
        let mut w = vec![0.0f64; n];
        for (i, wi) in w.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &j in topo.neighbors(i) {
                acc += v[j];
            }
            *wi = acc + delta * v[i];
        }
        let next = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if (next - lambda_shifted).abs() <= POWER_ITERATION_TOL * next.abs().max(1.0) {
            lambda_shifted = next;
            break;
        }
        lambda_shifted = next;
    }
    (lambda_shifted - delta).max(0.0)
}

/// A bijection on `{0, .., n-1}`; node `i` maps to `target[i]`.
///
/// As a matrix, `P[target[i], i] = 1`, so `(P x)[target[i]] = x[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    target: Vec<usize>,
}

impl Permutation {
    pub fn new(target: Vec<usize>) -> Result<Self> {
        let n = target.len();
        let mut seen = vec![false; n];
        for &t in &target {
            if t >= n || seen[t] {
                return Err(Error::InvalidParameter(
                    "index array is not a permutation".into(),
                ));
            }
            seen[t] = true;
        }
        Ok(Self { target })
    }

    pub fn identity(n: usize) -> Self {
        Self { target: (0..n).collect() }
    }

    /// Swaps `a` and `b`, fixing everything else.
    pub fn swap(n: usize, a: usize, b: usize) -> Result<Self> {
        if a >= n || b >= n {
            return Err(Error::InvalidParameter("swap index out of range".into()));
        }
        let mut target: Vec<usize> = (0..n).collect();
        target.swap(a, b);
        Ok(Self { target })
    }

    /// Uniformly random permutation (Fisher–Yates on the given stream).
    pub fn random(n: usize, rng: &mut impl rand_core::RngCore) -> Self {
        let mut target: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            target.swap(i, j);
        }
        Self { target }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.target[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.target.len()];
        for (i, &t) in self.target.iter().enumerate() {
            inv[t] = i;
        }
        Self { target: inv }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.target.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation over {} indices applied to size {}",
                self.target.len(),
                n
            )));
        }
        Ok(())
    }

    /// `P x`.
    pub fn permute_vector<T: Clone + num_traits::Zero>(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_len(x.len())?;
        let mut out = Array1::zeros(x.len());
        for (i, v) in x.iter().enumerate() {
            out[self.target[i]] = v.clone();
        }
        Ok(out)
    }

    /// Permutes the rows of a node-major matrix.
    pub fn permute_rows<T: Clone + num_traits::Zero>(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_len(x.nrows())?;
        let mut out = Array2::zeros(x.dim());
        for (i, row) in x.rows().into_iter().enumerate() {
            out.row_mut(self.target[i]).assign(&row);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> Topology {
        // nodes 0-1-2 in a path
        Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn er_extremes() {
        let empty = Topology::gen_er_graph(5, 0.0, 99).unwrap();
        assert_eq!(empty.edge_count(), 0);
        let complete = Topology::gen_er_graph(5, 1.0, 99).unwrap();
        assert_eq!(complete.edge_count(), 10);
    }

    #[test]
    fn er_is_seed_deterministic() {
        let a = Topology::gen_er_graph(12, 0.4, 7).unwrap();
        let b = Topology::gen_er_graph(12, 0.4, 7).unwrap();
        assert_eq!(a.edges(), b.edges());
        let c = Topology::gen_er_graph(12, 0.4, 8).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn er_rejects_bad_probability() {
        assert!(Topology::gen_er_graph(5, 1.5, 0).is_err());
        assert!(Topology::gen_er_graph(5, -0.1, 0).is_err());
        assert!(Topology::gen_er_graph(0, 0.5, 0).is_err());
    }

    #[test]
    fn er_mean_edge_count_matches_binomial() {
        // Binomial(190, 0.5): mean 95, sd sqrt(47.5)
        let trials = 10_000usize;
        let mut total = 0usize;
        for seed in 0..trials as u64 {
            total += Topology::gen_er_graph(20, 0.5, seed).unwrap().edge_count();
        }
        let mean = total as f64 / trials as f64;
        let se = (47.5f64 / trials as f64).sqrt();
        assert!((mean - 95.0).abs() < 3.0 * se, "mean={mean}, se={se}");
    }

    #[test]
    fn shift_unnormalized_is_adjacency() {
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&path3(), Normalization::None);
        assert_eq!(s.entry(0, 1), 1.0);
        assert_eq!(s.entry(1, 0), 1.0);
        assert_eq!(s.entry(1, 2), 1.0);
        assert_eq!(s.entry(2, 1), 1.0);
        assert_eq!(s.entry(0, 2), 0.0);
        assert_eq!(s.entry(0, 0), 0.0);
    }

    #[test]
    fn shift_max_degree_scales_by_two() {
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&path3(), Normalization::MaxDegree);
        assert_eq!(s.entry(0, 1), 0.5);
    }

    #[test]
    fn shift_spectral_on_k4() {
        // K4 adjacency has largest eigenvalue 3
        let k4 = Topology::gen_er_graph(4, 1.0, 0).unwrap();
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&k4, Normalization::Spectral);
        assert!((s.entry(0, 1) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn shift_spectral_on_bipartite_path() {
        // path 0-1-2 has eigenvalues ±√2 and 0
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&path3(), Normalization::Spectral);
        assert!((s.entry(0, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn shift_empty_graph_scale_is_one() {
        let empty = Topology::gen_er_graph(4, 0.0, 0).unwrap();
        for norm in [Normalization::None, Normalization::MaxDegree, Normalization::Spectral] {
            let s: ShiftMatrix<f64> = ShiftMatrix::build(&empty, norm);
            assert_eq!(s.scale(), 1.0);
            let x = array![1.0, 2.0, 3.0, 4.0];
            assert_eq!(s.apply(x.view()).unwrap(), Array1::<f64>::zeros(4));
        }
    }

    #[test]
    fn apply_matches_dense_oracle_on_path() {
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&path3(), Normalization::None);
        let x = array![1.0, 2.0, 3.0];
        let y = s.apply(x.view()).unwrap();
        assert_eq!(y, array![2.0, 4.0, 2.0]);
        // dense oracle
        let dense = s.to_dense();
        let oracle = dense.dot(&x);
        assert_eq!(y, oracle);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&path3(), Normalization::None);
        let x = array![1.0, 2.0];
        assert!(s.apply(x.view()).is_err());
    }

    #[test]
    fn apply_matrix_agrees_with_columnwise_apply() {
        let topo = Topology::gen_er_graph(9, 0.5, 5).unwrap();
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&topo, Normalization::MaxDegree);
        let mut rng = crate::rng::stream(2);
        let x = Array2::from_shape_fn((9, 4), |_| crate::rng::unit_open::<f64>(&mut rng));
        let y = s.apply_matrix(x.view()).unwrap();
        for c in 0..4 {
            let col = s.apply(x.column(c)).unwrap();
            for i in 0..9 {
                assert_eq!(y[[i, c]], col[i]);
            }
        }
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 1, 2]).is_ok());
        assert!(Permutation::new(vec![0, 0, 2]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn permute_identity_is_noop() {
        let topo = path3();
        let p = Permutation::identity(3);
        assert_eq!(topo.permute(&p).unwrap().edges(), topo.edges());
    }

    #[test]
    fn permute_swap_on_path() {
        // swapping 0 and 1 in path 0-1-2 gives edges (0,1),(0,2)
        let topo = path3();
        let p = Permutation::swap(3, 0, 1).unwrap();
        let permuted = topo.permute(&p).unwrap();
        assert_eq!(permuted.edges(), &[(0, 1), (0, 2)]);
        // explicit row/column swap oracle on the adjacency
        let s: ShiftMatrix<f64> = ShiftMatrix::build(&topo, Normalization::None);
        let sp = s.permute(&p).unwrap();
        let dense = s.to_dense();
        let mut oracle = Array2::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                oracle[[p.apply(i), p.apply(j)]] = dense[[i, j]];
            }
        }
        assert_eq!(sp.to_dense(), oracle);
    }

    #[test]
    fn permute_twice_is_involution_for_swaps() {
        let topo = path3();
        let p = Permutation::swap(3, 0, 1).unwrap();
        let twice = topo.permute(&p).unwrap().permute(&p).unwrap();
        assert_eq!(twice.edges(), topo.edges());
    }

    #[test]
    fn build_shift_commutes_with_permutation() {
        let mut rng = crate::rng::stream(17);
        for trial in 0..20 {
            let topo = Topology::gen_er_graph(10, 0.4, trial).unwrap();
            let p = Permutation::random(10, &mut rng);
            for norm in [Normalization::None, Normalization::MaxDegree] {
                let direct: ShiftMatrix<f64> = ShiftMatrix::build(&topo.permute(&p).unwrap(), norm);
                let via = ShiftMatrix::<f64>::build(&topo, norm).permute(&p).unwrap();
                assert_eq!(direct.to_dense(), via.to_dense());
            }
        }
    }

    #[test]
    fn topology_json_round_trip_is_byte_stable() {
        let topo = Topology::gen_er_graph(6, 0.5, 3).unwrap();
        let json = topo.to_json();
        let back = Topology::from_json(&json).unwrap();
        assert_eq!(back, topo);
        assert_eq!(back.to_json(), json);
    }
}
