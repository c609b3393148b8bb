use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{CsrMatrix, Matrix};
use crate::error::{invalid, Result};

/// Undirected graph in CSR form. Both directions of every edge are stored
/// and each neighbour list is sorted.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    self_loops: bool,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.num_edges())
            .field("self_loops", &self.self_loops)
            .finish()
    }
}

impl Graph {
    /// Builds an undirected simple graph. Each pair may appear in either
    /// orientation and repeatedly; duplicates collapse. `u == v` is rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(invalid(format!("self-loop ({u}, {v}) is not allowed in input edges")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        Ok(Self::from_adjacency(adj, false))
    }

    fn from_adjacency(mut adj: Vec<Vec<usize>>, self_loops: bool) -> Self {
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Self {
            n,
            offsets,
            neighbors,
            self_loops,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_adjacency(vec![Vec::new(); n], false)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Number of stored neighbours, including the self-loop when present.
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Undirected edge count, self-loops excluded.
    pub fn num_edges(&self) -> usize {
        let loops = if self.self_loops { self.n } else { 0 };
        (self.neighbors.len() - loops) / 2
    }

    /// Each undirected non-loop edge once, as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Copy with exactly one self-loop per node.
    pub fn with_self_loops(&self) -> Self {
        if self.self_loops {
            return self.clone();
        }
        let adj = (0..self.n)
            .map(|i| {
                let mut l = self.neighbors(i).to_vec();
                l.push(i);
                l
            })
            .collect();
        Self::from_adjacency(adj, true)
    }

    /// Adjacency as a CSR matrix of ones (rows are destinations).
    pub fn adjacency_csr(&self) -> CsrMatrix {
        CsrMatrix::new(
            self.n,
            self.n,
            self.offsets.clone(),
            self.neighbors.clone(),
            vec![1.0; self.neighbors.len()],
        )
        .expect("graph CSR is well formed")
    }

    /// Symmetric normalisation `D^{-1/2} (A + I) D^{-1/2}` with degrees of `A + I`.
    pub fn gcn_normalized(&self) -> CsrMatrix {
        let g = self.with_self_loops();
        let inv_sqrt: Vec<f64> = (0..g.n).map(|i| 1.0 / (g.degree(i) as f64).sqrt()).collect();
        let mut values = Vec::with_capacity(g.neighbors.len());
        for i in 0..g.n {
            for &j in g.neighbors(i) {
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
        }
        CsrMatrix::new(g.n, g.n, g.offsets, g.neighbors, values).expect("graph CSR is well formed")
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let mut adj = vec![Vec::new(); self.n];
        for i in 0..self.n {
            adj[perm[i]] = self.neighbors(i).iter().map(|&j| perm[j]).collect();
        }
        Ok(Self::from_adjacency(adj, self.self_loops))
    }

    /// Subgraph induced by `nodes`; node `nodes[k]` becomes `k`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.n];
        for (k, &v) in nodes.iter().enumerate() {
            local[v] = k;
        }
        let adj = nodes
            .iter()
            .map(|&v| {
                self.neighbors(v)
                    .iter()
                    .filter_map(|&w| (local[w] != usize::MAX).then_some(local[w]))
                    .collect()
            })
            .collect();
        Self::from_adjacency(adj, self.self_loops)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|u| self.neighbors(u).iter().all(|&v| self.neighbors(v).binary_search(&u).is_ok()))
    }

    /// Dense 0/1 adjacency (self-loops included when present).
    pub fn to_dense(&self) -> Matrix {
        self.adjacency_csr().to_dense()
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(invalid(format!("permutation has length {} for {n} nodes", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(invalid(format!("permutation is not a bijection on 0..{n} (entry {p})")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Inverse of a permutation given as `perm[old] = new`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
    None,
}

impl Split {
    pub fn code(self) -> char {
        match self {
            Split::Train => 't',
            Split::Valid => 'v',
            Split::Test => 's',
            Split::None => '-',
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "t" => Some(Split::Train),
            "v" => Some(Split::Valid),
            "s" => Some(Split::Test),
            "-" => Some(Split::None),
            _ => None,
        }
    }
}

/// Graph plus node features, labels (`-1` = unlabeled) and split marks.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Vec<i64>,
    pub splits: Vec<Split>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(graph: Graph, features: Matrix, labels: Vec<i64>, splits: Vec<Split>, num_classes: usize) -> Result<Self> {
        let d = Self {
            graph,
            features,
            labels,
            splits,
            num_classes,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.features.rows() != n || self.labels.len() != n || self.splits.len() != n {
            return Err(invalid(format!(
                "dataset sizes disagree: n = {n}, features {}, labels {}, splits {}",
                self.features.rows(),
                self.labels.len(),
                self.splits.len()
            )));
        }
        for (i, (&y, &s)) in self.labels.iter().zip(&self.splits).enumerate() {
            if y < -1 || y >= self.num_classes as i64 {
                return Err(invalid(format!("node {i}: label {y} outside [-1, {})", self.num_classes)));
            }
            if s != Split::None && y < 0 {
                return Err(invalid(format!("node {i}: split-marked node has no label")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Node indices carrying `split`, ascending.
    pub fn mask(&self, split: Split) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Relabels node `i` as `perm[i]` everywhere.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let graph = self.graph.permute(perm)?;
        let mut labels = vec![0; self.n()];
        let mut splits = vec![Split::None; self.n()];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i];
            splits[p] = self.splits[i];
        }
        Ok(Self {
            graph,
            features: self.features.permute_rows(perm),
            labels,
            splits,
            num_classes: self.num_classes,
        })
    }

    /// Node-induced sub-dataset; node `nodes[k]` becomes `k`.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        Self {
            graph: self.graph.induced_subgraph(nodes),
            features: self.features.gather_rows(nodes),
            labels: nodes.iter().map(|&i| self.labels[i]).collect(),
            splits: nodes.iter().map(|&i| self.splits[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Assignment of every node to one of `parts` nonempty groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partitioning {
    pub part_of: Vec<usize>,
    pub parts: usize,
}

impl Partitioning {
    /// Nodes of part `p`, ascending.
    pub fn members(&self, p: usize) -> Vec<usize> {
        (0..self.part_of.len()).filter(|&i| self.part_of[i] == p).collect()
    }
}

/// Uniform random partition into `parts` groups whose sizes differ by at most one.
pub fn random_partition(n: usize, parts: usize, seed: u64) -> Result<Partitioning> {
    if parts == 0 || parts > n {
        return Err(invalid(format!("random_partition: need 1 <= parts <= n, got parts = {parts}, n = {n}")));
    }
    let order = random_permutation(n, seed);
    let mut part_of = vec![0; n];
    for (k, &node) in order.iter().enumerate() {
        part_of[node] = k % parts;
    }
    Ok(Partitioning { part_of, parts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (2, 1), (1, 0)]).unwrap()
    }

    #[test]
    fn loader_symmetrizes_and_dedups() {
        let g = path3();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.is_symmetric());
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn self_loops_once_per_node() {
        let g = path3().with_self_loops();
        assert_eq!(g.neighbors(1), &[0, 1, 2]);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.with_self_loops(), g);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(3, &[(5, 2)]).is_err());
        assert!(Graph::from_edges(3, &[(1, 1)]).is_err());
    }

    #[test]
    fn permutation_must_be_bijective() {
        assert!(path3().permute(&[0, 0, 1]).is_err());
        assert!(path3().permute(&[0, 1]).is_err());
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (3, 4), (0, 4)]).unwrap();
        let p = random_permutation(5, 3);
        let back = g.permute(&p).unwrap().permute(&invert_permutation(&p)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn partitions_are_balanced() {
        let p = random_partition(10, 1, 0).unwrap();
        assert!(p.part_of.iter().all(|&x| x == 0));
        let p = random_partition(10, 10, 0).unwrap();
        let mut seen = p.part_of.clone();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        let p = random_partition(11, 3, 9).unwrap();
        let sizes: Vec<usize> = (0..3).map(|k| p.members(k).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(sizes.iter().sum::<usize>(), 11);
        assert!(random_partition(3, 4, 0).is_err());
        assert!(random_partition(3, 0, 0).is_err());
    }

    #[test]
    fn induced_subgraph_drops_crossing_edges() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = g.induced_subgraph(&[1, 2, 3]);
        assert_eq!(s.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn gcn_normalization_values() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let a = g.gcn_normalized();
        assert!(a.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert_eq!(a.nnz(), 4);
    }
}
