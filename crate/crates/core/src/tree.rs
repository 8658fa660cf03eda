//! Chow-Liu tree approximation of a Gaussian covariance.
//!
//! The tree covariance for a spanning tree keeps every variance and every
//! tree-edge covariance of the input; all other entries follow from the
//! path-product rule, which makes the precision matrix vanish off the tree.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{
    clamp_kl, correlation, kl_tree_simplified, mutual_information_from_correlation, CovMatrix,
};

/// Largest vertex count accepted by [`brute_force_optimal_tree`].
pub const BRUTE_FORCE_MAX_VERTICES: usize = 8;

/// A spanning tree on vertices `0..num_vertices`.
///
/// Edges are stored as `(smaller, larger)` pairs in ascending
/// lexicographic order, so two trees are equal iff their edge sets are.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanningTree {
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl SpanningTree {
    pub fn new(
        num_vertices: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::TooFewVertices { min: 1, got: 0 });
        }
        let mut normalized = Vec::with_capacity(num_vertices - 1);
        for (u, v) in edges {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::VertexOutOfRange {
                    vertex: u.max(v),
                    dim: num_vertices,
                });
            }
            if u == v {
                return Err(Error::InvalidTree(format!("self-loop at vertex {u}")));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        if normalized.len() != num_vertices - 1 {
            return Err(Error::InvalidTree(format!(
                "{} edges for {} vertices",
                normalized.len(),
                num_vertices
            )));
        }
        let mut dsu = DisjointSets::new(num_vertices);
        for &(u, v) in &normalized {
            if !dsu.union(u, v) {
                return Err(Error::InvalidTree(format!(
                    "edge ({u}, {v}) closes a cycle or is duplicated"
                )));
            }
        }
        normalized.sort_unstable();
        Ok(SpanningTree {
            num_vertices,
            edges: normalized,
        })
    }

    /// Decodes a Prüfer sequence of length `n − 2` over `0..n`.
    pub fn from_prufer(num_vertices: usize, sequence: &[usize]) -> Result<Self> {
        if num_vertices < 2 {
            return Err(Error::TooFewVertices {
                min: 2,
                got: num_vertices,
            });
        }
        if sequence.len() != num_vertices - 2 {
            return Err(Error::InvalidTree(format!(
                "Prüfer sequence of length {} for {} vertices",
                sequence.len(),
                num_vertices
            )));
        }
        if let Some(&bad) = sequence.iter().find(|&&s| s >= num_vertices) {
            return Err(Error::VertexOutOfRange {
                vertex: bad,
                dim: num_vertices,
            });
        }
        Ok(Self::decode_prufer(num_vertices, sequence))
    }

    fn decode_prufer(n: usize, sequence: &[usize]) -> Self {
        let mut degree = vec![1usize; n];
        for &s in sequence {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &s in sequence {
            let leaf = (0..n)
                .find(|&v| degree[v] == 1)
                .expect("a leaf always exists");
            edges.push((leaf.min(s), leaf.max(s)));
            degree[leaf] = 0;
            degree[s] -= 1;
        }
        let mut last = (0..n).filter(|&v| degree[v] == 1);
        let (a, b) = (last.next().unwrap(), last.next().unwrap());
        edges.push((a, b));
        edges.sort_unstable();
        SpanningTree {
            num_vertices: n,
            edges,
        }
    }

    /// Path graph `0 – 1 – … – (n−1)`.
    pub fn chain(num_vertices: usize) -> Result<Self> {
        Self::new(num_vertices, (1..num_vertices).map(|v| (v - 1, v)))
    }

    /// Star centered at `center`.
    pub fn star(num_vertices: usize, center: usize) -> Result<Self> {
        Self::new(
            num_vertices,
            (0..num_vertices)
                .filter(|&v| v != center)
                .map(|v| (center, v)),
        )
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

/// Compares the normalized edge sets of two trees on the same vertex set.
pub fn edge_set_equal(a: &SpanningTree, b: &SpanningTree) -> Result<bool> {
    if a.num_vertices != b.num_vertices {
        return Err(Error::DimensionMismatch {
            context: "edge_set_equal vertex count",
            expected: a.num_vertices,
            got: b.num_vertices,
        });
    }
    Ok(a.edges == b.edges)
}

/// Output of a tree approximation: the tree, its covariance, and the KL
/// divergence (nats) from the input distribution to the tree distribution.
#[derive(Clone, Debug)]
pub struct TreeApproxResult {
    pub tree: SpanningTree,
    pub cov: CovMatrix,
    pub kl: f64,
}

/// Chow-Liu approximation: maximum mutual-information spanning tree with
/// its marginal-matching covariance.
pub fn chow_liu(sigma: &CovMatrix) -> Result<TreeApproxResult> {
    let p = sigma.dim();
    if p < 2 {
        return Err(Error::TooFewVertices { min: 2, got: p });
    }
    let weights = mutual_information_weights(sigma)?;
    let tree = max_weight_spanning_tree(p, &weights);
    let cov = tree_covariance(sigma, &tree)?;
    let kl = clamp_kl(kl_tree_simplified(sigma, &cov)?)?;
    Ok(TreeApproxResult { tree, cov, kl })
}

/// All pairwise mutual informations `(u, v, w)` with `u < v`.
pub fn mutual_information_weights(sigma: &CovMatrix) -> Result<Vec<(usize, usize, f64)>> {
    let p = sigma.dim();
    let mut weights = Vec::with_capacity(p * (p - 1) / 2);
    for u in 0..p {
        for v in (u + 1)..p {
            let rho = correlation(sigma, u, v)?;
            let w = mutual_information_from_correlation(rho)
                .map_err(|_| Error::DegenerateCorrelation { u, v, rho })?;
            weights.push((u, v, w));
        }
    }
    Ok(weights)
}

/// Total mutual-information weight of `tree` under `sigma`.
pub fn tree_weight(sigma: &CovMatrix, tree: &SpanningTree) -> Result<f64> {
    check_tree_dim(sigma, tree)?;
    tree.edges
        .iter()
        .map(|&(u, v)| {
            let rho = correlation(sigma, u, v)?;
            mutual_information_from_correlation(rho).map_err(|_| Error::DegenerateCorrelation {
                u,
                v,
                rho,
            })
        })
        .sum()
}

/// Kruskal on descending weight; ties go to the lexicographically smaller
/// edge.
fn max_weight_spanning_tree(p: usize, weights: &[(usize, usize, f64)]) -> SpanningTree {
    let mut order: Vec<_> = weights.to_vec();
    order.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut dsu = DisjointSets::new(p);
    let mut edges = Vec::with_capacity(p - 1);
    for (u, v, _) in order {
        if dsu.union(u, v) {
            edges.push((u, v));
            if edges.len() == p - 1 {
                break;
            }
        }
    }
    edges.sort_unstable();
    SpanningTree {
        num_vertices: p,
        edges,
    }
}

/// Tree covariance of `sigma` on `tree`: variances and edge covariances are
/// copied, every other entry is `√(Σ_uu Σ_vv)` times the product of edge
/// correlations along the tree path.
pub fn tree_covariance(sigma: &CovMatrix, tree: &SpanningTree) -> Result<CovMatrix> {
    check_tree_dim(sigma, tree)?;
    let mut edge_rho = Vec::with_capacity(tree.edges.len());
    for &(u, v) in &tree.edges {
        let rho = correlation(sigma, u, v)?;
        if !(rho.abs() < crate::gaussian::MAX_ABS_CORRELATION) {
            return Err(Error::DegenerateCorrelation { u, v, rho });
        }
        edge_rho.push(rho);
    }
    let variances: Vec<f64> = (0..sigma.dim()).map(|u| sigma.variance(u)).collect();
    let mut m = path_product_matrix(&variances, tree, &edge_rho);
    for &(u, v) in &tree.edges {
        m[(u, v)] = sigma.get(u, v);
        m[(v, u)] = sigma.get(v, u);
    }
    CovMatrix::new(m).map_err(|_| Error::NotPositiveDefinite {
        context: "tree covariance (internal)",
    })
}

/// Tree covariance from explicit variances and per-edge correlations, in
/// the edge order of `tree.edges()`.
pub fn tree_covariance_from_correlations(
    variances: &[f64],
    tree: &SpanningTree,
    edge_correlations: &[f64],
) -> Result<CovMatrix> {
    if variances.len() != tree.num_vertices {
        return Err(Error::DimensionMismatch {
            context: "variances vs tree vertices",
            expected: tree.num_vertices,
            got: variances.len(),
        });
    }
    if edge_correlations.len() != tree.edges.len() {
        return Err(Error::DimensionMismatch {
            context: "edge correlations vs tree edges",
            expected: tree.edges.len(),
            got: edge_correlations.len(),
        });
    }
    for (&(u, v), &rho) in tree.edges.iter().zip(edge_correlations) {
        if !(rho.abs() < crate::gaussian::MAX_ABS_CORRELATION) {
            return Err(Error::DegenerateCorrelation { u, v, rho });
        }
    }
    if let Some(u) = variances.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroVariance(u));
    }
    CovMatrix::new(path_product_matrix(variances, tree, edge_correlations))
}

fn path_product_matrix(variances: &[f64], tree: &SpanningTree, edge_rho: &[f64]) -> DMatrix<f64> {
    let p = tree.num_vertices;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for (&(u, v), &rho) in tree.edges.iter().zip(edge_rho) {
        adj[u].push((v, rho));
        adj[v].push((u, rho));
    }
    let sd: Vec<f64> = variances.iter().map(|s| s.sqrt()).collect();
    let mut m = DMatrix::zeros(p, p);
    let mut path_rho = vec![0.0; p];
    let mut seen = vec![false; p];
    let mut queue = VecDeque::with_capacity(p);
    for root in 0..p {
        seen.iter_mut().for_each(|s| *s = false);
        path_rho[root] = 1.0;
        seen[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for &(v, rho) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    path_rho[v] = path_rho[u] * rho;
                    queue.push_back(v);
                }
            }
        }
        for v in root + 1..p {
            let c = sd[root] * sd[v] * path_rho[v];
            m[(root, v)] = c;
            m[(v, root)] = c;
        }
        m[(root, root)] = variances[root];
    }
    m
}

/// Exhaustive search over every labeled spanning tree (Prüfer decoding) for
/// the tree covariance with the smallest `kl_tree_simplified`. Ties go to
/// the lexicographically smaller edge list.
pub fn brute_force_optimal_tree(sigma: &CovMatrix) -> Result<TreeApproxResult> {
    let p = sigma.dim();
    if p < 2 {
        return Err(Error::TooFewVertices { min: 2, got: p });
    }
    if p > BRUTE_FORCE_MAX_VERTICES {
        return Err(Error::TooManyVertices {
            max: BRUTE_FORCE_MAX_VERTICES,
            got: p,
        });
    }
    let count = labeled_tree_count(p);
    let best = (0..count)
        .into_par_iter()
        .map(|index| {
            let tree = SpanningTree::decode_prufer(p, &prufer_sequence(p, index));
            let cov = tree_covariance(sigma, &tree)?;
            let kl = kl_tree_simplified(sigma, &cov)?;
            Ok((kl, tree))
        })
        .try_reduce_with(|a, b| {
            let a_wins = a.0 < b.0 || (a.0 == b.0 && a.1.edges <= b.1.edges);
            Ok(if a_wins { a } else { b })
        })
        .expect("at least one tree")?;
    let (kl, tree) = best;
    let cov = tree_covariance(sigma, &tree)?;
    Ok(TreeApproxResult {
        tree,
        cov,
        kl: clamp_kl(kl)?,
    })
}

/// Every labeled spanning tree on `p ≥ 2` vertices, in Prüfer-index order.
pub fn enumerate_spanning_trees(p: usize) -> Result<impl Iterator<Item = SpanningTree>> {
    if p < 2 {
        return Err(Error::TooFewVertices { min: 2, got: p });
    }
    if p > BRUTE_FORCE_MAX_VERTICES {
        return Err(Error::TooManyVertices {
            max: BRUTE_FORCE_MAX_VERTICES,
            got: p,
        });
    }
    Ok((0..labeled_tree_count(p))
        .map(move |index| SpanningTree::decode_prufer(p, &prufer_sequence(p, index))))
}

/// Cayley's count `p^(p−2)`.
pub fn labeled_tree_count(p: usize) -> usize {
    if p < 2 {
        return 1;
    }
    p.pow((p - 2) as u32)
}

fn prufer_sequence(p: usize, mut index: usize) -> Vec<usize> {
    let mut seq = vec![0; p - 2];
    for slot in seq.iter_mut().rev() {
        *slot = index % p;
        index /= p;
    }
    seq
}

fn check_tree_dim(sigma: &CovMatrix, tree: &SpanningTree) -> Result<()> {
    if tree.num_vertices != sigma.dim() {
        return Err(Error::DimensionMismatch {
            context: "tree vertices vs covariance dimension",
            expected: sigma.dim(),
            got: tree.num_vertices,
        });
    }
    Ok(())
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
