//! Weighted directed communication graph, root set and (expanded) Laplacian.
//!
//! Convention: `adjacency[(i, j)] = a_ij > 0` is an edge from node `j` to node
//! `i` (node `i` receives from `j`). Node indices are zero-based in this API;
//! scenario files use one-based indices.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Topology {
    #[serde(with = "linalg::rows")]
    adjacency: Mat,
    roots: BTreeSet<usize>,
}

impl Topology {
    pub fn new(adjacency: Mat, roots: impl IntoIterator<Item = usize>) -> Result<Self> {
        check_adjacency(&adjacency)?;
        let n = adjacency.nrows();
        let roots: BTreeSet<usize> = roots.into_iter().collect();
        if roots.is_empty() {
            return Err(Error::invalid("root set must be non-empty"));
        }
        if let Some(&bad) = roots.iter().find(|&&r| r >= n) {
            return Err(Error::invalid(format!(
                "root index {bad} out of range for {n} agents"
            )));
        }
        Ok(Self { adjacency, roots })
    }

    /// Builds a graph from `(from, to, weight)` triples.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        roots: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let mut adj = Mat::zeros(n, n);
        for &(from, to, w) in edges {
            if from >= n || to >= n {
                return Err(Error::invalid(format!(
                    "edge {from}->{to} out of range for {n} agents"
                )));
            }
            adj[(to, from)] = w;
        }
        Self::new(adj, roots)
    }

    /// Directed path `0 -> 1 -> ... -> n-1` with unit weights, rooted at 0.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(n, &edges, [0])
    }

    pub fn num_agents(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn roots(&self) -> &BTreeSet<usize> {
        &self.roots
    }

    /// `iota_i = 1` for root nodes, `0` otherwise.
    pub fn iota(&self) -> Vec<f64> {
        (0..self.num_agents())
            .map(|i| if self.roots.contains(&i) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn laplacian(&self) -> Mat {
        laplacian_unchecked(&self.adjacency)
    }

    pub fn expanded_laplacian(&self) -> ExpandedLaplacian {
        let l = self.laplacian();
        let lbar = &l + Mat::from_diagonal(&nalgebra::DVector::from_vec(self.iota()));
        ExpandedLaplacian { l, lbar }
    }

    /// Every node is reachable along directed edges from some root.
    pub fn check_membership(&self) -> bool {
        let n = self.num_agents();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = self.roots.iter().copied().collect();
        for &r in &self.roots {
            seen[r] = true;
        }
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !seen[i] && self.adjacency[(i, j)] > 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn check_adjacency(adj: &Mat) -> Result<()> {
    if !adj.is_square() || adj.is_empty() {
        return Err(Error::invalid(format!(
            "adjacency must be square and non-empty, got {}x{}",
            adj.nrows(),
            adj.ncols()
        )));
    }
    for i in 0..adj.nrows() {
        for j in 0..adj.ncols() {
            let w = adj[(i, j)];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!(
                    "adjacency weight a[{i}][{j}] = {w} must be finite and nonnegative"
                )));
            }
            if i == j && w != 0.0 {
                return Err(Error::invalid(format!(
                    "self-loop at node {i}: a[{i}][{i}] = {w}"
                )));
            }
        }
    }
    Ok(())
}

fn laplacian_unchecked(adj: &Mat) -> Mat {
    let n = adj.nrows();
    let mut l = -adj.clone();
    for i in 0..n {
        l[(i, i)] = adj.row(i).sum();
    }
    l
}

/// Laplacian `l_ii = sum_k a_ik`, `l_ij = -a_ij`, validating the weights.
pub fn laplacian(adjacency: &Mat) -> Result<Mat> {
    check_adjacency(adjacency)?;
    Ok(laplacian_unchecked(adjacency))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedLaplacian {
    pub l: Mat,
    /// `L + diag(iota)`.
    pub lbar: Mat,
}

/// `Lbar = L + diag(iota)` for the given (zero-based) root set.
pub fn expanded_laplacian(l: &Mat, roots: &BTreeSet<usize>) -> Result<ExpandedLaplacian> {
    if !l.is_square() {
        return Err(Error::invalid("Laplacian must be square"));
    }
    if roots.is_empty() {
        return Err(Error::invalid("root set must be non-empty"));
    }
    let n = l.nrows();
    let mut lbar = l.clone();
    for &r in roots {
        if r >= n {
            return Err(Error::invalid(format!("root {r} out of range for {n} agents")));
        }
        lbar[(r, r)] += 1.0;
    }
    Ok(ExpandedLaplacian { l: l.clone(), lbar })
}
