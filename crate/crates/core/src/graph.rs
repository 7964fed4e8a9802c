//! Undirected weighted information-sharing graph and its Laplacian.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{numerical_rank, Mat};

/// Symmetric nonnegative adjacency with an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingGraph {
    weights: Mat,
}

impl SharingGraph {
    pub fn from_adjacency(weights: Mat) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::DimensionMismatch("adjacency must be square".into()));
        }
        let n = weights.rows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("self loop on node {}", i + 1)));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !(w >= 0.0) || w != weights[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "weight a[{}][{}] must be nonnegative and symmetric",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(SharingGraph { weights })
    }

    /// Builds a graph from 0-based `(i, j, weight)` triples. Repeated edges
    /// overwrite earlier ones.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = Mat::zeros(n, n);
        for &(i, j, a) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self loop on node {}", i + 1)));
            }
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::InvalidInput(format!("edge weight {a} must be nonnegative")));
            }
            w[(i, j)] = a;
            w[(j, i)] = a;
        }
        Ok(SharingGraph { weights: w })
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn adjacency(&self) -> &Mat {
        &self.weights
    }

    /// Neighbors of `i` with their (positive) edge weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, w)| (j, *w))
    }

    /// Breadth-first reachability over positive weights.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Connectivity decided by `rank(L) = n - 1`.
    pub fn is_connected_by_rank(&self) -> bool {
        let n = self.n();
        n <= 1 || numerical_rank(&self.laplacian().l, None) == n - 1
    }

    pub fn laplacian(&self) -> LaplacianBundle {
        let n = self.n();
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            let mut deg = 0.0;
            for j in 0..n {
                if i != j {
                    l[(i, j)] = -self.weights[(i, j)];
                    deg += self.weights[(i, j)];
                }
            }
            l[(i, i)] = deg;
        }
        let r = if n == 0 {
            Vec::new()
        } else {
            vec![1.0 / libm::sqrt(n as f64); n]
        };
        let basis = complement_basis(&r);
        LaplacianBundle { l, r, basis }
    }
}

/// Laplacian `L` together with the unit consensus direction `r = 1/√n` and
/// an orthonormal basis `R` of its complement (`RᵀR = I`, `Rᵀr = 0`,
/// `RRᵀ = I - rrᵀ`).
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBundle {
    pub l: Mat,
    pub r: Vec<f64>,
    pub basis: Mat,
}

/// Gram–Schmidt (two passes) on `e_k - r (rᵀ e_k)`, keeping the first
/// `n - 1` directions that survive.
fn complement_basis(r: &[f64]) -> Mat {
    let n = r.len();
    let target = n.saturating_sub(1);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(target);
    for k in 0..n {
        if cols.len() == target {
            break;
        }
        let mut v: Vec<f64> = (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        for _ in 0..2 {
            project_out(&mut v, r);
            for c in &cols {
                project_out(&mut v, c);
            }
        }
        let norm = crate::numerics::norm2(&v);
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    let mut basis = Mat::zeros(n, target);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            basis[(i, j)] = c[i];
        }
    }
    basis
}

fn project_out(v: &mut [f64], u: &[f64]) {
    let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
}
