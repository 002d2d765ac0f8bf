//! Friedrichs–Keller triangulations of the unit square.

use crate::{Error, Result};

/// Uniform triangulation of `(0,1)²` with `n` cells per side, each cell cut
/// by its lower-left to upper-right diagonal.
///
/// Nodes are numbered lexicographically with `x` running fastest, so node
/// `(i, j)` has index `j * (n + 1) + i` and coordinates `(i/n, j/n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    n: usize,
    h: f64,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    interior: Vec<usize>,
    // node index -> position in `interior`
    interior_position: Vec<Option<usize>>,
}

impl Mesh {
    pub fn build_friedrichs_keller(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 subdivisions per side, got {n}"
            )));
        }
        let side = n + 1;
        let idx = |i: usize, j: usize| j * side + i;

        let mut nodes = Vec::with_capacity(side * side);
        let mut boundary = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let ll = idx(i, j);
                let lr = idx(i + 1, j);
                let ul = idx(i, j + 1);
                let ur = idx(i + 1, j + 1);
                triangles.push([ll, lr, ur]);
                triangles.push([ll, ur, ul]);
            }
        }

        let mut interior = Vec::with_capacity((n - 1) * (n - 1));
        let mut interior_position = vec![None; side * side];
        for (k, &on_boundary) in boundary.iter().enumerate() {
            if !on_boundary {
                interior_position[k] = Some(interior.len());
                interior.push(k);
            }
        }

        Ok(Self {
            n,
            h: 1.0 / n as f64,
            nodes,
            triangles,
            boundary,
            interior,
            interior_position,
        })
    }

    /// Subdivisions per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Indices of nodes not on ∂Ω, ascending.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Position of a node within [`Mesh::interior_nodes`], if interior.
    pub fn interior_position(&self, node: usize) -> Option<usize> {
        self.interior_position.get(node).copied().flatten()
    }

    /// Signed area of triangle `t`.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Zero-extends a vector on the interior nodes to all nodes.
    pub fn extend_interior(&self, interior_values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(interior_values.len(), self.interior.len());
        let mut full = vec![0.0; self.nodes.len()];
        for (&k, &v) in self.interior.iter().zip(interior_values) {
            full[k] = v;
        }
        full
    }

    /// Restricts a vector on all nodes to the interior nodes.
    pub fn restrict_interior(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.nodes.len());
        self.interior.iter().map(|&k| values[k]).collect()
    }
}
