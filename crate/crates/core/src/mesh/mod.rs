//! Triangular meshes of a circular tank with boundary electrodes.
//!
//! Nodes are stored ring by ring from the center outwards, with the boundary
//! ring last. Conductivity lives on nodes (piecewise linear over elements).

mod build;
mod io;
mod phantom;

pub use build::{build_disk_mesh, DiskMeshBuilder};
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};
pub use phantom::{paint_grid, paint_phantom, Inclusion, Phantom, Shape};

use crate::error::{EitError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub nodes: Vec<[T; 2]>,
    /// Counter-clockwise node triples.
    pub elements: Vec<[usize; 3]>,
    /// Boundary edges per electrode, electrode `q` at index `q`.
    pub electrode_edges: Vec<Vec<[usize; 2]>>,
    pub radius: T,
}

impl<T: Real> Mesh<T> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn electrode_count(&self) -> usize {
        self.electrode_edges.len()
    }

    /// Signed area of element `e`; positive for counter-clockwise ordering.
    pub fn signed_area(&self, e: usize) -> T {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        cross * T::lit(0.5)
    }

    /// Gradients of the three linear shape functions on element `e`, plus its area.
    pub fn shape_gradients(&self, e: usize) -> ([[T; 2]; 3], T) {
        let [a, b, c] = self.elements[e];
        let p = [self.nodes[a], self.nodes[b], self.nodes[c]];
        let area = self.signed_area(e);
        let inv = T::one() / (area + area);
        let mut g = [[T::zero(); 2]; 3];
        for i in 0..3 {
            let j = p[(i + 1) % 3];
            let k = p[(i + 2) % 3];
            g[i] = [(j[1] - k[1]) * inv, (k[0] - j[0]) * inv];
        }
        (g, area)
    }

    /// Unique undirected edges, each as `(low, high)`, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .elements
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[x, y]| if x < y { [x, y] } else { [y, x] })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn edge_length(&self, [a, b]: [usize; 2]) -> T {
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }

    /// Node coordinates scaled into `[-1, 1]^2` (the disk's bounding square).
    pub fn normalized_nodes(&self) -> Vec<[T; 2]> {
        self.nodes
            .iter()
            .map(|p| [p[0] / self.radius, p[1] / self.radius])
            .collect()
    }

    /// Checks every structural invariant, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if !(self.radius > T::zero()) {
            return Err(EitError::Validation(format!("radius {} is not positive", self.radius)));
        }
        if self.electrode_edges.is_empty() {
            return Err(EitError::Validation("mesh has no electrodes".into()));
        }
        for (e, tri) in self.elements.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(EitError::Validation(format!(
                    "element {e} references node {bad} but mesh has {n} nodes"
                )));
            }
            if !(self.signed_area(e) > T::zero()) {
                return Err(EitError::Validation(format!(
                    "element {e} has non-positive signed area"
                )));
            }
        }
        let tol = T::lit(1e-9) * self.radius;
        let mut seen = std::collections::HashMap::new();
        for (q, edges) in self.electrode_edges.iter().enumerate() {
            if edges.is_empty() {
                return Err(EitError::Validation(format!("electrode {q} has no edges")));
            }
            for &[a, b] in edges {
                for i in [a, b] {
                    if i >= n {
                        return Err(EitError::Validation(format!(
                            "electrode {q} references node {i} but mesh has {n} nodes"
                        )));
                    }
                    let r = self.nodes[i][0].hypot(self.nodes[i][1]);
                    if (r - self.radius).abs() > tol {
                        return Err(EitError::Validation(format!(
                            "electrode {q} node {i} is off the boundary circle"
                        )));
                    }
                }
                let key = if a < b { [a, b] } else { [b, a] };
                if let Some(other) = seen.insert(key, q) {
                    if other != q {
                        return Err(EitError::Validation(format!(
                            "electrodes {other} and {q} share edge {a}-{b}"
                        )));
                    }
                }
            }
        }
        let euler = n as i64 - self.edges().len() as i64 + self.elements.len() as i64;
        if euler != 1 {
            return Err(EitError::Validation(format!(
                "Euler characteristic is {euler}, expected 1 for a disk"
            )));
        }
        Ok(())
    }

    /// Total length of electrode `q`.
    pub fn electrode_length(&self, q: usize) -> T {
        self.electrode_edges[q]
            .iter()
            .map(|&e| self.edge_length(e))
            .sum()
    }
}

/// Arithmetic mean length over the set of unique edges.
pub fn mean_edge_length<T: Real>(mesh: &Mesh<T>) -> T {
    let edges = mesh.edges();
    if edges.is_empty() {
        return T::zero();
    }
    let total: T = edges.iter().map(|&e| mesh.edge_length(e)).sum();
    total / T::lit(edges.len() as f64)
}
