use std::f64::consts::PI;

use super::Mesh;
use crate::error::{EitError, Result};
use crate::scalar::Real;

/// Structured concentric-ring disk mesh.
///
/// Ring `r` (1-based) carries `r * first_ring` equispaced nodes, so every ring
/// is invariant under rotation by one electrode pitch as long as `first_ring`
/// is a multiple of the electrode count. Element count is `first_ring * rings^2`.
#[derive(Debug, Clone)]
pub struct DiskMeshBuilder {
    pub radius: f64,
    pub electrode_count: usize,
    pub coverage: f64,
    pub rings: usize,
    pub first_ring: usize,
}

impl DiskMeshBuilder {
    pub fn new(radius: f64, electrode_count: usize, coverage: f64, rings: usize) -> Self {
        Self {
            radius,
            electrode_count,
            coverage,
            rings,
            first_ring: electrode_count,
        }
    }

    pub fn first_ring(mut self, nodes: usize) -> Self {
        self.first_ring = nodes;
        self
    }

    /// Ring count whose element count is closest to `target`.
    pub fn rings_for_elements(first_ring: usize, target: usize) -> usize {
        let r = (target as f64 / first_ring as f64).sqrt();
        let lo = r.floor().max(1.0) as usize;
        let hi = lo + 1;
        let err = |k: usize| (first_ring * k * k).abs_diff(target);
        if err(hi) < err(lo) {
            hi
        } else {
            lo
        }
    }

    /// Edges per electrode implied by the coverage fraction.
    fn edges_per_electrode(&self) -> usize {
        let per_pitch = self.rings * self.first_ring / self.electrode_count;
        (self.coverage * per_pitch as f64).round() as usize
    }

    pub fn build<T: Real>(&self) -> Result<Mesh<T>> {
        let l = self.electrode_count;
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(EitError::Domain(format!("radius must be positive, got {}", self.radius)));
        }
        if l < 4 || l % 2 != 0 {
            return Err(EitError::Domain(format!(
                "electrode count must be even and at least 4, got {l}"
            )));
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return Err(EitError::Domain(format!(
                "electrode coverage must lie in (0, 1), got {}",
                self.coverage
            )));
        }
        if self.rings == 0 {
            return Err(EitError::Domain("at least one ring is required".into()));
        }
        if self.first_ring == 0 || self.first_ring % l != 0 {
            return Err(EitError::Domain(format!(
                "first ring node count {} must be a positive multiple of {l}",
                self.first_ring
            )));
        }
        let per_electrode = self.edges_per_electrode();
        if per_electrode == 0 {
            return Err(EitError::Domain(format!(
                "coverage {} with {} boundary nodes leaves electrodes narrower than one edge",
                self.coverage,
                self.rings * self.first_ring
            )));
        }

        let radius = T::lit(self.radius);
        let mut nodes = vec![[T::zero(); 2]];
        let mut ring_start = vec![0usize];
        for r in 1..=self.rings {
            ring_start.push(nodes.len());
            let count = r * self.first_ring;
            let rr = self.radius * r as f64 / self.rings as f64;
            for j in 0..count {
                let theta = 2.0 * PI * j as f64 / count as f64;
                let (s, c) = theta.sin_cos();
                // Boundary nodes are placed exactly on the circle.
                let (x, y) = if r == self.rings { (self.radius * c, self.radius * s) } else { (rr * c, rr * s) };
                nodes.push([T::lit(x), T::lit(y)]);
            }
        }

        let mut elements = Vec::with_capacity(self.first_ring * self.rings * self.rings);
        let n1 = self.first_ring;
        let s1 = ring_start[1];
        for j in 0..n1 {
            elements.push([0, s1 + j, s1 + (j + 1) % n1]);
        }
        for r in 2..=self.rings {
            let (na, nb) = ((r - 1) * n1, r * n1);
            let (sa, sb) = (ring_start[r - 1], ring_start[r]);
            let (mut i, mut j) = (0usize, 0usize);
            while i < na || j < nb {
                // Compare next angles (i+1)/na and (j+1)/nb exactly in integers;
                // ties advance the outer ring.
                let advance_outer = j < nb && (i == na || (j + 1) * na <= (i + 1) * nb);
                if advance_outer {
                    elements.push([sa + i % na, sb + j, sb + (j + 1) % nb]);
                    j += 1;
                } else {
                    elements.push([sa + i, sb + j % nb, sa + (i + 1) % na]);
                    i += 1;
                }
            }
        }

        let nb = self.rings * n1;
        let sb = ring_start[self.rings];
        let pitch = nb / l;
        let mut electrode_edges = Vec::with_capacity(l);
        for q in 0..l {
            let center = q * pitch;
            // Odd counts are centered on an edge midpoint, even counts on a node.
            let first = center as isize - (per_electrode / 2) as isize;
            let edges = (0..per_electrode)
                .map(|k| {
                    let a = (first + k as isize).rem_euclid(nb as isize) as usize;
                    [sb + a, sb + (a + 1) % nb]
                })
                .collect();
            electrode_edges.push(edges);
        }

        let mesh = Mesh {
            nodes,
            elements,
            electrode_edges,
            radius,
        };
        debug_assert!(mesh.validate().is_ok());
        Ok(mesh)
    }
}

/// Disk mesh whose first ring has one node per electrode.
pub fn build_disk_mesh<T: Real>(
    radius: f64,
    electrode_count: usize,
    electrode_coverage: f64,
    rings: usize,
) -> Result<Mesh<T>> {
    DiskMeshBuilder::new(radius, electrode_count, electrode_coverage, rings).build()
}
