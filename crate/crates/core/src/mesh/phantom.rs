use std::f64::consts::PI;

use super::Mesh;
use crate::error::{EitError, Result};
use crate::scalar::Real;

/// Geometric inclusion in physical coordinates (meters).
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Circle { center: [f64; 2], radius: f64 },
    /// Semi-axes along the rotated x and y directions; `angle` in radians.
    Ellipse { center: [f64; 2], semi_axes: [f64; 2], angle: f64 },
    Triangle { vertices: [[f64; 2]; 3] },
    Rectangle { center: [f64; 2], half_extents: [f64; 2], angle: f64 },
}

impl Shape {
    pub fn area(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } => PI * radius * radius,
            Shape::Ellipse { semi_axes, .. } => PI * semi_axes[0] * semi_axes[1],
            Shape::Triangle { vertices: [a, b, c] } => {
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
            }
            Shape::Rectangle { half_extents, .. } => 4.0 * half_extents[0] * half_extents[1],
        }
    }

    pub fn centroid(&self) -> [f64; 2] {
        match self {
            Shape::Circle { center, .. }
            | Shape::Ellipse { center, .. }
            | Shape::Rectangle { center, .. } => *center,
            Shape::Triangle { vertices: [a, b, c] } => {
                [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
            }
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Circle { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx * dx + dy * dy <= radius * radius
            }
            Shape::Ellipse { center, semi_axes, angle } => {
                let [u, v] = to_local(p, *center, *angle);
                (u / semi_axes[0]).powi(2) + (v / semi_axes[1]).powi(2) <= 1.0
            }
            Shape::Triangle { vertices: [a, b, c] } => {
                let side = |p0: &[f64; 2], p1: &[f64; 2]| {
                    (p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])
                };
                let (d1, d2, d3) = (side(a, b), side(b, c), side(c, a));
                let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(neg && pos)
            }
            Shape::Rectangle { center, half_extents, angle } => {
                let [u, v] = to_local(p, *center, *angle);
                u.abs() <= half_extents[0] && v.abs() <= half_extents[1]
            }
        }
    }

    /// Farthest distance from the origin reached by the shape.
    fn extent(&self) -> f64 {
        let norm = |q: [f64; 2]| q[0].hypot(q[1]);
        match self {
            Shape::Circle { center, radius } => norm(*center) + radius,
            Shape::Ellipse { center, semi_axes, .. } => norm(*center) + semi_axes[0].max(semi_axes[1]),
            Shape::Triangle { vertices } => vertices.iter().map(|&v| norm(v)).fold(0.0, f64::max),
            Shape::Rectangle { center, half_extents, .. } => norm(*center) + half_extents[0].hypot(half_extents[1]),
        }
    }
}

fn to_local(p: [f64; 2], center: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    [c * dx + s * dy, -s * dx + c * dy]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inclusion {
    pub shape: Shape,
    pub conductivity: f64,
}

/// Background conductivity plus inclusions, all in mS/cm.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub background: f64,
    pub inclusions: Vec<Inclusion>,
}

impl Phantom {
    pub fn homogeneous(background: f64) -> Self {
        Self {
            background,
            inclusions: Vec::new(),
        }
    }

    pub fn with(mut self, shape: Shape, conductivity: f64) -> Self {
        self.inclusions.push(Inclusion { shape, conductivity });
        self
    }

    /// Thorax analog in a tank of the given radius: two low-conductivity lung
    /// ellipses and a high-conductivity heart circle on a 2.0 background.
    pub fn thorax(radius: f64) -> Self {
        let s = radius;
        Phantom::homogeneous(2.0)
            .with(
                Shape::Ellipse { center: [-0.43 * s, -0.05 * s], semi_axes: [0.24 * s, 0.40 * s], angle: 0.15 },
                0.5,
            )
            .with(
                Shape::Ellipse { center: [0.43 * s, -0.05 * s], semi_axes: [0.24 * s, 0.40 * s], angle: -0.15 },
                0.5,
            )
            .with(Shape::Circle { center: [0.0, 0.42 * s], radius: 0.2 * s }, 3.0)
    }

    /// Single circular inclusion.
    pub fn circle(center: [f64; 2], inclusion_radius: f64, value: f64, background: f64) -> Self {
        Phantom::homogeneous(background).with(Shape::Circle { center, radius: inclusion_radius }, value)
    }

    pub fn validate(&self, tank_radius: f64) -> Result<()> {
        if !(self.background > 0.0) {
            return Err(EitError::Domain(format!("background conductivity {} is not positive", self.background)));
        }
        for (i, inc) in self.inclusions.iter().enumerate() {
            if !(inc.conductivity > 0.0) {
                return Err(EitError::Domain(format!("inclusion {i} conductivity {} is not positive", inc.conductivity)));
            }
            if inc.shape.extent() > tank_radius * (1.0 + 1e-12) {
                return Err(EitError::Domain(format!("inclusion {i} extends outside the tank")));
            }
        }
        Ok(())
    }

    /// Inclusions ordered for painting: largest area first, so the innermost
    /// (smallest) containing inclusion is painted last.
    fn paint_order(&self) -> Vec<&Inclusion> {
        let mut order: Vec<&Inclusion> = self.inclusions.iter().collect();
        order.sort_by(|a, b| b.shape.area().total_cmp(&a.shape.area()));
        order
    }

    /// Conductivity at a physical point.
    pub fn value_at(&self, p: [f64; 2]) -> f64 {
        self.paint_order()
            .iter()
            .rev()
            .find(|inc| inc.shape.contains(p))
            .map_or(self.background, |inc| inc.conductivity)
    }
}

pub fn paint_phantom<T: Real>(mesh: &Mesh<T>, phantom: &Phantom) -> Vec<T> {
    let order = phantom.paint_order();
    mesh.nodes
        .iter()
        .map(|p| {
            let p = [p[0].to_f64_lossy(), p[1].to_f64_lossy()];
            let mut value = phantom.background;
            for inc in &order {
                if inc.shape.contains(p) {
                    value = inc.conductivity;
                }
            }
            T::lit(value)
        })
        .collect()
}

/// Rasterizes the phantom on a `side x side` grid spanning the tank's
/// bounding square, row 0 at the top. Pixels outside the tank get the
/// background value.
pub fn paint_grid(phantom: &Phantom, tank_radius: f64, side: usize) -> Vec<f64> {
    crate::grid::pixel_centers(side)
        .into_iter()
        .map(|[x, y]| phantom.value_at([x * tank_radius, y * tank_radius]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;
    use rand::{Rng, SeedableRng};

    #[test]
    fn empty_phantom_is_constant() {
        let mesh: Mesh<f64> = build_disk_mesh(1.0, 16, 0.5, 4).unwrap();
        let sigma = paint_phantom(&mesh, &Phantom::homogeneous(2.0));
        assert_eq!(sigma.len(), mesh.node_count());
        assert!(sigma.iter().all(|&s| s == 2.0));
    }

    #[test]
    fn centered_circle_containment() {
        let mesh: Mesh<f64> = build_disk_mesh(1.0, 16, 0.5, 8).unwrap();
        let phantom = Phantom::homogeneous(1.0).with(Shape::Circle { center: [0.0, 0.0], radius: 0.3 }, 3.0);
        let sigma = paint_phantom(&mesh, &phantom);
        for (p, s) in mesh.nodes.iter().zip(&sigma) {
            let inside = p[0].hypot(p[1]) <= 0.3;
            assert_eq!(*s, if inside { 3.0 } else { 1.0 });
        }
    }

    #[test]
    fn thorax_lung_fraction_matches_area() {
        // Monte-Carlo estimate of the ellipse area fraction of the disk,
        // compared with the fraction of (area-weighted) nodes painted 0.5.
        let r = 0.14;
        let phantom = Phantom::thorax(r);
        phantom.validate(r).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (mut inside, mut hits) = (0usize, 0usize);
        while inside < 200_000 {
            let p = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
            if p[0].hypot(p[1]) <= r {
                inside += 1;
                if phantom.value_at(p) == 0.5 {
                    hits += 1;
                }
            }
        }
        let mc_fraction = hits as f64 / inside as f64;

        let mesh: Mesh<f64> = build_disk_mesh(r, 16, 0.5, 24).unwrap();
        let sigma = paint_phantom(&mesh, &phantom);
        // Nodes of a ring mesh carry unequal area; weight by one third of the
        // adjacent element areas.
        let mut weight = vec![0.0; mesh.node_count()];
        for e in 0..mesh.element_count() {
            let a = mesh.signed_area(e) / 3.0;
            for &i in &mesh.elements[e] {
                weight[i] += a;
            }
        }
        let total: f64 = weight.iter().sum();
        let lung: f64 = weight.iter().zip(&sigma).filter(|(_, &s)| s == 0.5).map(|(w, _)| w).sum();
        let node_fraction = lung / total;
        assert!(
            (node_fraction - mc_fraction).abs() / mc_fraction < 0.05,
            "{node_fraction} vs {mc_fraction}"
        );
    }

    #[test]
    fn painting_is_idempotent_and_order_free() {
        let mesh: Mesh<f64> = build_disk_mesh(1.0, 16, 0.5, 6).unwrap();
        let a = Shape::Circle { center: [0.4, 0.0], radius: 0.2 };
        let b = Shape::Rectangle { center: [-0.4, 0.1], half_extents: [0.1, 0.2], angle: 0.3 };
        let p1 = Phantom::homogeneous(1.0).with(a.clone(), 2.0).with(b.clone(), 0.5);
        let p2 = Phantom::homogeneous(1.0).with(b, 0.5).with(a, 2.0);
        let s1 = paint_phantom(&mesh, &p1);
        assert_eq!(s1, paint_phantom(&mesh, &p1));
        assert_eq!(s1, paint_phantom(&mesh, &p2));
    }

    #[test]
    fn small_inclusion_sits_on_top() {
        let big = Shape::Circle { center: [0.0, 0.0], radius: 0.5 };
        let small = Shape::Circle { center: [0.0, 0.0], radius: 0.1 };
        let p = Phantom::homogeneous(1.0).with(small, 3.0).with(big, 0.5);
        assert_eq!(p.value_at([0.0, 0.0]), 3.0);
        assert_eq!(p.value_at([0.3, 0.0]), 0.5);
    }

    #[test]
    fn validation() {
        assert!(Phantom::homogeneous(0.0).validate(1.0).is_err());
        let outside = Phantom::homogeneous(1.0).with(Shape::Circle { center: [0.9, 0.0], radius: 0.2 }, 2.0);
        assert!(outside.validate(1.0).is_err());
        let negative = Phantom::homogeneous(1.0).with(Shape::Circle { center: [0.0, 0.0], radius: 0.2 }, -2.0);
        assert!(negative.validate(1.0).is_err());
    }
}
