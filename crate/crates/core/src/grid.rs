//! The square pixel grid over `[-1, 1]^2` shared by the prior, the metrics
//! and rendering. Row 0 is the top (`y = +1` side), column 0 the left.

use crate::mesh::Mesh;
use crate::scalar::Real;

/// Pixel-center coordinates in row-major order.
pub fn pixel_centers(side: usize) -> Vec<[f64; 2]> {
    let h = 2.0 / side as f64;
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        let y = 1.0 - (i as f64 + 0.5) * h;
        for j in 0..side {
            out.push([-1.0 + (j as f64 + 0.5) * h, y]);
        }
    }
    out
}

/// Pixels whose centers fall inside the unit disk.
pub fn disk_mask(side: usize) -> Vec<bool> {
    pixel_centers(side)
        .into_iter()
        .map(|[x, y]| x * x + y * y <= 1.0)
        .collect()
}

/// Samples a nodal field at pixel centers by linear interpolation on the
/// containing element. Pixels outside the mesh get `fill`.
pub fn interpolate_to_grid<T: Real>(mesh: &Mesh<T>, values: &[T], side: usize, fill: T) -> Vec<T> {
    let mut out = vec![fill; side * side];
    let r = mesh.radius.to_f64_lossy();
    let h = 2.0 / side as f64;
    let to_col = |x: f64| (x / r + 1.0) / h - 0.5;
    let to_row = |y: f64| (1.0 - y / r) / h - 0.5;
    for tri in &mesh.elements {
        let p: Vec<[f64; 2]> = tri
            .iter()
            .map(|&i| [mesh.nodes[i][0].to_f64_lossy(), mesh.nodes[i][1].to_f64_lossy()])
            .collect();
        let cols = p.iter().map(|q| to_col(q[0]));
        let rows = p.iter().map(|q| to_row(q[1]));
        let (c0, c1) = cols.fold((f64::MAX, f64::MIN), |(a, b), c| (a.min(c), b.max(c)));
        let (r0, r1) = rows.fold((f64::MAX, f64::MIN), |(a, b), c| (a.min(c), b.max(c)));
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let tol = -1e-12;
        let span = |lo: f64, hi: f64| {
            let (a, b) = (lo.ceil().max(0.0), hi.floor().min(side as f64 - 1.0));
            if a > b { 0..0 } else { a as usize..b as usize + 1 }
        };
        for row in span(r0, r1) {
            for col in span(c0, c1) {
                let x = (-1.0 + (col as f64 + 0.5) * h) * r;
                let y = (1.0 - (row as f64 + 0.5) * h) * r;
                let l1 = ((p[2][0] - p[0][0]) * (p[0][1] - y) - (p[0][0] - x) * (p[2][1] - p[0][1])) / det;
                let l2 = ((p[0][0] - x) * (p[1][1] - p[0][1]) - (p[1][0] - p[0][0]) * (p[0][1] - y)) / det;
                let l0 = 1.0 - l1 - l2;
                if l0 >= tol && l1 >= tol && l2 >= tol {
                    out[row * side + col] = values[tri[0]] * T::lit(l0)
                        + values[tri[1]] * T::lit(l1)
                        + values[tri[2]] * T::lit(l2);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;

    #[test]
    fn centers_are_symmetric() {
        let c = pixel_centers(4);
        assert_eq!(c[0], [-0.75, 0.75]);
        assert_eq!(c[15], [0.75, -0.75]);
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let mesh: Mesh<f64> = build_disk_mesh(0.5, 16, 0.5, 6).unwrap();
        let f = |p: &[f64; 2]| 1.0 + 2.0 * p[0] - 3.0 * p[1];
        let vals: Vec<f64> = mesh.nodes.iter().map(f).collect();
        let side = 16;
        let grid = interpolate_to_grid(&mesh, &vals, side, f64::NAN);
        let mask = disk_mask(side);
        for ((g, c), inside) in grid.iter().zip(pixel_centers(side)).zip(mask) {
            let p = [c[0] * 0.5, c[1] * 0.5];
            // the polygonal mesh is inscribed in the circle; pixels in the
            // sliver between polygon and circle stay at the fill value
            if inside && !g.is_nan() {
                assert!((g - f(&p)).abs() < 1e-12);
            }
            if p[0].hypot(p[1]) < 0.45 {
                assert!(!g.is_nan());
            }
        }
    }
}
