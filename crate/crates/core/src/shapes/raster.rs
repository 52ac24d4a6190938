use super::ShapeImage;

/// A drawable region in pixel coordinates: x along columns, y along rows
/// (row 0 at the top), pixel `(r, c)` centered at `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Figure {
    Circle { center: [f64; 2], radius: f64 },
    Triangle([[f64; 2]; 3]),
    Rectangle { center: [f64; 2], width: f64, height: f64, angle: f64 },
    Polygon(Vec<[f64; 2]>),
    /// Control points of a closed composite cubic Bezier curve.
    Bezier(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Bezier,
    Triangle,
    Circle,
    Polygon,
    Rectangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] =
        [ShapeKind::Bezier, ShapeKind::Triangle, ShapeKind::Circle, ShapeKind::Polygon, ShapeKind::Rectangle];
}

const BEZIER_STEPS: usize = 16;

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn rectangle_corners(center: [f64; 2], width: f64, height: f64, angle: f64) -> Vec<[f64; 2]> {
    let (s, c) = angle.sin_cos();
    [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        .iter()
        .map(|&(u, v)| {
            let (dx, dy) = (u * width, v * height);
            [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
        })
        .collect()
}

/// Samples the closed curve through `points`. Segment `i` runs from `P_i` to
/// `P_{i+1}` with inner control points set from central differences, so the
/// tangent is continuous at every joint.
pub fn bezier_outline(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len();
    if n < 3 {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(n * BEZIER_STEPS);
    for i in 0..n {
        let p0 = points[i];
        let p3 = points[(i + 1) % n];
        let prev = points[(i + n - 1) % n];
        let next = points[(i + 2) % n];
        let p1 = [p0[0] + (p3[0] - prev[0]) / 6.0, p0[1] + (p3[1] - prev[1]) / 6.0];
        let p2 = [p3[0] - (next[0] - p0[0]) / 6.0, p3[1] - (next[1] - p0[1]) / 6.0];
        for k in 0..BEZIER_STEPS {
            let t = k as f64 / BEZIER_STEPS as f64;
            let u = 1.0 - t;
            let (b0, b1, b2, b3) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
            out.push([
                b0 * p0[0] + b1 * p1[0] + b2 * p2[0] + b3 * p3[0],
                b0 * p0[1] + b1 * p1[1] + b2 * p2[1] + b3 * p3[1],
            ]);
        }
    }
    out
}

fn fill_polygon(vertices: &[[f64; 2]], value: f32, image: &mut ShapeImage) {
    if vertices.len() < 3 || polygon_area(vertices).abs() < 1e-12 {
        return;
    }
    let side = image.side;
    let ymin = vertices.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let ymax = vertices.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let r0 = (ymin - 0.5).ceil().max(0.0) as usize;
    let r1 = ((ymax - 0.5).floor() + 1.0).clamp(0.0, side as f64) as usize;
    let n = vertices.len();
    let mut crossings = Vec::new();
    for r in r0..r1 {
        let y = r as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            // half-open rule so shared vertices count once
            if (a[1] <= y) != (b[1] <= y) {
                crossings.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let c0 = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let c1 = ((pair[1] - 0.5).floor() + 1.0).clamp(0.0, side as f64) as usize;
            for c in c0..c1 {
                image.data[r * side + c] = value;
            }
        }
    }
}

/// Sets every pixel whose center lies inside `figure` to `value`. Polygons use
/// the even-odd rule; zero-area figures leave the image unchanged.
pub fn rasterize(figure: &Figure, value: f32, image: &mut ShapeImage) {
    match figure {
        Figure::Circle { center, radius } => {
            if !(*radius > 0.0) {
                return;
            }
            let side = image.side as f64;
            let r0 = (center[1] - radius - 0.5).ceil().max(0.0) as usize;
            let r1 = ((center[1] + radius - 0.5).floor() + 1.0).clamp(0.0, side) as usize;
            let c0 = (center[0] - radius - 0.5).ceil().max(0.0) as usize;
            let c1 = ((center[0] + radius - 0.5).floor() + 1.0).clamp(0.0, side) as usize;
            for r in r0..r1 {
                for c in c0..c1 {
                    let (dx, dy) = (c as f64 + 0.5 - center[0], r as f64 + 0.5 - center[1]);
                    if dx * dx + dy * dy <= radius * radius {
                        image.data[r * image.side + c] = value;
                    }
                }
            }
        }
        Figure::Triangle(v) => fill_polygon(v, value, image),
        Figure::Rectangle { center, width, height, angle } => {
            if *width > 0.0 && *height > 0.0 {
                fill_polygon(&rectangle_corners(*center, *width, *height, *angle), value, image);
            }
        }
        Figure::Polygon(v) => fill_polygon(v, value, image),
        Figure::Bezier(points) => fill_polygon(&bezier_outline(points), value, image),
    }
}

/// Vertices at sorted random angles around `center`, giving a simple
/// star-shaped polygon.
pub(crate) fn star_polygon(center: [f64; 2], angles: &mut [f64], radii: &[f64]) -> Vec<[f64; 2]> {
    angles.sort_by(f64::total_cmp);
    angles
        .iter()
        .zip(radii)
        .map(|(&a, &r)| [center[0] + r * a.cos(), center[1] + r * a.sin()])
        .collect()
}
