use std::time::Instant;

use super::losses::DataTerm;
use super::{Method, ReconstructionConfig, ReconstructionResult, Status, TraceRow};
use crate::error::Result;
use crate::fem::skyline::{Cholesky, Profile};
use crate::fem::MeasurementFrame;
use crate::grid::interpolate_to_grid;
use crate::mesh::Mesh;
use crate::scalar::Real;

const MAX_DAMPING: f64 = 1e6;
const LINE_SEARCH_HALVINGS: usize = 12;

/// Least-squares constant conductivity, clamped to `range`.
pub fn homogeneous_fit(term: &DataTerm<'_>, range: (f64, f64)) -> Result<f64> {
    let n = term.mesh().node_count();
    let unit = term.simulate(&vec![1.0; n])?;
    let v = term.target();
    let num: f64 = unit.iter().map(|u| u * u).sum();
    let den: f64 = unit.iter().zip(v).map(|(u, v)| u * v).sum();
    // Voltages scale as 1/c apart from the contact layer; refine with 1-D Gauss-Newton.
    let mut c = if den > 0.0 { (num / den).clamp(range.0, range.1) } else { 1.0f64.clamp(range.0, range.1) };
    for _ in 0..20 {
        let (r, j) = term.linearize(&vec![c; n])?;
        let dj: Vec<f64> = (0..j.rows).map(|i| j.row(i).iter().sum()).collect();
        let jj: f64 = dj.iter().map(|x| x * x).sum();
        if jj == 0.0 {
            break;
        }
        let step = -dj.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / jj;
        let next = (c + step).clamp(range.0, range.1);
        let done = (next - c).abs() <= 1e-15 * c;
        c = next;
        if done {
            break;
        }
    }
    Ok(c)
}

/// Per-element gradient operators in radius-normalized coordinates.
struct MeshTv {
    grads: Vec<[[f64; 2]; 3]>,
    areas: Vec<f64>,
    nodes: Vec<[usize; 3]>,
    delta: f64,
}

impl MeshTv {
    fn new(mesh: &Mesh<f64>, delta: f64) -> Self {
        let r = mesh.radius;
        let mut grads = Vec::with_capacity(mesh.element_count());
        let mut areas = Vec::with_capacity(mesh.element_count());
        for e in 0..mesh.element_count() {
            let (g, a) = mesh.shape_gradients(e);
            grads.push(g.map(|[x, y]| [x * r, y * r]));
            areas.push(a / (r * r));
        }
        Self {
            grads,
            areas,
            nodes: mesh.elements.clone(),
            delta,
        }
    }

    fn element_gradient(&self, e: usize, sigma: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..3 {
            let s = sigma[self.nodes[e][a]];
            g[0] += s * self.grads[e][a][0];
            g[1] += s * self.grads[e][a][1];
        }
        g
    }

    fn value(&self, sigma: &[f64]) -> f64 {
        (0..self.areas.len())
            .map(|e| {
                let g = self.element_gradient(e, sigma);
                self.areas[e] * (g[0] * g[0] + g[1] * g[1] + self.delta * self.delta).sqrt()
            })
            .sum()
    }

    /// Lagged-diffusivity operator `L(sigma)` added into a dense matrix, and
    /// `L(sigma) sigma`, the TV gradient.
    fn linearize(&self, sigma: &[f64], weight: f64, dense: &mut [f64], n: usize) -> Vec<f64> {
        let mut grad = vec![0.0; n];
        for e in 0..self.areas.len() {
            let g = self.element_gradient(e, sigma);
            let w = self.areas[e] / (g[0] * g[0] + g[1] * g[1] + self.delta * self.delta).sqrt();
            let ge = &self.grads[e];
            for a in 0..3 {
                let na = self.nodes[e][a];
                grad[na] += w * (ge[a][0] * g[0] + ge[a][1] * g[1]);
                for b in 0..3 {
                    let nb = self.nodes[e][b];
                    dense[na * n + nb] += weight * w * (ge[a][0] * ge[b][0] + ge[a][1] * ge[b][1]);
                }
            }
        }
        grad
    }
}

fn dense_solve(matrix: &[f64], n: usize, rhs: &[f64]) -> Result<Vec<f64>> {
    let profile = Profile::from_entries(n, (0..n).map(|i| (i, 0)));
    let mut values = vec![0.0; profile.stored()];
    for i in 0..n {
        for j in 0..=i {
            values[profile.index(i, j)] = matrix[i * n + j];
        }
    }
    Ok(Cholesky::factor(profile, values)?.solve(rhs))
}

/// Gauss-Newton on nodal conductivity with a smoothed total-variation
/// penalty linearized by lagged diffusivity, Levenberg damping, backtracking
/// line search and projection onto `sigma_range`. Starts from the best
/// homogeneous fit.
pub fn reconstruct_tv_gn(
    frame: &MeasurementFrame<f64>,
    mesh: &Mesh<f64>,
    config: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    config.validate(usize::MAX)?;
    let start = Instant::now();
    let term = DataTerm::new(frame, mesh, &config.electrode_config(mesh.electrode_count()))?;
    let tv = MeshTv::new(mesh, config.tv_delta());
    let (lo, hi) = config.sigma_range;
    let beta = config.gn_tv_weight;
    let n = mesh.node_count();
    let objective = |s: &[f64]| -> Result<(f64, f64)> {
        let d = term.loss(s)?;
        Ok((d, d + beta * tv.value(s)))
    };

    let mut sigma = vec![homogeneous_fit(&term, config.sigma_range)?; n];
    let mut phi = objective(&sigma)?.1;
    let mut trace = Vec::new();
    let mut status = Status::Completed;
    for iter in 0..config.gn_iters {
        let (r, j) = match term.linearize(&sigma) {
            Ok(v) => v,
            Err(e) => {
                status = Status::Aborted(e.to_string());
                break;
            }
        };
        let mut h = vec![0.0; n * n];
        f64::gemm(n, j.rows, n, 2.0, &j.data, 1, n, &j.data, n, 1, 0.0, &mut h, n, 1);
        let tv_grad = tv.linearize(&sigma, beta, &mut h, n);
        let twice: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let mut g = j.transpose_mul(&twice);
        g.iter_mut().zip(&tv_grad).for_each(|(a, b)| *a += beta * b);
        if g.iter().all(|v| v.abs() <= f64::EPSILON * phi.max(f64::MIN_POSITIVE)) {
            break;
        }

        let mean_diag = (0..n).map(|i| h[i * n + i]).sum::<f64>() / n as f64;
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let scale = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Damping grows tenfold whenever the system will not factor or the
        // line search finds no decrease.
        let mut mu = 1e-6 * mean_diag;
        let mut accepted = None;
        let mut converged = false;
        while mu <= MAX_DAMPING * mean_diag {
            let mut damped = h.clone();
            for i in 0..n {
                damped[i * n + i] += mu;
            }
            mu *= 10.0;
            let Ok(step) = dense_solve(&damped, n, &neg) else { continue };
            let max_step = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max_step <= 1e-12 * scale {
                converged = true;
                break;
            }
            let mut s = 1.0;
            for _ in 0..LINE_SEARCH_HALVINGS {
                let trial: Vec<f64> = sigma.iter().zip(&step).map(|(a, d)| (a + s * d).clamp(lo, hi)).collect();
                let (d, p) = objective(&trial)?;
                if p < phi {
                    accepted = Some((trial, d, p));
                    break;
                }
                s *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        if converged {
            break;
        }
        let Some((trial, d, p)) = accepted else {
            status = Status::EarlyStop;
            break;
        };
        sigma = trial;
        phi = p;
        trace.push(TraceRow {
            iter,
            l_data: d,
            l_reg: (p - d) / beta.max(f64::MIN_POSITIVE),
            l_rec: phi,
            t: 0,
        });
    }

    let boundary: Vec<f64> = mesh
        .electrode_edges
        .iter()
        .flatten()
        .flat_map(|e| e.iter().map(|&i| sigma[i]))
        .collect();
    let fill = boundary.iter().sum::<f64>() / boundary.len().max(1) as f64;
    let sigma_grid = interpolate_to_grid(mesh, &sigma, config.grid_side, fill);
    Ok(ReconstructionResult {
        method: Method::TvGn,
        sigma_mesh: sigma,
        sigma_grid,
        grid_side: config.grid_side,
        iterations: trace.len(),
        trace,
        wall_time: start.elapsed(),
        status,
        network: None,
    })
}
