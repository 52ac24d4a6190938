use crate::diffusion::{noising, Denoiser, NoiseSchedule};
use crate::error::{EitError, Result};
use crate::fem::{ElectrodeConfig, ForwardSolver, Jacobian, MeasurementFrame, StimulationPattern};
use crate::inr::{Features, InrModel, RffEncoder};
use crate::mesh::Mesh;

/// Anything that predicts the noise in `x_t`; the reconstruction loop only
/// ever reads from it.
pub trait NoisePredictor {
    fn side(&self) -> usize;

    fn predict(&self, x_t: &[f32], t: usize) -> Result<Vec<f32>>;

    fn frozen(&self) -> bool {
        true
    }
}

impl NoisePredictor for Denoiser<f32> {
    fn side(&self) -> usize {
        Denoiser::side(self)
    }

    fn predict(&self, x_t: &[f32], t: usize) -> Result<Vec<f32>> {
        self.predict_noise(x_t, t)
    }

    fn frozen(&self) -> bool {
        self.is_frozen()
    }
}

/// Squared voltage misfit on a fixed mesh, adjacent pattern and frame.
pub struct DataTerm<'a> {
    solver: ForwardSolver<'a, f64>,
    pattern: StimulationPattern,
    target: Vec<f64>,
}

impl<'a> DataTerm<'a> {
    pub fn new(frame: &MeasurementFrame<f64>, mesh: &'a Mesh<f64>, config: &ElectrodeConfig<f64>) -> Result<Self> {
        let l = mesh.electrode_count();
        if let Some(fl) = frame.electrode_count {
            if fl != l {
                return Err(EitError::Shape(format!("frame is for {fl} electrodes, mesh has {l}")));
            }
        }
        let pattern = StimulationPattern::adjacent(l);
        if frame.len() != pattern.measurement_count() {
            return Err(EitError::Shape(format!(
                "frame has {} voltages, the adjacent pattern on {l} electrodes has {}",
                frame.len(),
                pattern.measurement_count()
            )));
        }
        let solver = ForwardSolver::new(mesh, config)?;
        Ok(Self {
            solver,
            pattern,
            target: frame.voltages.clone(),
        })
    }

    pub fn mesh(&self) -> &Mesh<f64> {
        self.solver.mesh()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn simulate(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        self.solver.simulate(sigma, &self.pattern)
    }

    pub fn loss(&self, sigma: &[f64]) -> Result<f64> {
        let u = self.simulate(sigma)?;
        Ok(u.iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Residual `U(sigma) - V` and the sensitivity matrix.
    pub fn linearize(&self, sigma: &[f64]) -> Result<(Vec<f64>, Jacobian<f64>)> {
        let (u, j) = self.solver.simulate_with_jacobian(sigma, &self.pattern)?;
        let r = u.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        Ok((r, j))
    }

    /// Loss and its gradient `2 J^T (U - V)` with respect to nodal sigma.
    pub fn loss_and_gradient(&self, sigma: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (r, j) = self.linearize(sigma)?;
        let loss = r.iter().map(|v| v * v).sum();
        let twice: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        Ok((loss, j.transpose_mul(&twice)))
    }
}

/// Data misfit of the network's nodal conductivity and its parameter gradient.
pub fn data_loss(
    frame: &MeasurementFrame<f64>,
    mesh: &Mesh<f64>,
    model: &InrModel<f64>,
    encoder: &RffEncoder<f64>,
    config: &ElectrodeConfig<f64>,
) -> Result<(f64, Vec<f64>)> {
    let term = DataTerm::new(frame, mesh, config)?;
    let features = encoder.encode(&mesh.normalized_nodes());
    let (sigma, cache) = model.forward_cached(&features)?;
    let (loss, upstream) = term.loss_and_gradient(&sigma)?;
    Ok((loss, model.backward(&cache, &upstream)?))
}

/// Rescales conductivity from `range` to `[-1, 1]`.
pub(crate) fn to_unit(sigma: &[f64], (lo, hi): (f64, f64)) -> Vec<f64> {
    sigma.iter().map(|s| 2.0 * (s - lo) / (hi - lo) - 1.0).collect()
}

/// Prior loss `lambda_t <r, x0>` with the fixed residual
/// `r = eps_hat(x_t, t) - eps`, and its gradient with respect to `sigma_grid`.
pub(crate) fn prior_upstream<P: NoisePredictor + ?Sized>(
    sigma_grid: &[f64],
    range: (f64, f64),
    predictor: &P,
    schedule: &NoiseSchedule,
    t: usize,
    eps: &[f32],
    lambda_t: f64,
) -> Result<(f64, Vec<f64>)> {
    let side = predictor.side();
    if sigma_grid.len() != side * side || eps.len() != side * side {
        return Err(EitError::Shape(format!(
            "denoiser expects {side} x {side} images, grid has {} pixels and noise {}",
            sigma_grid.len(),
            eps.len()
        )));
    }
    let x0 = to_unit(sigma_grid, range);
    let x0f: Vec<f32> = x0.iter().map(|&v| v as f32).collect();
    let xt = noising(&x0f, t, eps, schedule)?;
    let eps_hat = predictor.predict(&xt, t)?;
    if eps_hat.len() != eps.len() {
        return Err(EitError::Shape(format!("prediction has {} values, noise {}", eps_hat.len(), eps.len())));
    }
    let r: Vec<f64> = eps_hat.iter().zip(eps).map(|(&p, &e)| lambda_t * (p as f64 - e as f64)).collect();
    let loss = r.iter().zip(&x0).map(|(a, b)| a * b).sum();
    let scale = 2.0 / (range.1 - range.0);
    Ok((loss, r.iter().map(|v| v * scale).collect()))
}

/// Score-distillation prior loss on the pixel grid and its parameter gradient.
/// The residual is treated as a constant.
#[allow(clippy::too_many_arguments)]
pub fn reg_loss<P: NoisePredictor + ?Sized>(
    model: &InrModel<f64>,
    encoder: &RffEncoder<f64>,
    grid: &[[f64; 2]],
    predictor: &P,
    schedule: &NoiseSchedule,
    t: usize,
    eps: &[f32],
    lambda_t: f64,
) -> Result<(f64, Vec<f64>)> {
    let features = encoder.encode(grid);
    reg_from_features(model, &features, predictor, schedule, t, eps, lambda_t)
}

pub(crate) fn reg_from_features<P: NoisePredictor + ?Sized>(
    model: &InrModel<f64>,
    features: &Features<f64>,
    predictor: &P,
    schedule: &NoiseSchedule,
    t: usize,
    eps: &[f32],
    lambda_t: f64,
) -> Result<(f64, Vec<f64>)> {
    let (sigma, cache) = model.forward_cached(features)?;
    let (loss, upstream) = prior_upstream(&sigma, model.sigma_range(), predictor, schedule, t, eps, lambda_t)?;
    Ok((loss, model.backward(&cache, &upstream)?))
}

/// Smoothed isotropic total variation of a square image with forward
/// differences (zero across the last row and column), and its gradient.
pub fn total_variation(image: &[f64], side: usize, delta: f64) -> (f64, Vec<f64>) {
    assert_eq!(image.len(), side * side);
    let mut value = 0.0;
    let mut grad = vec![0.0; image.len()];
    let d2 = delta * delta;
    for i in 0..side {
        for j in 0..side {
            let p = i * side + j;
            let dx = if j + 1 < side { image[p + 1] - image[p] } else { 0.0 };
            let dy = if i + 1 < side { image[p + side] - image[p] } else { 0.0 };
            let m = (dx * dx + dy * dy + d2).sqrt();
            value += m;
            grad[p] -= (dx + dy) / m;
            if j + 1 < side {
                grad[p + 1] += dx / m;
            }
            if i + 1 < side {
                grad[p + side] += dy / m;
            }
        }
    }
    (value, grad)
}
