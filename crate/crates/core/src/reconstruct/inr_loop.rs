use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::losses::{prior_upstream, total_variation, DataTerm, NoisePredictor};
use super::{Method, ReconstructionConfig, ReconstructionResult, Status, TraceRow};
use crate::diffusion::NoiseSchedule;
use crate::error::{EitError, Result};
use crate::fem::MeasurementFrame;
use crate::grid::pixel_centers;
use crate::inr::{bandwidth_from_mesh, InrModel, RffEncoder};
use crate::mesh::Mesh;
use crate::rng;

enum Prior<'p, P: ?Sized> {
    None,
    Diffusion { predictor: &'p P, schedule: &'p NoiseSchedule },
    Tv,
}

/// Coordinate network fitted to the data alone.
pub fn reconstruct_inr(
    frame: &MeasurementFrame<f64>,
    mesh: &Mesh<f64>,
    config: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    config.validate(usize::MAX)?;
    run::<dyn NoisePredictor>(frame, mesh, config, Prior::None, Method::Inr)
}

/// Coordinate network with the diffusion prior weighted by `config.alpha`.
/// With `alpha = 0` the prior is never evaluated.
pub fn reconstruct_diff_inr<P: NoisePredictor + ?Sized>(
    frame: &MeasurementFrame<f64>,
    mesh: &Mesh<f64>,
    denoiser: &P,
    schedule: &NoiseSchedule,
    config: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    config.validate(schedule.steps())?;
    if !denoiser.frozen() {
        return Err(EitError::Validation("the denoiser must be frozen before reconstruction".into()));
    }
    if denoiser.side() != config.grid_side {
        return Err(EitError::Shape(format!(
            "denoiser works on {0} x {0} images, grid side is {1}",
            denoiser.side(),
            config.grid_side
        )));
    }
    let prior = if config.alpha == 0.0 {
        Prior::None
    } else {
        Prior::Diffusion { predictor: denoiser, schedule }
    };
    run(frame, mesh, config, prior, Method::DiffInr)
}

/// Coordinate network with smoothed total variation of the pixel image,
/// weighted by `config.tv_weight`.
pub fn reconstruct_inr_tv(
    frame: &MeasurementFrame<f64>,
    mesh: &Mesh<f64>,
    config: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    config.validate(usize::MAX)?;
    let prior = if config.tv_weight == 0.0 { Prior::None } else { Prior::Tv };
    run::<dyn NoisePredictor>(frame, mesh, config, prior, Method::InrTv)
}

fn draw_step(config: &ReconstructionConfig, iter: usize, pixels: usize) -> (usize, Vec<f32>) {
    let mut rng = rng::derive(config.seed, rng::stream::RECON_ITER, iter as u64);
    let t = match config.fixed_t {
        Some(t) => t,
        None => rng.gen_range(config.t_min..=config.t_max),
    };
    let eps = (0..pixels).map(|_| StandardNormal.sample(&mut rng)).collect();
    (t, eps)
}

fn run<P: NoisePredictor + ?Sized>(
    frame: &MeasurementFrame<f64>,
    mesh: &Mesh<f64>,
    config: &ReconstructionConfig,
    prior: Prior<'_, P>,
    method: Method,
) -> Result<ReconstructionResult> {
    let start = Instant::now();
    let term = DataTerm::new(frame, mesh, &config.electrode_config(mesh.electrode_count()))?;
    let bandwidth = bandwidth_from_mesh(config.k, mesh.element_count())?;
    let encoder = RffEncoder::new(config.fourier_samples, bandwidth, config.seed);
    let mesh_features = encoder.encode(&mesh.normalized_nodes());
    let side = config.grid_side;
    let grid_features = encoder.encode(&pixel_centers(side));
    let mut model = InrModel::new(encoder.width(), config.sigma_range, config.seed)?;

    let mut trace = Vec::with_capacity(config.max_iters);
    let mut status = Status::Completed;
    for iter in 0..config.max_iters {
        let (sigma, cache) = model.forward_cached(&mesh_features)?;
        let (l_data, upstream) = match term.loss_and_gradient(&sigma) {
            Ok(v) => v,
            Err(e) => {
                status = Status::Aborted(e.to_string());
                break;
            }
        };
        let mut grad = model.backward(&cache, &upstream)?;
        let (l_reg, weight, t) = match &prior {
            Prior::None => (0.0, 0.0, 0),
            Prior::Diffusion { predictor, schedule } => {
                let (grid, gcache) = model.forward_cached(&grid_features)?;
                let (t, eps) = draw_step(config, iter, side * side);
                let (l, up) = prior_upstream(&grid, config.sigma_range, *predictor, schedule, t, &eps, config.lambda_t)?;
                let up: Vec<f64> = up.iter().map(|v| v * config.alpha).collect();
                let g = model.backward(&gcache, &up)?;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                (l, config.alpha, t)
            }
            Prior::Tv => {
                let (grid, gcache) = model.forward_cached(&grid_features)?;
                let (l, up) = total_variation(&grid, side, config.tv_delta());
                let up: Vec<f64> = up.iter().map(|v| v * config.tv_weight).collect();
                let g = model.backward(&gcache, &up)?;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                (l, config.tv_weight, 0)
            }
        };
        model.adam_step(&grad, config.learning_rate)?;
        trace.push(TraceRow {
            iter,
            l_data,
            l_reg,
            l_rec: l_data + weight * l_reg,
            t,
        });
    }

    let (sigma_mesh, _) = model.forward_cached(&mesh_features)?;
    let (sigma_grid, _) = model.forward_cached(&grid_features)?;
    Ok(ReconstructionResult {
        method,
        sigma_mesh,
        sigma_grid,
        grid_side: side,
        iterations: trace.len(),
        trace,
        wall_time: start.elapsed(),
        status,
        network: Some((model, encoder)),
    })
}
