use eit_core::diffusion::{Denoiser, DenoiserArch, NoiseSchedule};
use eit_core::fem::{ElectrodeConfig, ForwardSolver, MeasurementFrame, StimulationPattern};
use eit_core::grid::pixel_centers;
use eit_core::inr::{inr_forward, InrModel, RffEncoder};
use eit_core::mesh::{build_disk_mesh, paint_phantom, Mesh, Phantom};
use eit_core::reconstruct::*;
use eit_core::shapes::load_shape_image;
use eit_core::Result;

const RADIUS: f64 = 0.14;

fn mesh(rings: usize) -> Mesh<f64> {
    build_disk_mesh(RADIUS, 16, 0.5, rings).unwrap()
}

fn simulate(mesh: &Mesh<f64>, sigma: &[f64]) -> MeasurementFrame<f64> {
    let solver = ForwardSolver::new(mesh, &ElectrodeConfig::standard(16)).unwrap();
    MeasurementFrame::new(solver.simulate(sigma, &StimulationPattern::adjacent(16)).unwrap(), 16)
}

fn inclusion_frame(rings: usize) -> MeasurementFrame<f64> {
    let m = mesh(rings);
    let phantom = Phantom::circle([0.35 * RADIUS, 0.2 * RADIUS], 0.25 * RADIUS, 0.2, 2.0);
    simulate(&m, &paint_phantom(&m, &phantom))
}

fn toy_net(seed: u64) -> (InrModel<f64>, RffEncoder<f64>) {
    let enc = RffEncoder::new(4, 0.8, seed);
    let model = InrModel::with_dims(vec![enc.width(), 16, 16, 1], (0.1, 4.0), seed).unwrap();
    (model, enc)
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm
}

fn central_differences(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let keep = p[i];
            p[i] = keep + h;
            let up = f(&p);
            p[i] = keep - h;
            let down = f(&p);
            p[i] = keep;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn data_loss_vanishes_on_own_prediction() {
    let m = mesh(3);
    let (model, enc) = toy_net(1);
    let sigma = inr_forward(&model, &enc.encode(&m.normalized_nodes())).unwrap();
    let frame = simulate(&m, &sigma);
    let (loss, grad) = data_loss(&frame, &m, &model, &enc, &ElectrodeConfig::standard(16)).unwrap();
    assert!(loss < 1e-20, "{loss}");
    assert!(grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-8);
}

#[test]
fn doubled_residual_quadruples_loss() {
    let m = mesh(3);
    let (model, enc) = toy_net(2);
    let frame = inclusion_frame(3);
    let cfg = ElectrodeConfig::standard(16);
    let (loss, _) = data_loss(&frame, &m, &model, &enc, &cfg).unwrap();
    let sigma = inr_forward(&model, &enc.encode(&m.normalized_nodes())).unwrap();
    let u = simulate(&m, &sigma).voltages;
    let mirrored = u.iter().zip(&frame.voltages).map(|(u, v)| 2.0 * u - v).collect();
    let (loss2, _) = data_loss(&MeasurementFrame::new(mirrored, 16), &m, &model, &enc, &cfg).unwrap();
    // 2U - V only flips the residual; 2V - U doubles it.
    assert!((loss2 - loss).abs() <= 1e-12 * loss);
    let doubled = u.iter().zip(&frame.voltages).map(|(u, v)| 2.0 * v - u).collect();
    let (loss4, _) = data_loss(&MeasurementFrame::new(doubled, 16), &m, &model, &enc, &cfg).unwrap();
    assert!((loss4 - 4.0 * loss).abs() <= 1e-10 * loss, "{loss4} vs {}", 4.0 * loss);
}

#[test]
fn data_loss_gradient_matches_finite_differences() {
    let m = mesh(3);
    assert!(m.element_count() <= 200);
    let (mut model, enc) = toy_net(3);
    assert!(model.param_count() <= 1000);
    let frame = inclusion_frame(3);
    let cfg = ElectrodeConfig::standard(16);
    let (_, grad) = data_loss(&frame, &m, &model, &enc, &cfg).unwrap();
    let params = model.params().to_vec();
    let fd = central_differences(&params, 1e-6, |p| {
        model.params_mut().copy_from_slice(p);
        data_loss(&frame, &m, &model, &enc, &cfg).unwrap().0
    });
    let err = relative_error(&grad, &fd);
    assert!(err < 1e-3, "relative error {err}");
}

struct Fixed {
    side: usize,
    out: Vec<f32>,
}

impl NoisePredictor for Fixed {
    fn side(&self) -> usize {
        self.side
    }

    fn predict(&self, _x_t: &[f32], _t: usize) -> Result<Vec<f32>> {
        Ok(self.out.clone())
    }
}

fn noise(side: usize, seed: u32) -> Vec<f32> {
    (0..side * side).map(|i| ((i as f32 + seed as f32) * 0.731).sin()).collect()
}

#[test]
fn reg_loss_with_zero_weight_or_exact_prediction_is_zero() {
    let (model, enc) = toy_net(4);
    let side = 8;
    let grid = pixel_centers(side);
    let eps = noise(side, 1);
    let schedule = NoiseSchedule::default();
    let other = Fixed { side, out: noise(side, 2) };
    let (l, g) = reg_loss(&model, &enc, &grid, &other, &schedule, 250, &eps, 0.0).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
    let exact = Fixed { side, out: eps.clone() };
    let (l, g) = reg_loss(&model, &enc, &grid, &exact, &schedule, 250, &eps, 1.0).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn reg_loss_gradient_matches_finite_differences_with_fixed_residual() {
    let (mut model, enc) = toy_net(5);
    let side = 8;
    let grid = pixel_centers(side);
    let eps = noise(side, 3);
    let schedule = NoiseSchedule::default();
    let stub = Fixed { side, out: noise(side, 7) };
    let (_, grad) = reg_loss(&model, &enc, &grid, &stub, &schedule, 300, &eps, 0.7).unwrap();
    let params = model.params().to_vec();
    let fd = central_differences(&params, 1e-6, |p| {
        model.params_mut().copy_from_slice(p);
        reg_loss(&model, &enc, &grid, &stub, &schedule, 300, &eps, 0.7).unwrap().0
    });
    let err = relative_error(&grad, &fd);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn reg_loss_rejects_mismatched_grid() {
    let (model, enc) = toy_net(6);
    let stub = Fixed { side: 8, out: noise(8, 0) };
    let grid = pixel_centers(6);
    let r = reg_loss(&model, &enc, &grid, &stub, &NoiseSchedule::default(), 10, &noise(6, 0), 1.0);
    assert!(r.is_err());
}

fn tiny_denoiser() -> Denoiser<f32> {
    let arch = DenoiserArch { side: 8, patch: 2, channels: (4, 8), groups: 2, time_dim: 8, embed_dim: 8 };
    Denoiser::new(arch, 3).unwrap()
}

fn small_config() -> ReconstructionConfig {
    ReconstructionConfig {
        max_iters: 25,
        grid_side: 8,
        fourier_samples: 16,
        seed: 1,
        ..Default::default()
    }
}

#[test]
fn alpha_zero_reproduces_plain_inr() {
    let m = mesh(4);
    let frame = inclusion_frame(5);
    let mut d = tiny_denoiser();
    d.freeze();
    let cfg = ReconstructionConfig { alpha: 0.0, ..small_config() };
    let a = reconstruct_diff_inr(&frame, &m, &d, &NoiseSchedule::default(), &cfg).unwrap();
    let b = reconstruct_inr(&frame, &m, &cfg).unwrap();
    assert_eq!(a.sigma_mesh, b.sigma_mesh);
    assert_eq!(a.sigma_grid, b.sigma_grid);
    assert_eq!(a.trace, b.trace);
    assert!(a.trace.iter().all(|r| r.l_reg == 0.0));
}

#[test]
fn zero_tv_weight_reproduces_plain_inr() {
    let m = mesh(4);
    let frame = inclusion_frame(5);
    let cfg = ReconstructionConfig { tv_weight: 0.0, ..small_config() };
    let a = reconstruct_inr_tv(&frame, &m, &cfg).unwrap();
    let b = reconstruct_inr(&frame, &m, &cfg).unwrap();
    assert_eq!(a.sigma_mesh, b.sigma_mesh);
    assert_eq!(a.sigma_grid, b.sigma_grid);
}

#[test]
fn diff_inr_is_deterministic_and_leaves_prior_untouched() {
    let m = mesh(4);
    let frame = inclusion_frame(5);
    let mut d = tiny_denoiser();
    d.freeze();
    let before = d.checksum();
    let cfg = ReconstructionConfig { alpha: 1e-3, ..small_config() };
    let schedule = NoiseSchedule::default();
    let a = reconstruct_diff_inr(&frame, &m, &d, &schedule, &cfg).unwrap();
    let b = reconstruct_diff_inr(&frame, &m, &d, &schedule, &cfg).unwrap();
    assert_eq!(d.checksum(), before);
    assert_eq!(a.sigma_mesh, b.sigma_mesh);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace.len(), a.iterations);
    assert!(a.trace.iter().all(|r| (100..=400).contains(&r.t) && r.l_reg != 0.0));
    let (lo, hi) = cfg.sigma_range;
    assert!(a.sigma_mesh.iter().chain(&a.sigma_grid).all(|&s| s > lo && s < hi));
}

#[test]
fn fixed_step_is_used_every_iteration() {
    let m = mesh(4);
    let frame = inclusion_frame(5);
    let mut d = tiny_denoiser();
    d.freeze();
    let cfg = ReconstructionConfig { fixed_t: Some(37), max_iters: 5, ..small_config() };
    let r = reconstruct_diff_inr(&frame, &m, &d, &NoiseSchedule::default(), &cfg).unwrap();
    assert!(r.trace.iter().all(|row| row.t == 37));
}

#[test]
fn diff_inr_rejects_trainable_or_mismatched_prior() {
    let m = mesh(4);
    let frame = inclusion_frame(5);
    let d = tiny_denoiser();
    let schedule = NoiseSchedule::default();
    assert!(reconstruct_diff_inr(&frame, &m, &d, &schedule, &small_config()).is_err());
    let mut d = d;
    d.freeze();
    let cfg = ReconstructionConfig { grid_side: 16, ..small_config() };
    assert!(reconstruct_diff_inr(&frame, &m, &d, &schedule, &cfg).is_err());
}

#[test]
fn homogeneous_tank_gives_flat_inr() {
    let m = mesh(6);
    let frame = simulate(&m, &vec![1.3; m.node_count()]);
    let cfg = ReconstructionConfig { max_iters: 500, grid_side: 16, seed: 4, ..Default::default() };
    let r = reconstruct_inr(&frame, &m, &cfg).unwrap();
    let n = r.sigma_mesh.len() as f64;
    let mean = r.sigma_mesh.iter().sum::<f64>() / n;
    let sd = (r.sigma_mesh.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(sd / mean < 0.05, "mean {mean} sd {sd}");
}

#[test]
fn node_and_pixel_values_come_from_one_network() {
    let m = mesh(4);
    let frame = inclusion_frame(5);
    let cfg = ReconstructionConfig { grid_side: 32, ..small_config() };
    let r = reconstruct_inr(&frame, &m, &cfg).unwrap();
    let (model, enc) = r.network.as_ref().unwrap();
    // Lipschitz bound of the network in normalized coordinates.
    let mut bound = 2.0 * std::f64::consts::PI * enc.matrix().iter().map(|b| b * b).sum::<f64>().sqrt();
    let dims = model.dims().to_vec();
    let mut offset = 0;
    for l in 0..dims.len() - 1 {
        let n = dims[l] * dims[l + 1];
        let frob = model.params()[offset..offset + n].iter().map(|w| w * w).sum::<f64>().sqrt();
        bound *= frob * if l + 2 < dims.len() { 1.1 } else { 3.9 / 4.0 };
        offset += n + dims[l + 1];
    }
    let centers = pixel_centers(32);
    for (node, &value) in m.normalized_nodes().iter().zip(&r.sigma_mesh) {
        let (k, d) = centers
            .iter()
            .enumerate()
            .map(|(k, c)| (k, (c[0] - node[0]).hypot(c[1] - node[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((value - r.sigma_grid[k]).abs() <= bound * d + 1e-12);
    }
}

#[test]
fn tv_gn_recovers_homogeneous_tank_at_once() {
    let m = mesh(5);
    let frame = simulate(&m, &vec![2.0; m.node_count()]);
    let cfg = ReconstructionConfig { grid_side: 16, ..Default::default() };
    let r = reconstruct_tv_gn(&frame, &m, &cfg).unwrap();
    assert!(r.iterations <= 3, "{} iterations", r.iterations);
    let term = DataTerm::new(&frame, &m, &cfg.electrode_config(16)).unwrap();
    let loss = term.loss(&r.sigma_mesh).unwrap();
    assert!(loss < 1e-12, "{loss}");
}

#[test]
fn tv_gn_objective_never_increases() {
    let m = mesh(5);
    let frame = inclusion_frame(8);
    let cfg = ReconstructionConfig { grid_side: 16, gn_tv_weight: 1e-7, gn_iters: 8, ..Default::default() };
    let r = reconstruct_tv_gn(&frame, &m, &cfg).unwrap();
    assert!(r.iterations >= 1);
    for w in r.trace.windows(2) {
        assert!(w[1].l_rec <= w[0].l_rec);
    }
    let (lo, hi) = cfg.sigma_range;
    assert!(r.sigma_mesh.iter().all(|&s| s >= lo && s <= hi));
}

#[test]
fn bundle_holds_all_outputs() {
    let m = mesh(4);
    let frame = inclusion_frame(5);
    let cfg = ReconstructionConfig { max_iters: 4, ..small_config() };
    let r = reconstruct_inr(&frame, &m, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), &r, &cfg.echo()).unwrap();
    let mesh_text = std::fs::read_to_string(dir.path().join("sigma_mesh.txt")).unwrap();
    assert_eq!(mesh_text.lines().count(), m.node_count());
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("iter,L_data,L_reg,L_rec,t_sampled"));
    assert_eq!(trace.lines().count(), 5);
    let img = load_shape_image(dir.path().join("sigma_grid.img")).unwrap();
    assert_eq!(img.side, 8);
    assert_eq!(img.data[9], r.sigma_grid[9] as f32);
    let echo = std::fs::read_to_string(dir.path().join("config.echo")).unwrap();
    assert!(echo.contains("# method inr") && echo.contains("seed = 1"));
}
