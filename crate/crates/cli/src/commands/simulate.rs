use std::path::PathBuf;

use clap::Args;
use eit_core::fem::{add_noise, save_frame, ElectrodeConfig, ForwardSolver, MeasurementFrame, StimulationPattern};
use eit_core::mesh::{load_mesh, paint_grid, paint_phantom, Mesh, Phantom, Shape};
use eit_core::shapes::{save_shape_image, ShapeImage};

use crate::error::CliError;
use crate::output::{file_digest, sidecar, write_text};
use crate::runconfig::{value, RunConfig};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Forward mesh file.
    #[arg(long)]
    mesh: PathBuf,
    /// `thorax`, `homogeneous` or `circle:x,y,r,value` (x, y, r as fractions of the radius).
    #[arg(long)]
    phantom: Option<String>,
    /// Background conductivity.
    #[arg(long)]
    background: Option<f64>,
    /// Signal-to-noise ratio in dB, or `inf` for a noise-free frame.
    #[arg(long)]
    snr: Option<String>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    contact_impedance: Option<f64>,
    /// Injected current (mA).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Side of the ground-truth image written next to the frame.
    #[arg(long)]
    grid_side: Option<usize>,
    /// Output frame file.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

pub(crate) fn parse_phantom(spec: &str, background: f64, radius: f64) -> Result<Phantom, CliError> {
    let bad = || CliError::Usage(format!("phantom {spec:?}: expected thorax, homogeneous or circle:x,y,r,value"));
    match spec {
        "thorax" => Ok(Phantom::thorax(radius)),
        "homogeneous" => Ok(Phantom::homogeneous(background)),
        _ => {
            let rest = spec.strip_prefix("circle:").ok_or_else(bad)?;
            let v: Vec<f64> = rest
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad())?;
            if v.len() != 4 {
                return Err(bad());
            }
            Ok(Phantom::homogeneous(background)
                .with(Shape::Circle { center: [v[0] * radius, v[1] * radius], radius: v[2] * radius }, v[3]))
        }
    }
}

pub fn run(args: SimulateArgs, config: &RunConfig) -> Result<(), CliError> {
    let mut phantom = "thorax".to_string();
    let mut background = 2.0;
    let mut snr = "60".to_string();
    let mut seed = 0u64;
    let mut z = eit_core::fem::DEFAULT_CONTACT_IMPEDANCE;
    let mut amplitude = 1.0;
    let mut grid_side = 64usize;
    for (k, v) in config.section("simulate") {
        match k {
            "phantom" => phantom = v.to_string(),
            "background" => background = value("simulate", k, v)?,
            "snr" => snr = v.to_string(),
            "seed" => seed = value("simulate", k, v)?,
            "contact_impedance" => z = value("simulate", k, v)?,
            "amplitude" => amplitude = value("simulate", k, v)?,
            "grid_side" => grid_side = value("simulate", k, v)?,
            _ => unreachable!("checked on load"),
        }
    }
    phantom = args.phantom.unwrap_or(phantom);
    background = args.background.unwrap_or(background);
    snr = args.snr.unwrap_or(snr);
    seed = args.seed.unwrap_or(seed);
    z = args.contact_impedance.unwrap_or(z);
    amplitude = args.amplitude.unwrap_or(amplitude);
    grid_side = args.grid_side.unwrap_or(grid_side);
    let snr_db: Option<f64> = match snr.as_str() {
        "inf" => None,
        s => Some(value("simulate", "snr", s)?),
    };

    let mesh: Mesh<f64> = load_mesh(&args.mesh)?;
    let ph = parse_phantom(&phantom, background, mesh.radius)?;
    ph.validate(mesh.radius)?;
    let sigma = paint_phantom(&mesh, &ph);
    let l = mesh.electrode_count();
    let solver = ForwardSolver::new(&mesh, &ElectrodeConfig::uniform(l, z, amplitude))?;
    let clean = MeasurementFrame::new(solver.simulate(&sigma, &StimulationPattern::adjacent(l))?, l);
    let frame = match snr_db {
        Some(db) => add_noise(&clean, db, seed),
        None => clean,
    };
    save_frame(&frame, &args.output)?;

    let truth = paint_grid(&ph, mesh.radius, grid_side);
    let image = ShapeImage { side: grid_side, data: truth.iter().map(|&v| v as f32).collect() };
    save_shape_image(&image, sidecar(&args.output, "truth.img"))?;
    let echo = format!(
        "simulate.phantom = {phantom}\nsimulate.background = {background}\nsimulate.snr = {snr}\n\
         simulate.seed = {seed}\nsimulate.contact_impedance = {z}\nsimulate.amplitude = {amplitude}\n\
         simulate.grid_side = {grid_side}\n# forward_mesh {}\n# forward_mesh_sha256 {}\n",
        args.mesh.display(),
        file_digest(&args.mesh)?
    );
    write_text(&sidecar(&args.output, "echo"), &echo)?;
    println!("{}: {} voltages, snr {snr}", args.output.display(), frame.len());
    Ok(())
}

/// Digest of the forward mesh recorded next to a frame, if any.
pub(crate) fn forward_mesh_digest(frame: &std::path::Path) -> Option<String> {
    let text = std::fs::read_to_string(sidecar(frame, "echo")).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("# forward_mesh_sha256 "))
        .map(|s| s.trim().to_string())
}
