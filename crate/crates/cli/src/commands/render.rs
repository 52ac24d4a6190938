use std::path::{Path, PathBuf};

use clap::Args;
use eit_core::grid::interpolate_to_grid;
use eit_core::mesh::{load_mesh, Mesh};
use eit_core::shapes::load_shape_image;

use crate::error::{io_error, CliError};
use crate::output::{sidecar, write_text};

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A `.img` grid, a reconstruction bundle directory, or a nodal
    /// `sigma_mesh.txt` (needs --mesh).
    #[arg(long)]
    input: PathBuf,
    /// Mesh for nodal input.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Image side for nodal input.
    #[arg(long, default_value_t = 64)]
    side: usize,
    /// Output PGM file.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

fn read_nodal(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| CliError::Runtime(format!("{}: bad value {l:?}", path.display())))
        })
        .collect()
}

/// Binary PGM with values mapped linearly from `[lo, hi]` to `0..=255`;
/// a constant field maps to mid-gray.
pub(crate) fn encode_pgm(values: &[f64], side: usize, lo: f64, hi: f64) -> Vec<u8> {
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    let flat = hi - lo <= 1e-12 * hi.abs().max(lo.abs());
    out.extend(values.iter().map(|&v| {
        if !flat {
            ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            128
        }
    }));
    out
}

pub fn run(args: RenderArgs, _config: &crate::runconfig::RunConfig) -> Result<(), CliError> {
    let input = if args.input.is_dir() { args.input.join("sigma_grid.img") } else { args.input.clone() };
    let (values, side) = if input.extension().is_some_and(|e| e == "img") {
        let img = load_shape_image(&input)?;
        (img.data.iter().map(|&v| v as f64).collect::<Vec<_>>(), img.side)
    } else {
        let mesh_path = args
            .mesh
            .as_ref()
            .ok_or_else(|| CliError::Usage("nodal input needs --mesh".into()))?;
        let mesh: Mesh<f64> = load_mesh(mesh_path)?;
        let nodal = read_nodal(&input)?;
        if nodal.len() != mesh.node_count() {
            return Err(CliError::Runtime(format!(
                "{} values for a mesh with {} nodes",
                nodal.len(),
                mesh.node_count()
            )));
        }
        let lo = nodal.iter().cloned().fold(f64::MAX, f64::min);
        (interpolate_to_grid(&mesh, &nodal, args.side, lo), args.side)
    };
    let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    std::fs::write(&args.output, encode_pgm(&values, side, lo, hi)).map_err(|e| io_error(&args.output, e))?;
    write_text(&sidecar(&args.output, "scale"), &format!("min = {lo:e}\nmax = {hi:e}\n"))?;
    println!("{}: {side} x {side}, [{lo:.4}, {hi:.4}]", args.output.display());
    Ok(())
}
