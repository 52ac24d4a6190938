use std::path::PathBuf;

use clap::Args;
use eit_core::mesh::{save_mesh, DiskMeshBuilder, Mesh};

use crate::error::CliError;
use crate::output::{sidecar, write_text};
use crate::runconfig::{value, RunConfig};

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Tank radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Electrode count (even, at least 4).
    #[arg(long)]
    electrodes: Option<usize>,
    /// Fraction of the boundary covered by electrodes.
    #[arg(long)]
    coverage: Option<f64>,
    /// Ring count; element count is `electrodes * rings^2`.
    #[arg(long, conflicts_with = "elements")]
    rings: Option<usize>,
    /// Target element count; picks the nearest ring count.
    #[arg(long)]
    elements: Option<usize>,
    /// Output mesh file.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

struct Resolved {
    radius: f64,
    electrodes: usize,
    coverage: f64,
    rings: Option<usize>,
    elements: Option<usize>,
}

pub fn run(args: MeshArgs, config: &RunConfig) -> Result<(), CliError> {
    let mut r = Resolved { radius: 0.14, electrodes: 16, coverage: 0.5, rings: None, elements: None };
    for (k, v) in config.section("mesh") {
        match k {
            "radius" => r.radius = value("mesh", k, v)?,
            "electrodes" => r.electrodes = value("mesh", k, v)?,
            "coverage" => r.coverage = value("mesh", k, v)?,
            "rings" => r.rings = Some(value("mesh", k, v)?),
            "elements" => r.elements = Some(value("mesh", k, v)?),
            _ => unreachable!("checked on load"),
        }
    }
    r.radius = args.radius.unwrap_or(r.radius);
    r.electrodes = args.electrodes.unwrap_or(r.electrodes);
    r.coverage = args.coverage.unwrap_or(r.coverage);
    if args.rings.is_some() || args.elements.is_some() {
        r.rings = args.rings;
        r.elements = args.elements;
    }
    let rings = match (r.rings, r.elements) {
        (Some(n), _) => n,
        (None, Some(e)) => DiskMeshBuilder::rings_for_elements(r.electrodes.max(1), e),
        (None, None) => 12,
    };
    let mesh: Mesh<f64> = DiskMeshBuilder::new(r.radius, r.electrodes, r.coverage, rings).build()?;
    save_mesh(&mesh, &args.output)?;
    let echo = format!(
        "mesh.radius = {}\nmesh.electrodes = {}\nmesh.coverage = {}\nmesh.rings = {rings}\n",
        r.radius, r.electrodes, r.coverage
    );
    write_text(&sidecar(&args.output, "echo"), &echo)?;
    println!(
        "{}: {} nodes, {} elements, {} electrodes",
        args.output.display(),
        mesh.node_count(),
        mesh.element_count(),
        mesh.electrode_count()
    );
    Ok(())
}
