use std::path::PathBuf;

use clap::Args;
use eit_core::shapes::{generate_dataset, DatasetConfig};

use crate::error::CliError;
use crate::output::write_text;
use crate::runconfig::RunConfig;

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Number of images.
    #[arg(long)]
    total: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum objects per image.
    #[arg(long)]
    objects: Option<usize>,
    /// Output corpus directory.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

pub fn run(args: DatasetArgs, config: &RunConfig) -> Result<(), CliError> {
    let mut size = args.size;
    if size.is_none() {
        for (k, v) in config.section("dataset") {
            if k == "image_size" {
                size = Some(crate::runconfig::value("dataset", k, v)?);
            }
        }
    }
    // Pixel-unit geometry defaults follow the image size.
    let mut cfg = DatasetConfig::for_size(size.unwrap_or(64));
    for (k, v) in config.section("dataset") {
        cfg.set(k, v).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(n) = args.total {
        cfg.total = n;
    }
    if let Some(s) = args.size {
        cfg.image_size = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.objects {
        cfg.objects_per_image = n;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = generate_dataset(&cfg, &args.output)?;
    let echo: String = cfg.echo().lines().map(|l| format!("dataset.{}\n", l.replacen('=', " = ", 1))).collect();
    write_text(&args.output.join("config.echo"), &echo)?;
    println!("{} images written; manifest {}", cfg.total, manifest.display());
    Ok(())
}
