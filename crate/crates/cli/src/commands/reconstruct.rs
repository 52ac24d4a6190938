use std::path::PathBuf;

use clap::Args;
use eit_core::diffusion::load_checkpoint;
use eit_core::fem::load_frame;
use eit_core::mesh::{load_mesh, Mesh};
use eit_core::reconstruct::{
    reconstruct_diff_inr, reconstruct_inr, reconstruct_inr_tv, reconstruct_tv_gn, write_bundle, Method,
    ReconstructionConfig, Status,
};

use crate::error::CliError;
use crate::output::{file_digest, run_dir};
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// `diff-inr`, `inr`, `inr-tv` or `tv-gn`.
    #[arg(long)]
    method: Option<String>,
    /// Measurement frame file.
    #[arg(long)]
    frame: PathBuf,
    /// Inverse (reconstruction) mesh file.
    #[arg(long)]
    mesh: PathBuf,
    /// Denoiser checkpoint; required for `diff-inr` unless `--alpha 0`.
    #[arg(long)]
    denoiser: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Bandwidth scale k in `b = k sqrt(element_count)`.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    /// Fixed diffusion step instead of sampling one per iteration.
    #[arg(long)]
    fixed_t: Option<usize>,
    /// Total-variation weight of `inr-tv`.
    #[arg(long)]
    tv_weight: Option<f64>,
    /// Total-variation weight of `tv-gn`.
    #[arg(long)]
    gn_tv_weight: Option<f64>,
    #[arg(long)]
    gn_iters: Option<usize>,
    #[arg(long)]
    grid_side: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

fn usage(e: eit_core::EitError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn run(args: ReconstructArgs, config: &crate::runconfig::RunConfig) -> Result<(), CliError> {
    let mut cfg = ReconstructionConfig::default();
    let mut method = "diff-inr".to_string();
    for (k, v) in config.section("reconstruct") {
        if k == "method" {
            method = v.to_string();
        } else {
            cfg.set(k, v).map_err(usage)?;
        }
    }
    let method: Method = args.method.unwrap_or(method).parse().map_err(usage)?;
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.alpha, args.alpha);
    set(&mut cfg.learning_rate, args.lr);
    set(&mut cfg.k, args.k);
    set(&mut cfg.tv_weight, args.tv_weight);
    set(&mut cfg.gn_tv_weight, args.gn_tv_weight);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.max_iters = args.iters.unwrap_or(cfg.max_iters);
    cfg.t_min = args.t_min.unwrap_or(cfg.t_min);
    cfg.t_max = args.t_max.unwrap_or(cfg.t_max);
    cfg.fixed_t = args.fixed_t.or(cfg.fixed_t);
    cfg.gn_iters = args.gn_iters.unwrap_or(cfg.gn_iters);
    cfg.grid_side = args.grid_side.unwrap_or(cfg.grid_side);

    let frame = load_frame(&args.frame)?;
    let mesh: Mesh<f64> = load_mesh(&args.mesh)?;
    if super::simulate::forward_mesh_digest(&args.frame) == Some(file_digest(&args.mesh)?) {
        eprintln!(
            "warning: inverse crime: {} was simulated on the reconstruction mesh {}",
            args.frame.display(),
            args.mesh.display()
        );
    }

    let result = match method {
        Method::DiffInr => match &args.denoiser {
            Some(path) => {
                let ck = load_checkpoint(path)?;
                let mut denoiser = ck.denoiser;
                denoiser.freeze();
                let before = denoiser.checksum();
                let r = reconstruct_diff_inr(&frame, &mesh, &denoiser, &ck.schedule, &cfg)?;
                assert_eq!(before, denoiser.checksum(), "denoiser weights changed during reconstruction");
                r
            }
            None if cfg.alpha == 0.0 => reconstruct_inr(&frame, &mesh, &cfg).map(|mut r| {
                r.method = Method::DiffInr;
                r
            })?,
            None => return Err(CliError::Usage("--method diff-inr needs --denoiser unless --alpha 0".into())),
        },
        Method::Inr => reconstruct_inr(&frame, &mesh, &cfg)?,
        Method::InrTv => reconstruct_inr_tv(&frame, &mesh, &cfg)?,
        Method::TvGn => reconstruct_tv_gn(&frame, &mesh, &cfg)?,
    };

    let mut echo = String::new();
    for line in cfg.echo().lines() {
        echo.push_str(&format!("reconstruct.{line}\n"));
    }
    echo.push_str(&format!(
        "reconstruct.method = {}\n# frame {}\n# mesh {}\n",
        method.name(),
        args.frame.display(),
        args.mesh.display()
    ));
    if let Some(d) = &args.denoiser {
        echo.push_str(&format!("# denoiser {}\n", d.display()));
    }
    let dir = run_dir(&args.out, "reconstruct", &echo)?;
    write_bundle(&dir, &result, &echo)?;
    if let Status::Aborted(msg) = &result.status {
        return Err(CliError::Runtime(format!("reconstruction aborted: {msg} (partial bundle in {})", dir.display())));
    }
    let last = result.trace.last();
    eprintln!(
        "{}: {} iterations in {:.1}s, final data loss {:.4e}",
        method.name(),
        result.iterations,
        result.wall_time.as_secs_f64(),
        last.map_or(f64::NAN, |r| r.l_data)
    );
    println!("{}", dir.display());
    Ok(())
}
