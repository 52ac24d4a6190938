use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use eit_core::grid::{disk_mask, pixel_centers};
use eit_core::metrics::{inclusion_scores, psnr, ssim, Polarity, SegmentationRule, TrueInclusion};
use eit_core::shapes::load_shape_image;

use crate::error::CliError;
use crate::output::{run_dir, write_text};
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth conductivity image (the `.truth.img` written by `simulate`).
    #[arg(long)]
    truth: PathBuf,
    /// Reconstruction bundle directories or `sigma_grid.img` files.
    #[arg(long, required = true, num_args = 1..)]
    recon: Vec<PathBuf>,
    /// Case ids, one per reconstruction; defaults to the path names.
    #[arg(long, num_args = 1..)]
    case: Vec<String>,
    #[command(flatten)]
    out: OutputArgs,
}

fn load_image(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = if path.is_dir() { path.join("sigma_grid.img") } else { path.to_path_buf() };
    Ok(load_shape_image(&file)?.data.iter().map(|&v| v as f64).collect())
}

/// Inclusions of a piecewise-constant truth image: 4-connected regions of
/// one value that differ from the most common in-domain value.
pub(crate) fn truth_inclusions(truth: &[f64], domain: &[bool]) -> Vec<(TrueInclusion, Polarity)> {
    let side = (truth.len() as f64).sqrt() as usize;
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for (&v, _) in truth.iter().zip(domain).filter(|(_, &d)| d) {
        match counts.iter_mut().find(|(u, _)| *u == v) {
            Some(c) => c.1 += 1,
            None => counts.push((v, 1)),
        }
    }
    let background = counts.iter().max_by_key(|c| c.1).map_or(0.0, |c| c.0);
    let area = domain.iter().filter(|&&d| d).count() as f64;
    let centers = pixel_centers(side);
    let mut seen = vec![false; truth.len()];
    let mut out = Vec::new();
    for start in 0..truth.len() {
        if seen[start] || !domain[start] || truth[start] == background {
            continue;
        }
        let value = truth[start];
        let (mut n, mut cx, mut cy) = (0usize, 0.0, 0.0);
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            n += 1;
            cx += centers[k][0];
            cy += centers[k][1];
            let (r, c) = (k / side, k % side);
            let mut next = Vec::with_capacity(4);
            if r > 0 {
                next.push(k - side);
            }
            if r + 1 < side {
                next.push(k + side);
            }
            if c > 0 {
                next.push(k - 1);
            }
            if c + 1 < side {
                next.push(k + 1);
            }
            for j in next {
                if !seen[j] && domain[j] && truth[j] == value {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        let polarity = if value < background { Polarity::Negative } else { Polarity::Positive };
        out.push((
            TrueInclusion { centroid: [cx / n as f64, cy / n as f64], coverage: n as f64 / area },
            polarity,
        ));
    }
    out
}

pub fn run(args: EvaluateArgs, _config: &crate::runconfig::RunConfig) -> Result<(), CliError> {
    if !args.case.is_empty() && args.case.len() != args.recon.len() {
        return Err(CliError::Usage(format!(
            "{} case ids for {} reconstructions",
            args.case.len(),
            args.recon.len()
        )));
    }
    let truth = load_image(&args.truth)?;
    let side = (truth.len() as f64).sqrt() as usize;
    let domain = disk_mask(side);
    let inclusions = truth_inclusions(&truth, &domain);
    let (lo, hi) = truth.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };

    let mut csv = String::from("case,psnr,ssim");
    for i in 0..inclusions.len() {
        let _ = write!(csv, ",rcr_{}", i + 1);
    }
    csv.push('\n');
    for (i, path) in args.recon.iter().enumerate() {
        let mut image = load_image(path)?;
        if image.len() != truth.len() {
            return Err(CliError::Runtime(format!(
                "{} has {} pixels, truth has {}",
                path.display(),
                image.len(),
                truth.len()
            )));
        }
        // Pixels outside the tank carry no information; score only the disk.
        for ((v, &t), &d) in image.iter_mut().zip(&truth).zip(&domain) {
            if !d {
                *v = t;
            }
        }
        let case = args.case.get(i).cloned().unwrap_or_else(|| {
            path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
        });
        let p = psnr(&image, &truth, range)?;
        let s = ssim(&image, &truth, range)?;
        let _ = write!(csv, "{case},{p},{s:.6}");
        for (inc, polarity) in &inclusions {
            let rule = SegmentationRule::with_polarity(*polarity);
            let score = inclusion_scores(&image, &domain, std::slice::from_ref(inc), &rule)?;
            let _ = write!(csv, ",{:.4}", score[0].rcr);
        }
        csv.push('\n');
    }
    let dir = run_dir(&args.out, "evaluate", &csv)?;
    write_text(&dir.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
