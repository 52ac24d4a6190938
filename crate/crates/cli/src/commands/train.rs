use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use eit_core::diffusion::{load_checkpoint, DenoiserArch, NoiseSchedule, TrainConfig, Trainer};
use eit_core::shapes::load_corpus;

use crate::error::CliError;
use crate::output::{sidecar, write_text};
use crate::runconfig::{value, RunConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory written by `dataset`.
    #[arg(long)]
    corpus: PathBuf,
    /// Steps to run (added to the checkpoint's count with --resume).
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Global gradient-norm clip; 0 disables it.
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Continue from the checkpoint at the output path.
    #[arg(long)]
    resume: bool,
    /// Checkpoint file.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

pub fn run(args: TrainArgs, config: &RunConfig) -> Result<(), CliError> {
    let mut cfg = TrainConfig::default();
    for (k, v) in config.section("train") {
        match k {
            "steps" => cfg.steps = value("train", k, v)?,
            "batch_size" => cfg.batch_size = value("train", k, v)?,
            "learning_rate" => cfg.learning_rate = value("train", k, v)?,
            "grad_clip" => cfg.grad_clip = value("train", k, v)?,
            "seed" => cfg.seed = value("train", k, v)?,
            "checkpoint_every" => cfg.checkpoint_every = value("train", k, v)?,
            _ => unreachable!("checked on load"),
        }
    }
    cfg.steps = args.steps.unwrap_or(cfg.steps);
    cfg.batch_size = args.batch_size.unwrap_or(cfg.batch_size);
    cfg.learning_rate = args.lr.unwrap_or(cfg.learning_rate);
    cfg.grad_clip = args.clip.unwrap_or(cfg.grad_clip);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.checkpoint_every = args.checkpoint_every.unwrap_or(cfg.checkpoint_every);
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(CliError::Usage("batch size and learning rate must be positive".into()));
    }

    let corpus = load_corpus(&args.corpus)?;
    if corpus.is_empty() {
        return Err(CliError::Runtime(format!("corpus {} is empty", args.corpus.display())));
    }
    let (mut trainer, schedule) = if args.resume {
        let ck = load_checkpoint(&args.output)?;
        let schedule = ck.schedule.clone();
        (Trainer::from_checkpoint(ck)?, schedule)
    } else {
        let arch = DenoiserArch::desk(corpus[0].side);
        (Trainer::new(arch, cfg.seed)?, NoiseSchedule::default())
    };
    let start_step = trainer.step;
    cfg.steps += start_step;
    let every = ((cfg.steps - start_step) / 20).max(1);
    let clock = Instant::now();
    let mut window = (0.0f64, 0u64);
    trainer.run(&corpus, &schedule, &cfg, Some(&args.output), |step, loss| {
        window.0 += loss as f64;
        window.1 += 1;
        if (step - start_step) % every == 0 || step == cfg.steps {
            eprintln!(
                "step {step}/{} loss {:.5} ({:.1}s)",
                cfg.steps,
                window.0 / window.1 as f64,
                clock.elapsed().as_secs_f64()
            );
            window = (0.0, 0);
        }
    })?;
    let echo = format!(
        "train.steps = {}\ntrain.batch_size = {}\ntrain.learning_rate = {:e}\ntrain.grad_clip = {}\n\
         train.seed = {}\ntrain.checkpoint_every = {}\n# corpus {}\n# arch {}\n",
        cfg.steps,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.grad_clip,
        cfg.seed,
        cfg.checkpoint_every,
        args.corpus.display(),
        trainer.denoiser.arch().describe()
    );
    write_text(&sidecar(&args.output, "echo"), &echo)?;
    println!("{} at step {}", args.output.display(), trainer.step);
    Ok(())
}
