use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::io::{save_checkpoint, Checkpoint};
use super::schedule::{noising, NoiseSchedule};
use super::unet::{Denoiser, DenoiserArch};
use crate::error::{EitError, Result};
use crate::optim::Adam;
use crate::rng;
use crate::shapes::ShapeImage;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 20_000, batch_size: 8, learning_rate: 1e-3, grad_clip: 1.0, seed: 0, checkpoint_every: 1000 }
    }
}

/// Denoiser plus optimizer state; resuming from a checkpoint continues the
/// exact same trajectory.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub denoiser: Denoiser<f32>,
    pub adam: Adam<f32>,
    pub step: u64,
    pub losses: Vec<f32>,
}

fn standard_normals(rng: &mut rng::Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

impl Trainer {
    pub fn new(arch: DenoiserArch, seed: u64) -> Result<Self> {
        let denoiser = Denoiser::new(arch, seed)?;
        let adam = Adam::new(denoiser.param_count());
        Ok(Self { denoiser, adam, step: 0, losses: Vec::new() })
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        let Checkpoint { denoiser, adam, step, losses, .. } = checkpoint;
        if denoiser.is_frozen() {
            return Err(EitError::Validation("cannot train a frozen denoiser".into()));
        }
        let adam = adam.unwrap_or_else(|| Adam::new(denoiser.param_count()));
        Ok(Self { denoiser, adam, step, losses })
    }

    /// One optimizer step on a batch drawn from `derive(seed, TRAIN_STEP, step)`.
    pub fn train_step(&mut self, corpus: &[ShapeImage], schedule: &NoiseSchedule, config: &TrainConfig) -> Result<f32> {
        let side = self.denoiser.side();
        let px = side * side;
        let mut rng = rng::derive(config.seed, rng::stream::TRAIN_STEP, self.step);
        let b = config.batch_size;
        let mut x = Vec::with_capacity(b * px);
        let mut ts = Vec::with_capacity(b);
        let mut eps = Vec::with_capacity(b * px);
        for _ in 0..b {
            let img = &corpus[rng.gen_range(0..corpus.len())];
            let t = rng.gen_range(1..=schedule.steps());
            let e = standard_normals(&mut rng, px);
            x.extend(noising(&img.data, t, &e, schedule)?);
            ts.push(t);
            eps.extend(e);
        }
        let (pred, cache) = self.denoiser.forward(&x, &ts)?;
        let scale = 1.0 / (b * px) as f32;
        let mut loss = 0.0f64;
        let upstream: Vec<f32> = pred
            .iter()
            .zip(&eps)
            .map(|(&p, &e)| {
                let d = p - e;
                loss += (d * d) as f64;
                2.0 * d * scale
            })
            .collect();
        let loss = (loss / (b * px) as f64) as f32;
        if !loss.is_finite() {
            return Err(EitError::Numerical(format!("training loss diverged at step {}", self.step)));
        }
        let mut grad = self.denoiser.backward(&cache, &upstream)?;
        if config.grad_clip > 0.0 {
            let norm = grad.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
            if norm > config.grad_clip {
                let s = (config.grad_clip / norm) as f32;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        self.adam.update(self.denoiser.params_mut()?, &grad, config.learning_rate as f32)?;
        self.step += 1;
        self.losses.push(loss);
        Ok(loss)
    }

    /// Trains until `config.steps`, checkpointing to `checkpoint` when given.
    /// `on_step` sees the step count and loss after every update.
    pub fn run(
        &mut self,
        corpus: &[ShapeImage],
        schedule: &NoiseSchedule,
        config: &TrainConfig,
        checkpoint: Option<&Path>,
        mut on_step: impl FnMut(u64, f32),
    ) -> Result<()> {
        validate_corpus(corpus, self.denoiser.side())?;
        if config.batch_size == 0 || !(config.learning_rate > 0.0) {
            return Err(EitError::Validation("batch size and learning rate must be positive".into()));
        }
        while self.step < config.steps {
            let loss = self.train_step(corpus, schedule, config)?;
            on_step(self.step, loss);
            if let Some(path) = checkpoint {
                if config.checkpoint_every > 0 && self.step % config.checkpoint_every == 0 {
                    save_checkpoint(path, &self.checkpoint(schedule))?;
                }
            }
        }
        if let Some(path) = checkpoint {
            save_checkpoint(path, &self.checkpoint(schedule))?;
        }
        Ok(())
    }

    pub fn checkpoint(&self, schedule: &NoiseSchedule) -> Checkpoint {
        Checkpoint {
            denoiser: self.denoiser.clone(),
            schedule: schedule.clone(),
            adam: Some(self.adam.clone()),
            step: self.step,
            losses: self.losses.clone(),
        }
    }
}

pub fn validate_corpus(corpus: &[ShapeImage], side: usize) -> Result<()> {
    if corpus.is_empty() {
        return Err(EitError::Validation("training corpus is empty".into()));
    }
    if let Some((i, img)) = corpus.iter().enumerate().find(|(_, img)| img.side != side) {
        return Err(EitError::Shape(format!("corpus image {i} has side {} but the denoiser expects {side}", img.side)));
    }
    if corpus.iter().flat_map(|img| &img.data).any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(EitError::Validation("corpus values must lie in [-1, 1]".into()));
    }
    Ok(())
}

/// Trains a fresh denoiser and returns it frozen, with the per-step losses.
pub fn train_denoiser(
    corpus: &[ShapeImage],
    schedule: &NoiseSchedule,
    arch: DenoiserArch,
    config: &TrainConfig,
) -> Result<(Denoiser<f32>, Vec<f32>)> {
    let mut trainer = Trainer::new(arch, config.seed)?;
    trainer.run(corpus, schedule, config, None, |_, _| {})?;
    let mut denoiser = trainer.denoiser;
    denoiser.freeze();
    Ok((denoiser, trainer.losses))
}

/// Mean `|eps_hat - eps|^2` per pixel over `images`, one random `(t, eps)`
/// per image from `derive(seed, HELD_OUT, index)`. A fixed `t` overrides
/// the random draw.
pub fn heldout_mse(
    denoiser: &Denoiser<f32>,
    images: &[ShapeImage],
    schedule: &NoiseSchedule,
    seed: u64,
    fixed_t: Option<usize>,
) -> Result<f64> {
    validate_corpus(images, denoiser.side())?;
    let px = denoiser.side() * denoiser.side();
    let mut total = 0.0;
    for (i, img) in images.iter().enumerate() {
        let mut rng = rng::derive(seed, rng::stream::HELD_OUT, i as u64);
        let t = match fixed_t {
            Some(t) => t,
            None => rng.gen_range(1..=schedule.steps()),
        };
        let eps = standard_normals(&mut rng, px);
        let xt = noising(&img.data, t, &eps, schedule)?;
        let pred = denoiser.predict_noise(&xt, t)?;
        total += pred.iter().zip(&eps).map(|(&p, &e)| ((p - e) as f64).powi(2)).sum::<f64>() / px as f64;
    }
    Ok(total / images.len() as f64)
}
