//! Denoising diffusion prior: schedule, noise-prediction network, training
//! and the stop-gradient residual used as a regularizer.

mod io;
pub mod nn;
mod schedule;
mod sds;
mod train;
mod unet;

pub use io::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use schedule::{noising, NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_STEPS};
pub use sds::{ancestral_sample, sds_from_prediction, sds_residual};
pub use train::{heldout_mse, train_denoiser, validate_corpus, TrainConfig, Trainer};
pub use unet::{time_embedding, Denoiser, DenoiserArch, DenoiserCache};
