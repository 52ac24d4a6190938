//! Random-Fourier-feature coordinate network for conductivity fields.

mod encoder;
mod io;
mod model;

pub use encoder::{bandwidth_from_mesh, Features, RffEncoder};
pub use io::{load_inr, parse_inr, save_inr, write_inr};
pub use model::{
    adam_step, inr_forward, inr_vjp, ForwardCache, InrModel, HIDDEN_LAYERS, HIDDEN_WIDTH,
};

/// Default number of Fourier samples `n`; features are `2 n` wide.
pub const DEFAULT_FOURIER_SAMPLES: usize = 128;
