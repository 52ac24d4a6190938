//! Conductivity reconstruction from one measurement frame.
//!
//! Three reconstructors share [`ReconstructionConfig`]: the coordinate
//! network fitted with the diffusion prior ([`reconstruct_diff_inr`]), the
//! same network with a total-variation penalty ([`reconstruct_inr_tv`]) or
//! none ([`reconstruct_inr`]), and a Gauss-Newton solver on nodal
//! conductivities ([`reconstruct_tv_gn`]).

mod bundle;
mod config;
mod inr_loop;
mod losses;
mod tvgn;

use std::time::Duration;

pub use bundle::{write_bundle, write_trace};
pub use config::{ReconstructionConfig, DEFAULT_ALPHA, DEFAULT_MAX_ITERS};
pub use inr_loop::{reconstruct_diff_inr, reconstruct_inr, reconstruct_inr_tv};
pub use losses::{data_loss, reg_loss, total_variation, DataTerm, NoisePredictor};
pub use tvgn::{homogeneous_fit, reconstruct_tv_gn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DiffInr,
    Inr,
    InrTv,
    TvGn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DiffInr => "diff-inr",
            Method::Inr => "inr",
            Method::InrTv => "inr-tv",
            Method::TvGn => "tv-gn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = crate::EitError;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "diff-inr" => Ok(Method::DiffInr),
            "inr" => Ok(Method::Inr),
            "inr-tv" => Ok(Method::InrTv),
            "tv-gn" | "tv" => Ok(Method::TvGn),
            other => Err(crate::EitError::Domain(format!(
                "unknown method {other:?}; expected diff-inr, inr, inr-tv or tv-gn"
            ))),
        }
    }
}

/// One row of the loss trace. `t` is the sampled diffusion step, 0 when no
/// prior term was evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub l_data: f64,
    pub l_reg: f64,
    pub l_rec: f64,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    /// Gauss-Newton line search could not decrease the objective.
    EarlyStop,
    /// A solver failure ended the run; the state is the last good iterate.
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub method: Method,
    pub sigma_mesh: Vec<f64>,
    /// Row-major `grid_side x grid_side` image over `[-1, 1]^2`.
    pub sigma_grid: Vec<f64>,
    pub grid_side: usize,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub wall_time: Duration,
    pub status: Status,
    /// Final network and its encoder; `None` for the Gauss-Newton baseline.
    pub network: Option<(crate::inr::InrModel<f64>, crate::inr::RffEncoder<f64>)>,
}
