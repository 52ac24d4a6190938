use std::fmt::Write as _;

use crate::error::{EitError, Result};
use crate::fem::{ElectrodeConfig, DEFAULT_CONTACT_IMPEDANCE};

pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const DEFAULT_MAX_ITERS: usize = 1500;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    /// Weight of the diffusion prior term.
    pub alpha: f64,
    pub t_min: usize,
    pub t_max: usize,
    /// Use this step every iteration instead of sampling one.
    pub fixed_t: Option<usize>,
    pub max_iters: usize,
    pub learning_rate: f64,
    /// Bandwidth scale: `b = k sqrt(element_count)`.
    pub k: f64,
    pub fourier_samples: usize,
    pub grid_side: usize,
    pub sigma_range: (f64, f64),
    pub seed: u64,
    pub lambda_t: f64,
    /// Weight of the pixel-grid total variation in the INR+TV loop.
    pub tv_weight: f64,
    pub contact_impedance: f64,
    /// Injected current (mA).
    pub amplitude: f64,
    pub gn_iters: usize,
    /// Weight of the mesh total variation in the Gauss-Newton baseline.
    pub gn_tv_weight: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            t_min: 100,
            t_max: 400,
            fixed_t: None,
            max_iters: DEFAULT_MAX_ITERS,
            learning_rate: 1e-2,
            k: 1.5e-2,
            fourier_samples: crate::inr::DEFAULT_FOURIER_SAMPLES,
            grid_side: 64,
            sigma_range: (0.1, 4.0),
            seed: 0,
            lambda_t: 1.0,
            tv_weight: 1e-6,
            contact_impedance: DEFAULT_CONTACT_IMPEDANCE,
            amplitude: 1.0,
            gn_iters: 20,
            gn_tv_weight: 1e-5,
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| EitError::Domain(format!("invalid value {value:?} for {key}")))
}

impl ReconstructionConfig {
    pub const KEYS: [&'static str; 18] = [
        "alpha",
        "t_min",
        "t_max",
        "fixed_t",
        "max_iters",
        "learning_rate",
        "k",
        "fourier_samples",
        "grid_side",
        "sigma_min",
        "sigma_max",
        "seed",
        "lambda_t",
        "tv_weight",
        "contact_impedance",
        "amplitude",
        "gn_iters",
        "gn_tv_weight",
    ];

    /// Validates against a diffusion schedule of `steps` steps.
    pub fn validate(&self, steps: usize) -> Result<()> {
        let bad = |msg: String| Err(EitError::Domain(msg));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.t_min > self.t_max || self.t_max > steps {
            return bad(format!(
                "need 0 <= t_min <= t_max <= {steps}, got t_min {} t_max {}",
                self.t_min, self.t_max
            ));
        }
        if let Some(t) = self.fixed_t {
            if t > steps {
                return bad(format!("fixed_t {t} exceeds the {steps} schedule steps"));
            }
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return bad(format!("bandwidth scale k must be positive, got {}", self.k));
        }
        if self.fourier_samples == 0 || self.grid_side == 0 {
            return bad("fourier_samples and grid_side must be positive".into());
        }
        let (lo, hi) = self.sigma_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("sigma range must satisfy 0 < min < max, got [{lo}, {hi}]"));
        }
        for (name, v) in [
            ("lambda_t", self.lambda_t),
            ("tv_weight", self.tv_weight),
            ("gn_tv_weight", self.gn_tv_weight),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.contact_impedance > 0.0) || !(self.amplitude > 0.0) {
            return bad("contact impedance and amplitude must be positive".into());
        }
        if self.gn_iters == 0 {
            return bad("gn_iters must be positive".into());
        }
        Ok(())
    }

    pub fn electrode_config(&self, electrode_count: usize) -> ElectrodeConfig<f64> {
        ElectrodeConfig::uniform(electrode_count, self.contact_impedance, self.amplitude)
    }

    /// Smoothing floor of the total-variation terms.
    pub fn tv_delta(&self) -> f64 {
        1e-4 * (self.sigma_range.1 - self.sigma_range.0)
    }

    /// Sets one field from its `key = value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = parse(key, value)?,
            "t_min" => self.t_min = parse(key, value)?,
            "t_max" => self.t_max = parse(key, value)?,
            "fixed_t" => {
                self.fixed_t = match value.trim() {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "max_iters" => self.max_iters = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "fourier_samples" => self.fourier_samples = parse(key, value)?,
            "grid_side" => self.grid_side = parse(key, value)?,
            "sigma_min" => self.sigma_range.0 = parse(key, value)?,
            "sigma_max" => self.sigma_range.1 = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lambda_t" => self.lambda_t = parse(key, value)?,
            "tv_weight" => self.tv_weight = parse(key, value)?,
            "contact_impedance" => self.contact_impedance = parse(key, value)?,
            "amplitude" => self.amplitude = parse(key, value)?,
            "gn_iters" => self.gn_iters = parse(key, value)?,
            "gn_tv_weight" => self.gn_tv_weight = parse(key, value)?,
            _ => return Err(EitError::Domain(format!("unknown reconstruction key {key:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines that [`set`](Self::set) reads back.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let fixed = self.fixed_t.map_or("none".to_string(), |t| t.to_string());
        let (lo, hi) = self.sigma_range;
        let pairs: [(&str, String); 18] = [
            ("alpha", format!("{:e}", self.alpha)),
            ("t_min", self.t_min.to_string()),
            ("t_max", self.t_max.to_string()),
            ("fixed_t", fixed),
            ("max_iters", self.max_iters.to_string()),
            ("learning_rate", format!("{:e}", self.learning_rate)),
            ("k", format!("{:e}", self.k)),
            ("fourier_samples", self.fourier_samples.to_string()),
            ("grid_side", self.grid_side.to_string()),
            ("sigma_min", format!("{lo:e}")),
            ("sigma_max", format!("{hi:e}")),
            ("seed", self.seed.to_string()),
            ("lambda_t", format!("{:e}", self.lambda_t)),
            ("tv_weight", format!("{:e}", self.tv_weight)),
            ("contact_impedance", format!("{:e}", self.contact_impedance)),
            ("amplitude", format!("{:e}", self.amplitude)),
            ("gn_iters", self.gn_iters.to_string()),
            ("gn_tv_weight", format!("{:e}", self.gn_tv_weight)),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
