use crate::error::{EitError, Result};
use crate::scalar::Real;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 2e-2;

/// Discrete DDPM schedule with linear betas. Index 0 is the clean image
/// (`alpha_bar[0] = 1`); steps `1..=T` carry `beta_t` from `beta_min` to
/// `beta_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    beta_min: f64,
    beta_max: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_MIN, DEFAULT_BETA_MAX).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(EitError::Domain(format!("schedule needs at least 2 steps, got {steps}")));
        }
        if !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
            return Err(EitError::Domain(format!("invalid beta range ({beta_min}, {beta_max})")));
        }
        let mut betas = vec![0.0];
        let mut alpha_bars = vec![1.0];
        for t in 1..=steps {
            let beta = beta_min + (beta_max - beta_min) * (t - 1) as f64 / (steps - 1) as f64;
            betas.push(beta);
            alpha_bars.push(alpha_bars[t - 1] * (1.0 - beta));
        }
        Ok(Self { steps, beta_min, beta_max, betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_min, self.beta_max)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(EitError::Domain(format!("time step {t} outside 0..={}", self.steps)));
        }
        Ok(())
    }
}

/// `x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
pub fn noising<T: Real>(x0: &[T], t: usize, eps: &[T], schedule: &NoiseSchedule) -> Result<Vec<T>> {
    schedule.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(EitError::Shape(format!("image has {} values, noise {}", x0.len(), eps.len())));
    }
    if t == 0 {
        return Ok(x0.to_vec());
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (T::lit(ab.sqrt()), T::lit((1.0 - ab).sqrt()));
    Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bar_is_running_product() {
        let s = NoiseSchedule::default();
        let mut prod = 1.0;
        for t in 1..=s.steps() {
            prod *= 1.0 - s.beta(t);
            assert!((s.alpha_bar(t) - prod).abs() < 1e-12);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(1000) > 0.0 && s.alpha_bar(1000) < 1e-3);
        assert_eq!(s.beta(1), 1e-4);
        assert!((s.beta(1000) - 2e-2).abs() < 1e-15);
    }

    #[test]
    fn t_zero_is_identity_and_range_checked() {
        let s = NoiseSchedule::default();
        let x = vec![0.3f32, -0.7, 1.0];
        let e = vec![1.5f32, 0.2, -2.0];
        assert_eq!(noising(&x, 0, &e, &s).unwrap(), x);
        assert!(noising(&x, 1001, &e, &s).is_err());
        assert!(noising(&x, 5, &e[..2], &s).is_err());
    }

    #[test]
    fn final_step_is_nearly_pure_noise() {
        let s = NoiseSchedule::default();
        let x: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.1).sin()).collect();
        let e: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.37).cos() * 1.3).collect();
        let xt = noising(&x, 1000, &e, &s).unwrap();
        let rms = (xt.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 400.0).sqrt();
        assert!(rms < 0.04, "{rms}");
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(NoiseSchedule::linear(1, 1e-4, 2e-2).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 2e-2).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 0.01).is_err());
    }
}
