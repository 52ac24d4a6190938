//! Adam with bias correction.

use crate::error::{EitError, Result};
use crate::scalar::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }

    pub fn update(&mut self, params: &mut [T], gradient: &[T], learning_rate: T) -> Result<()> {
        if gradient.len() != params.len() || params.len() != self.m.len() {
            return Err(EitError::Shape(format!(
                "gradient length {} for {} parameters",
                gradient.len(),
                params.len()
            )));
        }
        let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));
        self.step += 1;
        let t = self.step.min(i32::MAX as u64) as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(gradient).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}
