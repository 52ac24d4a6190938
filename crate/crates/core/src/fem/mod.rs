//! Complete electrode model forward solver.
//!
//! Unknowns are the nodal potentials followed by the electrode potentials.
//! The zero-sum condition on electrode potentials is imposed by adding
//! `gamma * c c^T` (with `c` the electrode indicator) to the CEM matrix. For
//! zero-sum current vectors this yields exactly the Lagrange-constrained
//! solution while keeping the system symmetric positive definite.

mod forward;
mod frame;
mod noise;
pub mod skyline;

pub use forward::{assemble_and_solve, compute_jacobian, solve_forward, CemSolution, ForwardSolver, Jacobian};
pub use frame::{load_frame, parse_frame, save_frame, write_frame, MeasurementFrame};
pub use noise::{add_noise, rms};

use crate::error::{EitError, Result};
use crate::scalar::Real;

/// Uniform contact impedance used when none is given (Ohm cm^2).
pub const DEFAULT_CONTACT_IMPEDANCE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeConfig<T> {
    pub contact_impedances: Vec<T>,
    /// Injected current (mA).
    pub amplitude: T,
}

impl<T: Real> ElectrodeConfig<T> {
    pub fn uniform(electrode_count: usize, z: T, amplitude: T) -> Self {
        Self {
            contact_impedances: vec![z; electrode_count],
            amplitude,
        }
    }

    /// Default contact impedance and 1 mA drive.
    pub fn standard(electrode_count: usize) -> Self {
        Self::uniform(electrode_count, T::lit(DEFAULT_CONTACT_IMPEDANCE), T::one())
    }

    pub fn validate(&self, electrode_count: usize) -> Result<()> {
        if self.contact_impedances.len() != electrode_count {
            return Err(EitError::Shape(format!(
                "{} contact impedances for {electrode_count} electrodes",
                self.contact_impedances.len()
            )));
        }
        if let Some((q, z)) = self
            .contact_impedances
            .iter()
            .enumerate()
            .find(|(_, z)| !(**z > T::zero()))
        {
            return Err(EitError::Domain(format!("contact impedance {z} on electrode {q} is not positive")));
        }
        if !(self.amplitude > T::zero()) {
            return Err(EitError::Domain(format!("current amplitude {} is not positive", self.amplitude)));
        }
        Ok(())
    }
}

/// Identifier of the stimulation/measurement convention written in frame files.
pub const ADJACENT_CONVENTION: &str = "adjacent";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulationPattern {
    pub electrode_count: usize,
    /// `(source, sink)` per injection.
    pub injections: Vec<(usize, usize)>,
    /// `(positive, negative)` pairs read during each injection.
    pub measurements: Vec<Vec<(usize, usize)>>,
}

impl StimulationPattern {
    /// Adjacent drive, adjacent measurement, skipping every pair that
    /// touches a current-carrying electrode. For injection `(k, k+1)` the
    /// pairs are read starting at `(k+2, k+3)` and wrapping around, so a
    /// homogeneous rotationally symmetric body gives identical blocks.
    pub fn adjacent(electrode_count: usize) -> Self {
        let l = electrode_count;
        let injections: Vec<(usize, usize)> = (0..l).map(|k| (k, (k + 1) % l)).collect();
        let measurements = injections
            .iter()
            .map(|&(src, snk)| {
                (2..l)
                    .map(|d| ((src + d) % l, (src + d + 1) % l))
                    .filter(|&(p, n)| p != src && p != snk && n != src && n != snk)
                    .collect()
            })
            .collect();
        Self {
            electrode_count,
            injections,
            measurements,
        }
    }

    pub fn measurement_count(&self) -> usize {
        self.measurements.iter().map(Vec::len).sum()
    }

    /// Row index of `(injection, pair)` in the flattened frame.
    pub fn row_of(&self, injection: usize, pair: (usize, usize)) -> Option<usize> {
        let base: usize = self.measurements[..injection].iter().map(Vec::len).sum();
        self.measurements[injection]
            .iter()
            .position(|&p| p == pair)
            .map(|k| base + k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.injections.len() != self.measurements.len() {
            return Err(EitError::Shape("one measurement list per injection is required".into()));
        }
        for (i, &(src, snk)) in self.injections.iter().enumerate() {
            if src == snk || src >= self.electrode_count || snk >= self.electrode_count {
                return Err(EitError::Validation(format!("injection {i} ({src}, {snk}) is invalid")));
            }
            for &(p, n) in &self.measurements[i] {
                if p >= self.electrode_count || n >= self.electrode_count || p == n {
                    return Err(EitError::Validation(format!("measurement pair ({p}, {n}) is invalid")));
                }
                if [p, n].iter().any(|e| *e == src || *e == snk) {
                    return Err(EitError::Validation(format!(
                        "measurement pair ({p}, {n}) touches injecting electrodes ({src}, {snk})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_electrode_pattern_has_208_rows() {
        let p = StimulationPattern::adjacent(16);
        p.validate().unwrap();
        assert_eq!(p.measurement_count(), 16 * 13);
        assert_eq!(p.measurements[0][0], (2, 3));
        assert_eq!(p.measurements[0][12], (14, 15));
        assert_eq!(p.measurements[5][0], (7, 8));
    }

    #[test]
    fn config_validation() {
        assert!(ElectrodeConfig::<f64>::standard(16).validate(16).is_ok());
        assert!(ElectrodeConfig::<f64>::standard(16).validate(8).is_err());
        assert!(ElectrodeConfig::uniform(4, 0.0, 1.0).validate(4).is_err());
        assert!(ElectrodeConfig::uniform(4, 1.0, -1.0).validate(4).is_err());
    }
}
