use rand_distr::{Distribution, StandardNormal};

use super::MeasurementFrame;
use crate::rng;
use crate::scalar::Real;

pub fn rms<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let ss: T = values.iter().map(|v| *v * *v).sum();
    (ss / T::lit(values.len() as f64)).sqrt()
}

/// Adds i.i.d. Gaussian noise with standard deviation
/// `rms(voltages) * 10^(-snr_db / 20)`. An infinite SNR returns the frame
/// unchanged.
pub fn add_noise<T: Real>(frame: &MeasurementFrame<T>, snr_db: f64, seed: u64) -> MeasurementFrame<T> {
    assert!(!snr_db.is_nan(), "SNR must not be NaN");
    if snr_db == f64::INFINITY {
        return frame.clone();
    }
    let sd = rms(&frame.voltages).to_f64_lossy() * 10f64.powf(-snr_db / 20.0);
    let mut rng = rng::derive(seed, rng::stream::NOISE, 0);
    let voltages = frame
        .voltages
        .iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + T::lit(sd * e)
        })
        .collect();
    MeasurementFrame {
        voltages,
        snr_db: Some(snr_db),
        ..frame.clone()
    }
}
