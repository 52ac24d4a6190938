use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{EitError, Result};
use crate::rng;
use crate::scalar::Real;

/// Bandwidth that tracks mesh resolution: `b = k * sqrt(element_count)`,
/// i.e. inversely proportional to the mean edge length.
pub fn bandwidth_from_mesh<T: Real>(k: T, element_count: usize) -> Result<T> {
    if !(k > T::zero()) || !k.is_finite() {
        return Err(EitError::Domain(format!("bandwidth scale k must be positive, got {k}")));
    }
    if element_count == 0 {
        return Err(EitError::Domain("element count must be positive".into()));
    }
    Ok(k * T::lit(element_count as f64).sqrt())
}

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Features<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Stacks two feature blocks of equal width.
    pub fn concat(&self, other: &Features<T>) -> Result<Features<T>> {
        if self.cols != other.cols {
            return Err(EitError::Shape(format!("feature widths {} and {}", self.cols, other.cols)));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Features { rows: self.rows + other.rows, cols: self.cols, data })
    }
}

/// Random Fourier feature map `C -> [sin(2 pi C B), cos(2 pi C B)]` with a
/// frozen `2 x n` frequency matrix drawn from `N(0, b^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffEncoder<T> {
    /// Row-major `2 x n`.
    b_matrix: Vec<T>,
    bandwidth: T,
    samples: usize,
}

impl<T: Real> RffEncoder<T> {
    pub fn new(samples: usize, bandwidth: T, seed: u64) -> Self {
        let mut rng = rng::derive(seed, rng::stream::ENCODER, 0);
        let bw = bandwidth.to_f64_lossy();
        let b_matrix = (0..2 * samples)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z * bw)
            })
            .collect();
        Self { b_matrix, bandwidth, samples }
    }

    pub fn from_matrix(b_matrix: Vec<T>, bandwidth: T) -> Result<Self> {
        if b_matrix.len() % 2 != 0 || b_matrix.is_empty() {
            return Err(EitError::Shape(format!("frequency matrix with {} entries is not 2 x n", b_matrix.len())));
        }
        if b_matrix.iter().any(|v| !v.is_finite()) {
            return Err(EitError::Domain("frequency matrix has non-finite entries".into()));
        }
        let samples = b_matrix.len() / 2;
        Ok(Self { b_matrix, bandwidth, samples })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn matrix(&self) -> &[T] {
        &self.b_matrix
    }

    /// Output width, `2 n`.
    pub fn width(&self) -> usize {
        2 * self.samples
    }

    pub fn encode(&self, coords: &[[T; 2]]) -> Features<T> {
        let n = self.samples;
        let two_pi = T::lit(2.0 * PI);
        let mut data = vec![T::zero(); coords.len() * 2 * n];
        for (row, c) in data.chunks_exact_mut(2 * n).zip(coords) {
            let (sin, cos) = row.split_at_mut(n);
            for j in 0..n {
                let phase = two_pi * (c[0] * self.b_matrix[j] + c[1] * self.b_matrix[n + j]);
                let (s, co) = phase.sin_cos();
                sin[j] = s;
                cos[j] = co;
            }
        }
        Features { rows: coords.len(), cols: 2 * n, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_rule() {
        assert!((bandwidth_from_mesh(1.5e-2, 10_000).unwrap() - 1.5f64).abs() < 1e-15);
        let b: f64 = bandwidth_from_mesh(1.5e-2, 11_424).unwrap();
        // 0.015 * sqrt(11424) = 1.603247
        assert!((b - 1.6031).abs() < 5e-4, "{b}");
        assert!((b - 1.603_246_7).abs() < 1e-6, "{b}");
        assert!(bandwidth_from_mesh(0.0f64, 100).is_err());
        assert!(bandwidth_from_mesh(-1.0f64, 100).is_err());
    }

    #[test]
    fn origin_maps_to_zero_sines_unit_cosines() {
        let enc = RffEncoder::<f64>::new(16, 1.0, 3);
        let f = enc.encode(&[[0.0, 0.0]]);
        assert!(f.row(0)[..16].iter().all(|&v| v == 0.0));
        assert!(f.row(0)[16..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quarter_period_single_frequency() {
        let enc = RffEncoder::from_matrix(vec![1.0f64, 0.0], 1.0).unwrap();
        let f = enc.encode(&[[0.25, 0.0]]);
        assert!((f.row(0)[0] - 1.0).abs() < 1e-15);
        assert!(f.row(0)[1].abs() < 1e-15);
    }

    #[test]
    fn entries_bounded_and_reproducible() {
        let enc = RffEncoder::<f64>::new(64, 3.0, 9);
        assert_eq!(enc, RffEncoder::new(64, 3.0, 9));
        let coords: Vec<[f64; 2]> = (0..50).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let f = enc.encode(&coords);
        assert_eq!(f.cols, 128);
        assert!(f.data.iter().all(|v| v.abs() <= 1.0));
    }
}
