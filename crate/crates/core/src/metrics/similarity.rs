use std::fmt;

use super::square_side;
use crate::error::{EitError, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// PSNR in decibels, or `Identical` when the images agree exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Identical,
    Db(f64),
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Identical => None,
            Psnr::Db(v) => Some(v),
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Identical => f.write_str("identical"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

fn check_pair(a: &[f64], b: &[f64], data_range: f64) -> Result<()> {
    if a.len() != b.len() {
        return Err(EitError::Shape(format!("images have {} and {} pixels", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(EitError::Shape("empty images".into()));
    }
    if !(data_range > 0.0) {
        return Err(EitError::Domain(format!("data range must be positive, got {data_range}")));
    }
    Ok(())
}

pub fn psnr(a: &[f64], b: &[f64], data_range: f64) -> Result<Psnr> {
    check_pair(a, b, data_range)?;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Db(10.0 * (data_range * data_range / mse).log10()))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-region separable filtering of a square image.
fn filter(img: &[f64], side: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out = side - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; side * out];
    for r in 0..side {
        for c in 0..out {
            rows[r * out + c] = (0..SSIM_WINDOW).map(|k| w[k] * img[r * side + c + k]).sum();
        }
    }
    let mut res = vec![0.0; out * out];
    for r in 0..out {
        for c in 0..out {
            res[r * out + c] = (0..SSIM_WINDOW).map(|k| w[k] * rows[(r + k) * out + c]).sum();
        }
    }
    res
}

/// Mean structural similarity over all fully contained 11x11 Gaussian windows.
pub fn ssim(a: &[f64], b: &[f64], data_range: f64) -> Result<f64> {
    check_pair(a, b, data_range)?;
    let side = square_side(a.len())?;
    if side < SSIM_WINDOW {
        return Err(EitError::Shape(format!("image side {side} is smaller than the {SSIM_WINDOW}-pixel window")));
    }
    let w = gaussian_window();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, mu_b) = (filter(a, side, &w), filter(b, side, &w));
    let (e_aa, e_bb, e_ab) = (filter(&aa, side, &w), filter(&bb, side, &w), filter(&ab, side, &w));
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_image(seed: u64, side: usize) -> Vec<f64> {
        let mut rng = crate::rng::derive(seed, 0, 0);
        (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Direct 2D window sums, no separability.
    fn ssim_direct(a: &[f64], b: &[f64], side: usize, range: f64) -> f64 {
        let c = 5.0;
        let mut w2 = vec![0.0; 121];
        for i in 0..11 {
            for j in 0..11 {
                let (di, dj) = (i as f64 - c, j as f64 - c);
                w2[i * 11 + j] = (-(di * di + dj * dj) / 4.5).exp();
            }
        }
        let s: f64 = w2.iter().sum();
        w2.iter_mut().for_each(|v| *v /= s);
        let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
        let out = side - 10;
        let mut total = 0.0;
        for r in 0..out {
            for col in 0..out {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = (r + i) * side + col + j;
                        ma += w2[i * 11 + j] * a[k];
                        mb += w2[i * 11 + j] * b[k];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = (r + i) * side + col + j;
                        let w = w2[i * 11 + j];
                        va += w * (a[k] - ma).powi(2);
                        vb += w * (b[k] - mb).powi(2);
                        cov += w * (a[k] - ma) * (b[k] - mb);
                    }
                }
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        total / (out * out) as f64
    }

    #[test]
    fn psnr_examples() {
        let a = vec![0.3; 16];
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), Psnr::Identical);
        let z = vec![0.0; 16];
        let h = vec![0.5; 16];
        let v = psnr(&z, &h, 1.0).unwrap().db().unwrap();
        assert!((v - 6.0206).abs() < 1e-4);
        assert_eq!(psnr(&h, &z, 1.0).unwrap(), psnr(&z, &h, 1.0).unwrap());
        let zs: Vec<f64> = z.iter().map(|v| v * 7.0).collect();
        let hs: Vec<f64> = h.iter().map(|v| v * 7.0).collect();
        let vs = psnr(&zs, &hs, 7.0).unwrap().db().unwrap();
        assert!((vs - v).abs() < 1e-12);
        assert!(psnr(&z, &h[..4], 1.0).is_err());
        assert!(psnr(&z, &h, 0.0).is_err());
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = random_image(1, 16);
        assert_eq!(ssim(&a, &a, 2.0).unwrap(), 1.0);
        // every window of a checkerboard has (nearly) zero mean
        let board: Vec<f64> = (0..256).map(|k| if (k / 16 + k % 16) % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let neg: Vec<f64> = board.iter().map(|v| -v).collect();
        assert!(ssim(&board, &neg, 2.0).unwrap() < -0.9);
    }

    #[test]
    fn ssim_matches_direct_windows() {
        let a = random_image(2, 16);
        let b = random_image(3, 16);
        let fast = ssim(&a, &b, 2.0).unwrap();
        let slow = ssim_direct(&a, &b, 16, 2.0);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        assert_eq!(ssim(&a, &b, 2.0).unwrap(), ssim(&b, &a, 2.0).unwrap());
    }

    #[test]
    fn ssim_rejects_small_or_mismatched() {
        assert!(ssim(&[0.0; 100], &[0.0; 100], 1.0).is_err());
        assert!(ssim(&[0.0; 144], &[0.0; 121], 1.0).is_err());
        assert!(ssim(&[0.0; 150], &[0.0; 150], 1.0).is_err());
    }
}
