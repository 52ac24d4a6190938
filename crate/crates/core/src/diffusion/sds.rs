use rand_distr::{Distribution, StandardNormal};

use super::schedule::{noising, NoiseSchedule};
use super::unet::Denoiser;
use crate::error::{EitError, Result};
use crate::rng;

/// `lambda_t (eps_hat - eps)` from already computed predictions. It is the
/// gradient of `lambda_t <sg[eps_hat - eps], x0>` with respect to `x0`.
pub fn sds_from_prediction(eps_hat: &[f32], eps: &[f32], lambda_t: f32) -> Result<Vec<f32>> {
    if eps_hat.len() != eps.len() {
        return Err(EitError::Shape(format!("prediction has {} values, noise {}", eps_hat.len(), eps.len())));
    }
    Ok(eps_hat.iter().zip(eps).map(|(&p, &e)| lambda_t * (p - e)).collect())
}

/// Noises `x0` to step `t` with `eps`, queries the frozen denoiser and
/// returns the stop-gradient residual `lambda_t (eps_hat - eps)`.
pub fn sds_residual(
    denoiser: &Denoiser<f32>,
    x0: &[f32],
    t: usize,
    eps: &[f32],
    schedule: &NoiseSchedule,
    lambda_t: f32,
) -> Result<Vec<f32>> {
    let xt = noising(x0, t, eps, schedule)?;
    let eps_hat = denoiser.predict_noise(&xt, t)?;
    sds_from_prediction(&eps_hat, eps, lambda_t)
}

/// DDPM ancestral sampling from pure noise at `T` down to step 0, using the
/// posterior variance `beta_tilde_t`. The result is clamped to `[-1, 1]`.
pub fn ancestral_sample(denoiser: &Denoiser<f32>, schedule: &NoiseSchedule, seed: u64) -> Result<Vec<f32>> {
    let px = denoiser.side() * denoiser.side();
    let mut rng = rng::derive(seed, rng::stream::SAMPLER, 0);
    let mut x: Vec<f32> = (0..px).map(|_| StandardNormal.sample(&mut rng)).collect();
    for t in (1..=schedule.steps()).rev() {
        let eps_hat = denoiser.predict_noise(&x, t)?;
        let (alpha, ab, ab_prev) = (schedule.alpha(t), schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
        let coef = (schedule.beta(t) / (1.0 - ab).sqrt()) as f32;
        let inv = (1.0 / alpha.sqrt()) as f32;
        let sd = ((1.0 - ab_prev) / (1.0 - ab) * schedule.beta(t)).sqrt() as f32;
        for (v, &e) in x.iter_mut().zip(&eps_hat) {
            *v = inv * (*v - coef * e);
            if t > 1 {
                let z: f32 = StandardNormal.sample(&mut rng);
                *v += sd * z;
            }
        }
    }
    x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DenoiserArch;

    #[test]
    fn residual_vanishes_for_exact_prediction_or_zero_weight() {
        let e = vec![0.3f32, -1.2, 0.8];
        assert!(sds_from_prediction(&e, &e, 1.0).unwrap().iter().all(|&v| v == 0.0));
        let p = vec![1.0f32, 2.0, 3.0];
        assert!(sds_from_prediction(&p, &e, 0.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_linear_in_weight_and_antisymmetric() {
        let a = vec![0.5f32, -0.25, 2.0];
        let b = vec![1.5f32, 0.75, -1.0];
        let r1 = sds_from_prediction(&a, &b, 1.0).unwrap();
        let r3 = sds_from_prediction(&a, &b, 3.0).unwrap();
        let swapped = sds_from_prediction(&b, &a, 1.0).unwrap();
        for i in 0..3 {
            assert_eq!(r3[i], 3.0 * r1[i]);
            assert_eq!(swapped[i], -r1[i]);
        }
        assert!(sds_from_prediction(&a, &b[..2], 1.0).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_bounded() {
        let arch = DenoiserArch { side: 8, patch: 2, channels: (4, 8), groups: 2, time_dim: 8, embed_dim: 8 };
        let d = Denoiser::<f32>::new(arch, 0).unwrap();
        let s = NoiseSchedule::linear(50, 1e-3, 0.2).unwrap();
        let a = ancestral_sample(&d, &s, 4).unwrap();
        assert_eq!(a, ancestral_sample(&d, &s, 4).unwrap());
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
