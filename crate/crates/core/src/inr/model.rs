use rand::Rng as _;

use super::encoder::Features;
use crate::error::{EitError, Result};
use crate::optim::Adam;
use crate::rng;
use crate::scalar::Real;

pub const HIDDEN_WIDTH: usize = 128;
pub const HIDDEN_LAYERS: usize = 4;

/// Coordinate MLP mapping encoded points to conductivity in
/// `(sigma_min, sigma_max)`: SiLU hidden layers and a scaled-sigmoid head.
///
/// Parameters are one flat vector; layer `l` holds its `in x out` weight
/// matrix (row-major) followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct InrModel<T> {
    dims: Vec<usize>,
    params: Vec<T>,
    sigma_min: T,
    sigma_max: T,
    adam: Adam<T>,
}

/// Activations kept from a forward pass for the reverse pass.
pub struct ForwardCache<T> {
    batch: usize,
    /// Input to each layer (the features for layer 0).
    inputs: Vec<Vec<T>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<T>>,
    /// Sigmoid of the head output.
    squashed: Vec<T>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

impl<T: Real> InrModel<T> {
    /// The standard network: `input_width -> 4 x 128 -> 1`.
    pub fn new(input_width: usize, sigma_range: (T, T), seed: u64) -> Result<Self> {
        let mut dims = vec![input_width];
        dims.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
        dims.push(1);
        Self::with_dims(dims, sigma_range, seed)
    }

    /// Arbitrary layer widths; the last must be 1. Weights and biases are
    /// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn with_dims(dims: Vec<usize>, sigma_range: (T, T), seed: u64) -> Result<Self> {
        let mut rng = rng::derive(seed, rng::stream::INR_INIT, 0);
        let mut model = Self::zeros(dims, sigma_range)?;
        let mut offset = 0;
        for l in 0..model.dims.len() - 1 {
            let (fan_in, fan_out) = (model.dims[l], model.dims[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut model.params[offset..offset + (fan_in + 1) * fan_out] {
                *p = T::lit(rng.gen_range(-bound..bound));
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(model)
    }

    /// All parameters zero.
    pub fn zeros(dims: Vec<usize>, (sigma_min, sigma_max): (T, T)) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) || *dims.last().unwrap() != 1 {
            return Err(EitError::Shape(format!("invalid layer widths {dims:?}")));
        }
        if !(sigma_min < sigma_max) || !(sigma_min >= T::zero()) {
            return Err(EitError::Domain(format!("invalid conductivity range ({sigma_min}, {sigma_max})")));
        }
        let count: usize = dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        Ok(Self {
            dims,
            params: vec![T::zero(); count],
            sigma_min,
            sigma_max,
            adam: Adam::new(count),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn sigma_range(&self) -> (T, T) {
        (self.sigma_min, self.sigma_max)
    }

    pub fn adam(&self) -> &Adam<T> {
        &self.adam
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let offset: usize = self.dims[..=l].windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        (offset, self.dims[l], self.dims[l + 1])
    }

    fn check_features(&self, features: &Features<T>) -> Result<()> {
        if features.cols != self.dims[0] {
            return Err(EitError::Shape(format!(
                "feature width {} but network expects {}",
                features.cols, self.dims[0]
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, features: &Features<T>) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.check_features(features)?;
        let batch = features.rows;
        let layers = self.dims.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut current = features.data.clone();
        let mut head = Vec::new();
        for l in 0..layers {
            let (off, fan_in, fan_out) = self.layer(l);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            T::gemm(batch, fan_in, fan_out, T::one(), &current, fan_in, 1, w, fan_out, 1, T::one(), &mut z, fan_out, 1);
            if l + 1 < layers {
                let a: Vec<T> = z.iter().map(|&x| silu(x)).collect();
                inputs.push(std::mem::replace(&mut current, a));
                pre.push(z);
            } else {
                inputs.push(std::mem::take(&mut current));
                head = z;
            }
        }
        let squashed: Vec<T> = head.iter().map(|&x| sigmoid(x)).collect();
        let span = self.sigma_max - self.sigma_min;
        // Keep saturated outputs strictly inside the open range.
        let eps = T::epsilon();
        let lo = self.sigma_min + (self.sigma_min * eps).max(T::min_positive_value());
        let hi = self.sigma_max * (T::one() - eps);
        let out = squashed.iter().map(|&s| (self.sigma_min + span * s).max(lo).min(hi)).collect();
        Ok((out, ForwardCache { batch, inputs, pre, squashed }))
    }

    /// Gradient of `upstream . outputs` with respect to all parameters.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &[T]) -> Result<Vec<T>> {
        if upstream.len() != cache.batch {
            return Err(EitError::Shape(format!(
                "upstream length {} for {} outputs",
                upstream.len(),
                cache.batch
            )));
        }
        let batch = cache.batch;
        let layers = self.dims.len() - 1;
        let span = self.sigma_max - self.sigma_min;
        let mut grad = vec![T::zero(); self.params.len()];
        let mut delta: Vec<T> = upstream
            .iter()
            .zip(&cache.squashed)
            .map(|(&g, &s)| g * span * s * (T::one() - s))
            .collect();
        for l in (0..layers).rev() {
            let (off, fan_in, fan_out) = self.layer(l);
            let input = &cache.inputs[l];
            {
                let (gw, gb) = grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
                // dW = input^T delta
                T::gemm(fan_in, batch, fan_out, T::one(), input, 1, fan_in, &delta, fan_out, 1, T::zero(), gw, fan_out, 1);
                for row in delta.chunks_exact(fan_out) {
                    for (b, &d) in gb.iter_mut().zip(row) {
                        *b += d;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut upstream_act = vec![T::zero(); batch * fan_in];
            // d input = delta W^T
            T::gemm(batch, fan_out, fan_in, T::one(), &delta, fan_out, 1, w, 1, fan_out, T::zero(), &mut upstream_act, fan_in, 1);
            let z = &cache.pre[l - 1];
            for (d, &zz) in upstream_act.iter_mut().zip(z) {
                *d *= silu_grad(zz);
            }
            delta = upstream_act;
        }
        Ok(grad)
    }

    /// One Adam update with bias correction.
    pub fn adam_step(&mut self, gradient: &[T], learning_rate: T) -> Result<()> {
        self.adam.update(&mut self.params, gradient, learning_rate)
    }

    /// Replaces all parameters; Adam state is reset.
    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(EitError::Shape(format!("{} parameters for a {}-parameter network", params.len(), self.params.len())));
        }
        self.params = params;
        self.adam = Adam::new(self.params.len());
        Ok(())
    }
}

pub fn inr_forward<T: Real>(model: &InrModel<T>, features: &Features<T>) -> Result<Vec<T>> {
    Ok(model.forward_cached(features)?.0)
}

/// Exact reverse-mode gradient of `upstream . F(features)` in the parameters.
pub fn inr_vjp<T: Real>(model: &InrModel<T>, features: &Features<T>, upstream: &[T]) -> Result<Vec<T>> {
    let (_, cache) = model.forward_cached(features)?;
    model.backward(&cache, upstream)
}

pub fn adam_step<T: Real>(model: &mut InrModel<T>, gradient: &[T], learning_rate: T) -> Result<()> {
    model.adam_step(gradient, learning_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inr::RffEncoder;

    fn toy_features(rows: usize, cols: usize) -> Features<f64> {
        let data = (0..rows * cols).map(|i| ((i * 7 + 3) as f64 * 0.31).sin()).collect();
        Features { rows, cols, data }
    }

    #[test]
    fn zero_network_outputs_midpoint() {
        let model = InrModel::<f64>::zeros(vec![4, 8, 8, 1], (0.1, 4.0)).unwrap();
        let out = inr_forward(&model, &toy_features(5, 4)).unwrap();
        assert!(out.iter().all(|&o| o == 2.05));
    }

    #[test]
    fn outputs_stay_strictly_inside_range() {
        let mut model = InrModel::<f64>::with_dims(vec![4, 8, 1], (0.1, 4.0), 1).unwrap();
        for p in model.params_mut() {
            *p *= 10.0;
        }
        let out = inr_forward(&model, &toy_features(40, 4)).unwrap();
        assert!(out.iter().all(|&o| o > 0.1 && o < 4.0));
        assert_eq!(out, inr_forward(&model, &toy_features(40, 4)).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = InrModel::<f64>::with_dims(vec![4, 8, 1], (0.1, 4.0), 1).unwrap();
        assert!(inr_forward(&model, &toy_features(3, 5)).is_err());
        assert!(inr_vjp(&model, &toy_features(3, 4), &[1.0]).is_err());
    }

    #[test]
    fn vjp_zero_upstream_and_linearity() {
        let model = InrModel::<f64>::with_dims(vec![6, 5, 5, 1], (0.1, 4.0), 4).unwrap();
        let x = toy_features(7, 6);
        let zero = inr_vjp(&model, &x, &[0.0; 7]).unwrap();
        assert!(zero.iter().all(|&g| g == 0.0));
        let g1: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        let g2: Vec<f64> = (0..7).map(|i| 0.3 * i as f64 - 1.0).collect();
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let (a, b, c) = (inr_vjp(&model, &x, &g1).unwrap(), inr_vjp(&model, &x, &g2).unwrap(), inr_vjp(&model, &x, &sum).unwrap());
        for i in 0..a.len() {
            assert!((a[i] + b[i] - c[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn toy_vjp_matches_finite_differences() {
        let mut model = InrModel::<f64>::with_dims(vec![3, 1, 1, 1], (0.1, 4.0), 17).unwrap();
        assert_eq!(model.param_count(), 8);
        let x = toy_features(4, 3);
        let up = [0.7, -1.1, 0.4, 2.0];
        let grad = inr_vjp(&model, &x, &up).unwrap();
        let base = model.params().to_vec();
        for i in 0..base.len() {
            let h = 1e-5;
            let mut f = |delta: f64| {
                let mut p = base.clone();
                p[i] += delta;
                model.set_params(p).unwrap();
                let out = inr_forward(&model, &x).unwrap();
                out.iter().zip(&up).map(|(o, u)| o * u).sum::<f64>()
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1e-8), "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn standard_network_shape() {
        let enc = RffEncoder::<f64>::new(128, 1.0, 0);
        let model = InrModel::new(enc.width(), (0.1, 4.0), 0).unwrap();
        assert_eq!(model.dims(), &[256, 128, 128, 128, 128, 1]);
        assert_eq!(model.param_count(), 257 * 128 + 3 * 129 * 128 + 129);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut model = InrModel::<f64>::with_dims(vec![3, 4, 1], (0.1, 4.0), 2).unwrap();
        let before = model.params().to_vec();
        let zero = vec![0.0; model.param_count()];
        adam_step(&mut model, &zero, 0.01).unwrap();
        assert_eq!(model.params(), &before[..]);
        assert_eq!(model.adam().step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut model = InrModel::<f64>::with_dims(vec![3, 4, 1], (0.1, 4.0), 2).unwrap();
        let before = model.params().to_vec();
        let g: Vec<f64> = (0..model.param_count()).map(|i| if i % 2 == 0 { 0.3 } else { -2.0 }).collect();
        adam_step(&mut model, &g, 0.01).unwrap();
        for ((a, b), gi) in model.params().iter().zip(&before).zip(&g) {
            assert!(((a - b) + 0.01 * gi.signum()).abs() < 1e-8);
        }
        let mut twin = model.clone();
        adam_step(&mut model, &g, 0.01).unwrap();
        adam_step(&mut twin, &g, 0.01).unwrap();
        assert_eq!(model, twin);
    }
}
