//! Symmetric positive definite matrices in variable-band (envelope) storage.
//!
//! Row `i` stores columns `first[i]..=i`. Mesh node ordering ring by ring
//! keeps each envelope close to one ring's node count.

use crate::error::{EitError, Result};
use crate::scalar::{dot, Real};

#[derive(Debug, Clone)]
pub struct Profile {
    first: Vec<usize>,
    offset: Vec<usize>,
}

impl Profile {
    /// Builds the envelope from the lower-triangle entries `(i, j)`, `j <= i`.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j) in entries {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            first[r] = first[r].min(c);
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            offset.push(acc);
            acc += i - f + 1;
        }
        offset.push(acc);
        Self { first, offset }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored(&self) -> usize {
        *self.offset.last().unwrap_or(&0)
    }

    /// Storage index of `(i, j)`; either argument order.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(c >= self.first[r], "({r}, {c}) outside envelope");
        self.offset[r] + c - self.first[r]
    }

    #[inline]
    fn row<'a, T>(&self, values: &'a [T], i: usize) -> &'a [T] {
        &values[self.offset[i]..self.offset[i + 1]]
    }
}

/// Cholesky factor `L` of an envelope matrix, stored in the same profile.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    profile: Profile,
    values: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors in place; fails on the first non-positive pivot.
    pub fn factor(profile: Profile, mut values: Vec<T>) -> Result<Self> {
        assert_eq!(values.len(), profile.stored());
        let n = profile.dim();
        for i in 0..n {
            let fi = profile.first[i];
            let oi = profile.offset[i];
            for j in fi..i {
                let fj = profile.first[j];
                let k0 = fi.max(fj);
                let oj = profile.offset[j];
                let s = {
                    let li = &values[oi + (k0 - fi)..oi + (j - fi)];
                    let lj = &values[oj + (k0 - fj)..oj + (j - fj)];
                    dot(li, lj)
                };
                let diag = values[profile.offset[j + 1] - 1];
                let v = &mut values[oi + (j - fi)];
                *v = (*v - s) / diag;
            }
            let row = &values[oi..oi + (i - fi)];
            let d = values[oi + (i - fi)] - dot(row, row);
            if !(d > T::zero()) || !d.is_finite() {
                return Err(EitError::Numerical(format!(
                    "Cholesky pivot {d} at row {i} of {n}; system is singular or indefinite"
                )));
            }
            values[oi + (i - fi)] = d.sqrt();
        }
        Ok(Self { profile, values })
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let p = &self.profile;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = p.row(&self.values, i);
            let fi = p.first[i];
            let s = dot(&row[..i - fi], &x[fi..i]);
            x[i] = (x[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let row = p.row(&self.values, i);
            let fi = p.first[i];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (xk, &l) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *xk -= l * xi;
            }
        }
        x
    }
}

/// `y = A x` for a symmetric envelope matrix given by its lower part.
pub fn sym_matvec<T: Real>(profile: &Profile, values: &[T], x: &[T]) -> Vec<T> {
    let n = profile.dim();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let row = profile.row(values, i);
        let fi = profile.first[i];
        for (k, &a) in row.iter().enumerate() {
            let j = fi + k;
            y[i] += a * x[j];
            if j != i {
                y[j] += a * x[i];
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n: usize = 6;
        let entries = (0..n).flat_map(|i| [(i, i), (i, i.saturating_sub(1))]);
        let profile = Profile::from_entries(n, entries);
        let mut values = vec![0.0; profile.stored()];
        for i in 0..n {
            values[profile.index(i, i)] = 4.0;
            if i > 0 {
                values[profile.index(i, i - 1)] = -1.0;
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let b = sym_matvec(&profile, &values, &x_true);
        let chol = Cholesky::factor(profile, values).unwrap();
        let x = chol.solve(&b);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_matrix_fails_with_row() {
        let profile = Profile::from_entries(2, [(0, 0), (1, 0), (1, 1)]);
        let mut v = vec![0.0; profile.stored()];
        v[profile.index(0, 0)] = 1.0;
        v[profile.index(1, 0)] = 2.0;
        v[profile.index(1, 1)] = 1.0;
        let err = Cholesky::factor(profile, v).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }
}
