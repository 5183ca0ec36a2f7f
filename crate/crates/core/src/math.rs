//! Vector arithmetic, seeded randomness and a central-difference gradient
//! checker shared by every model and test.
//!
//! All randomness goes through [`SeededRng`], which wraps the ChaCha8 stream
//! cipher generator (`rand_chacha`). ChaCha8 output is specified independently
//! of platform and word size, so a seed reproduces the same stream everywhere.
//! Gaussian draws use `rand_distr::StandardNormal` on top of that stream.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A vector of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealVec(Vec<f64>);

impl RealVec {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("vector entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Applies `f` to the raw storage and re-validates finiteness afterwards.
    pub fn update<F: FnOnce(&mut [f64])>(&mut self, f: F) -> Result<()> {
        f(&mut self.0);
        if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("vector entry {i} after update")));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl Deref for RealVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for RealVec {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Returns `a * x + y`.
pub fn axpy(a: f64, x: &[f64], y: &[f64]) -> Result<RealVec> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    RealVec::new(x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect())
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<RealVec>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", format!("step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::non_finite(format!(
                "function evaluation near component {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    RealVec::new(grad)
}

/// Relative error between two gradient vectors, measured in the max norm:
/// `|a - b|_inf / max(|a|_inf, |b|_inf, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.abs())
        .fold(floor, f64::max);
    diff / scale
}

/// Deterministic random source with a draw counter.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    draws: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of values drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.draws += 1;
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.draws += 1;
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

/// `n` i.i.d. draws from `N(mean, std^2)`.
pub fn draw_gaussian(rng: &mut SeededRng, n: usize, mean: f64, std: f64) -> Result<RealVec> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::invalid("std", format!("must be >= 0, got {std}")));
    }
    RealVec::new((0..n).map(|_| mean + std * rng.standard_normal()).collect())
}

/// splitmix64 finalizer; used to derive independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dense row-major matrix of samples (one sample per row).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// Collects the listed rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(0.0, &[1.0, 2.0], &[3.0, 4.0]).unwrap().as_slice(), &[3.0, 4.0]);
        assert_eq!(axpy(1.0, &[1.0, 2.0], &[0.0, 0.0]).unwrap().as_slice(), &[1.0, 2.0]);
        assert_eq!(axpy(2.0, &[1.0, -1.0], &[1.0, 1.0]).unwrap().as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn axpy_length_mismatch() {
        assert!(matches!(
            axpy(1.0, &[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn axpy_rejects_overflow() {
        assert!(axpy(f64::MAX, &[f64::MAX], &[0.0]).is_err());
    }

    #[test]
    fn real_vec_rejects_nan() {
        assert!(RealVec::new(vec![1.0, f64::NAN]).is_err());
        let mut v = RealVec::zeros(2);
        assert!(v.update(|s| s[1] = f64::INFINITY).is_err());
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);

        let g = finite_diff_grad(|_| 4.2, &[1.0, 2.0], 1e-5).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);

        let g = finite_diff_grad(|x| x[0] * x[1], &[2.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_errors() {
        assert!(finite_diff_grad(|x| x[0], &[1.0], 0.0).is_err());
        assert!(finite_diff_grad(|x| if x[0] > 1.0 { f64::NAN } else { x[0] }, &[1.0], 1e-5).is_err());
        assert!(finite_diff_grad(|x| x[0].ln(), &[0.0], 1e-5).is_err());
    }

    #[test]
    fn gaussian_degenerate_and_deterministic() {
        let mut rng = SeededRng::new(1);
        assert_eq!(draw_gaussian(&mut rng, 3, 7.0, 0.0).unwrap().as_slice(), &[7.0; 3]);

        let a = draw_gaussian(&mut SeededRng::new(42), 64, 0.0, 1.0).unwrap();
        let b = draw_gaussian(&mut SeededRng::new(42), 64, 0.0, 1.0).unwrap();
        assert_eq!(a, b);

        assert!(draw_gaussian(&mut rng, 3, 0.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let v = draw_gaussian(&mut SeededRng::new(7), n, 0.0, 1.0).unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn draw_counter_tracks_usage() {
        let mut rng = SeededRng::new(3);
        draw_gaussian(&mut rng, 5, 0.0, 1.0).unwrap();
        rng.uniform();
        assert_eq!(rng.draws(), 6);
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(5, 1), mix_seed(5, 2));
        assert_eq!(mix_seed(5, 1), mix_seed(5, 1));
    }

    #[test]
    fn relative_error_scale() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0], 1e-12), 0.0);
        assert!((relative_error(&[2.0], &[1.0], 1e-12) - 0.5).abs() < 1e-15);
    }
}
