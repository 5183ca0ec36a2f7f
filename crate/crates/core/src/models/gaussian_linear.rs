//! Linear gain/noise channel on an i.i.d. Gaussian source.
//!
//! Per dimension the encoder scales the source by `g`, unit-variance noise is
//! added, and the decoder scales by `w`. Distortion is the expectation over the
//! channel noise of the squared error on the batch samples,
//! `mean_b [x^2 (1 - w g)^2] + w^2`, and the rate is the capacity of the
//! channel, `0.5 log2(1 + g^2 σ^2)`. Both are averaged over dimensions.

use std::f64::consts::LN_2;

use super::{BatchLosses, ObjectiveModel, ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::math::{Matrix, RealVec, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearSpec {
    pub dim: usize,
    /// Source variance σ².
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct GaussianLinear {
    spec: GaussianLinearSpec,
    layout: ParamLayout,
}

impl GaussianLinear {
    pub fn new(spec: GaussianLinearSpec) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        if !(spec.variance > 0.0 && spec.variance.is_finite()) {
            return Err(Error::invalid("variance", "must be > 0"));
        }
        let layout = ParamLayout::new([("encoder", spec.dim), ("decoder", spec.dim)])?;
        Ok(Self { spec, layout })
    }

    pub fn spec(&self) -> &GaussianLinearSpec {
        &self.spec
    }
}

/// Losses for gains `g` (encoder) and `w` (decoder).
pub fn gaussian_linear_eval(
    spec: &GaussianLinearSpec,
    params: &[f64],
    batch: &Matrix,
) -> Result<BatchLosses> {
    let n = spec.dim;
    if params.len() != 2 * n {
        return Err(Error::LengthMismatch {
            expected: 2 * n,
            got: params.len(),
        });
    }
    if batch.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if batch.cols() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: batch.cols(),
        });
    }
    let (g, w) = params.split_at(n);
    let mut second_moment = vec![0.0; n];
    for row in batch.iter_rows() {
        for (s, x) in second_moment.iter_mut().zip(row) {
            *s += x * x;
        }
    }
    let rows = batch.rows() as f64;
    second_moment.iter_mut().for_each(|s| *s /= rows);

    let var = spec.variance;
    let scale = 1.0 / n as f64;
    let mut rate = 0.0;
    let mut dist = 0.0;
    let mut grad_rate = vec![0.0; 2 * n];
    let mut grad_dist = vec![0.0; 2 * n];
    for i in 0..n {
        let (gi, wi, si) = (g[i], w[i], second_moment[i]);
        let snr = 1.0 + gi * gi * var;
        rate += scale * 0.5 * snr.log2();
        grad_rate[i] = scale * gi * var / (snr * LN_2);

        let residual = 1.0 - wi * gi;
        dist += scale * (si * residual * residual + wi * wi);
        grad_dist[i] = scale * (-2.0 * si * residual * wi);
        grad_dist[n + i] = scale * (-2.0 * si * residual * gi + 2.0 * wi);
    }
    BatchLosses::checked(rate, dist, grad_rate, grad_dist)
}

impl ObjectiveModel for GaussianLinear {
    fn name(&self) -> &str {
        "gaussian_linear"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.spec.dim)
    }

    fn init_params(&self, rng: &mut SeededRng, _calibration: &Matrix) -> Result<ParamVector> {
        let n = self.spec.dim;
        let mut v = Vec::with_capacity(2 * n);
        v.extend((0..n).map(|_| rng.uniform_range(0.5, 1.5)));
        v.extend((0..n).map(|_| rng.uniform_range(0.0, 0.5)));
        ParamVector::new(RealVec::new(v)?, self.layout.clone())
    }

    fn evaluate(&self, params: &ParamVector, batch: &Matrix) -> Result<BatchLosses> {
        gaussian_linear_eval(&self.spec, params.as_slice(), batch)
    }

    fn sample_check_point(&self, rng: &mut SeededRng) -> Result<(ParamVector, Matrix)> {
        let n = self.spec.dim;
        let v = (0..2 * n).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let std = self.spec.variance.sqrt();
        let data = (0..16 * n).map(|_| std * rng.standard_normal()).collect();
        Ok((
            ParamVector::new(RealVec::new(v)?, self.layout.clone())?,
            Matrix::new(16, n, data)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_batch() -> Matrix {
        // Second moment exactly 1 in the single column.
        Matrix::new(4, 1, vec![1.0, -1.0, 1.0, -1.0]).unwrap()
    }

    fn spec() -> GaussianLinearSpec {
        GaussianLinearSpec {
            dim: 1,
            variance: 1.0,
        }
    }

    #[test]
    fn zero_gain_passes_source_variance() {
        let l = gaussian_linear_eval(&spec(), &[0.0, 0.0], &unit_batch()).unwrap();
        assert_eq!(l.rate, 0.0);
        assert_eq!(l.distortion, 1.0);
    }

    #[test]
    fn wiener_gain_distortion() {
        // g = 1, σ² = 1: Wiener decoder gain g σ² / (g² σ² + 1) = 0.5.
        let l = gaussian_linear_eval(&spec(), &[1.0, 0.5], &unit_batch()).unwrap();
        assert!((l.distortion - 0.5).abs() < 1e-15);
        assert!((l.rate - 0.5).abs() < 1e-15);
        // Wiener gain is the distortion minimizer in w.
        assert!(l.grad_distortion[1].abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_error() {
        let empty = Matrix::new(0, 1, vec![]).unwrap();
        assert!(matches!(
            gaussian_linear_eval(&spec(), &[1.0, 0.5], &empty),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = GaussianLinear::new(GaussianLinearSpec {
            dim: 3,
            variance: 2.0,
        })
        .unwrap();
        let report = super::super::grad_check_all(&model, &mut SeededRng::new(11)).unwrap();
        assert!(report.max_rel_err() <= 1e-4, "{report:?}");
    }
}
