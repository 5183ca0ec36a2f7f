//! Separable quadratic rate/distortion landscape with a closed-form
//! constrained optimum.

use super::{BatchLosses, ObjectiveModel, ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::math::{Matrix, RealVec, SeededRng};

/// `R = sum a_i (θ_i - r_i)^2` and `D = floor + sum b_i (θ_i - d_i)^2`.
///
/// `dist_floor` is a constant offset on the distortion; with a positive floor any
/// target below it is infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRDSpec {
    pub rate_center: Vec<f64>,
    pub rate_curvature: Vec<f64>,
    pub dist_center: Vec<f64>,
    pub dist_curvature: Vec<f64>,
    pub dist_floor: f64,
}

impl QuadraticRDSpec {
    pub fn new(
        rate_center: Vec<f64>,
        rate_curvature: Vec<f64>,
        dist_center: Vec<f64>,
        dist_curvature: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self {
            rate_center,
            rate_curvature,
            dist_center,
            dist_curvature,
            dist_floor: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        self.dist_floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.rate_center.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rate_center.len();
        if n == 0 {
            return Err(Error::invalid("rate_center", "must be non-empty"));
        }
        for (name, v) in [
            ("rate_curvature", &self.rate_curvature),
            ("dist_center", &self.dist_center),
            ("dist_curvature", &self.dist_curvature),
        ] {
            if v.len() != n {
                return Err(Error::invalid(
                    name,
                    format!("length {} does not match dimension {n}", v.len()),
                ));
            }
        }
        if self
            .rate_curvature
            .iter()
            .chain(&self.dist_curvature)
            .any(|c| !(*c > 0.0 && c.is_finite()))
        {
            return Err(Error::invalid("curvature", "all curvatures must be > 0"));
        }
        if self
            .rate_center
            .iter()
            .chain(&self.dist_center)
            .any(|c| !c.is_finite())
        {
            return Err(Error::invalid("center", "centers must be finite"));
        }
        if !(self.dist_floor >= 0.0 && self.dist_floor.is_finite()) {
            return Err(Error::invalid("dist_floor", "must be >= 0"));
        }
        Ok(())
    }

    pub fn rate(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.rate_center)
            .zip(&self.rate_curvature)
            .map(|((t, r), a)| a * (t - r).powi(2))
            .sum()
    }

    pub fn distortion(&self, theta: &[f64]) -> f64 {
        self.dist_floor
            + theta
                .iter()
                .zip(&self.dist_center)
                .zip(&self.dist_curvature)
                .map(|((t, d), b)| b * (t - d).powi(2))
                .sum::<f64>()
    }
}

/// Evaluates the quadratic losses and their exact gradients.
pub fn quadratic_eval(spec: &QuadraticRDSpec, theta: &[f64]) -> Result<BatchLosses> {
    if theta.len() != spec.dim() {
        return Err(Error::LengthMismatch {
            expected: spec.dim(),
            got: theta.len(),
        });
    }
    let grad_rate = theta
        .iter()
        .zip(&spec.rate_center)
        .zip(&spec.rate_curvature)
        .map(|((t, r), a)| 2.0 * a * (t - r))
        .collect();
    let grad_dist = theta
        .iter()
        .zip(&spec.dist_center)
        .zip(&spec.dist_curvature)
        .map(|((t, d), b)| 2.0 * b * (t - d))
        .collect();
    BatchLosses::checked(spec.rate(theta), spec.distortion(theta), grad_rate, grad_dist)
}

#[derive(Debug, Clone)]
pub struct Quadratic {
    spec: QuadraticRDSpec,
    layout: ParamLayout,
}

impl Quadratic {
    pub fn new(spec: QuadraticRDSpec) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::new([("theta", spec.dim())])?;
        Ok(Self { spec, layout })
    }

    pub fn spec(&self) -> &QuadraticRDSpec {
        &self.spec
    }
}

impl ObjectiveModel for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn input_dim(&self) -> Option<usize> {
        None
    }

    /// Starts at the rate minimizer.
    fn init_params(&self, _rng: &mut SeededRng, _calibration: &Matrix) -> Result<ParamVector> {
        ParamVector::new(RealVec::new(self.spec.rate_center.clone())?, self.layout.clone())
    }

    fn evaluate(&self, params: &ParamVector, _batch: &Matrix) -> Result<BatchLosses> {
        quadratic_eval(&self.spec, params.as_slice())
    }

    fn sample_check_point(&self, rng: &mut SeededRng) -> Result<(ParamVector, Matrix)> {
        let theta = (0..self.spec.dim())
            .map(|_| rng.uniform_range(-3.0, 3.0))
            .collect();
        Ok((
            ParamVector::new(RealVec::new(theta)?, self.layout.clone())?,
            Matrix::zeros(0, 0),
        ))
    }
}
