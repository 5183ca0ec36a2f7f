//! Combines `(R, D)` and their gradients into a training objective.
//!
//! * D-CO: `R + λ (D / c_D - 1)`, or `R + λ (D - c_D)` with normalization off.
//! * hinge: `R + λ max(D / c_D - 1, 0)` with a fixed `λ`.
//! * β-weighted: `D + β R`.

use crate::error::{Error, Result};
use crate::math::{axpy, RealVec};
use crate::models::BatchLosses;

/// Distortion constraint `D <= target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSpec {
    pub target: f64,
    pub normalized: bool,
}

impl ConstraintSpec {
    pub fn new(target: f64) -> Result<Self> {
        let spec = Self {
            target,
            normalized: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unnormalized(target: f64) -> Result<Self> {
        Ok(Self {
            normalized: false,
            ..Self::new(target)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target > 0.0 && self.target.is_finite()) {
            return Err(Error::invalid(
                "target",
                format!("distortion target must be > 0, got {}", self.target),
            ));
        }
        Ok(())
    }

    /// `D / c_D - 1`; the quantity the multiplier ascends on.
    pub fn gap(&self, distortion: f64) -> f64 {
        distortion / self.target - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSpec {
    pub beta: f64,
}

impl BetaSpec {
    /// `beta = 0` is accepted and gives pure distortion minimization.
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be >= 0, got {beta}")));
        }
        Ok(Self { beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeSpec {
    pub target: f64,
    pub multiplier: f64,
}

impl HingeSpec {
    pub fn new(target: f64, multiplier: f64) -> Result<Self> {
        ConstraintSpec::new(target)?;
        if !(multiplier > 0.0 && multiplier.is_finite()) {
            return Err(Error::invalid(
                "hinge_lambda",
                format!("must be > 0, got {multiplier}"),
            ));
        }
        Ok(Self { target, multiplier })
    }
}

/// Which weight entered the assembled objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Multiplier(f64),
    Beta(f64),
}

impl Weight {
    pub fn value(&self) -> f64 {
        match *self {
            Weight::Multiplier(v) | Weight::Beta(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledLoss {
    pub total: f64,
    pub grad_total: RealVec,
    /// `D / c_D - 1`; absent for the β objective, which has no target.
    pub constraint_gap: Option<f64>,
    pub rate: f64,
    pub distortion: f64,
    pub weight: Weight,
}

/// Lagrangian with `λ` held constant with respect to the parameters.
pub fn assemble_dco(losses: &BatchLosses, spec: &ConstraintSpec, lambda: f64) -> Result<AssembledLoss> {
    spec.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    let gap = spec.gap(losses.distortion);
    let (total, dist_weight) = if spec.normalized {
        (losses.rate + lambda * gap, lambda / spec.target)
    } else {
        (losses.rate + lambda * (losses.distortion - spec.target), lambda)
    };
    Ok(AssembledLoss {
        total,
        grad_total: axpy(dist_weight, &losses.grad_distortion, &losses.grad_rate)?,
        constraint_gap: Some(gap),
        rate: losses.rate,
        distortion: losses.distortion,
        weight: Weight::Multiplier(lambda),
    })
}

/// Hinge on the normalized constraint. At `D == c_D` the inactive branch is
/// taken, so the gradient there is `∇R`.
pub fn assemble_hinge(losses: &BatchLosses, spec: &HingeSpec) -> Result<AssembledLoss> {
    let gap = losses.distortion / spec.target - 1.0;
    let active = gap > 0.0;
    let total = losses.rate + if active { spec.multiplier * gap } else { 0.0 };
    let grad_total = if active {
        axpy(
            spec.multiplier / spec.target,
            &losses.grad_distortion,
            &losses.grad_rate,
        )?
    } else {
        losses.grad_rate.clone()
    };
    Ok(AssembledLoss {
        total,
        grad_total,
        constraint_gap: Some(gap),
        rate: losses.rate,
        distortion: losses.distortion,
        weight: Weight::Multiplier(spec.multiplier),
    })
}

pub fn assemble_beta(losses: &BatchLosses, spec: &BetaSpec) -> Result<AssembledLoss> {
    Ok(AssembledLoss {
        total: losses.distortion + spec.beta * losses.rate,
        grad_total: axpy(spec.beta, &losses.grad_rate, &losses.grad_distortion)?,
        constraint_gap: None,
        rate: losses.rate,
        distortion: losses.distortion,
        weight: Weight::Beta(spec.beta),
    })
}
