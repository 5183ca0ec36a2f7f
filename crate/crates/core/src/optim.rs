//! Parameter optimizers and the step-decay learning-rate schedule.

use crate::error::{Error, Result};
use crate::models::{ParamLayout, ParamVector};

/// Adam with bias correction and one learning rate per parameter segment.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Base learning rate per parameter, expanded from the segment rates.
    lrs: Vec<f64>,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    /// Uniform learning rate for every parameter.
    pub fn new(lr: f64, len: usize) -> Result<Self> {
        check_lr(lr)?;
        Ok(Self::with_lrs(vec![lr; len]))
    }

    /// `default_lr` everywhere except segments named in `overrides`.
    pub fn with_segment_lrs(
        layout: &ParamLayout,
        default_lr: f64,
        overrides: &[(&str, f64)],
    ) -> Result<Self> {
        check_lr(default_lr)?;
        let mut lrs = vec![default_lr; layout.len()];
        for &(name, lr) in overrides {
            check_lr(lr)?;
            if let Some(seg) = layout.segment(name) {
                lrs[seg.range()].iter_mut().for_each(|v| *v = lr);
            }
        }
        Ok(Self::with_lrs(lrs))
    }

    fn with_lrs(lrs: Vec<f64>) -> Self {
        let n = lrs.len();
        Self {
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            epsilon: Self::EPSILON,
            lrs,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One update; every learning rate is multiplied by `lr_scale`.
    pub fn step(&mut self, params: &mut ParamVector, grad: &[f64], lr_scale: f64) -> Result<()> {
        if grad.len() != params.len() || grad.len() != self.lrs.len() {
            return Err(Error::LengthMismatch {
                expected: self.lrs.len(),
                got: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("gradient"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let (m, v, lrs) = (&mut self.first_moment, &mut self.second_moment, &self.lrs);
        params.values.update(|theta| {
            for i in 0..theta.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr_scale * lrs[i] * m_hat / (v_hat.sqrt() + eps);
            }
        })
    }
}

/// SGD with momentum and dampening:
/// `buffer <- m buffer + (1 - d) grad; params <- params - lr buffer`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub dampening: f64,
    buffer: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, dampening: f64, len: usize) -> Result<Self> {
        check_lr(lr)?;
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid("momentum", format!("must be in [0, 1), got {momentum}")));
        }
        if !(0.0..=1.0).contains(&dampening) {
            return Err(Error::invalid("dampening", format!("must be in [0, 1], got {dampening}")));
        }
        Ok(Self {
            lr,
            momentum,
            dampening,
            buffer: vec![0.0; len],
        })
    }

    pub fn buffer(&self) -> &[f64] {
        &self.buffer
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.buffer.len() || grad.len() != self.buffer.len() {
            return Err(Error::LengthMismatch {
                expected: self.buffer.len(),
                got: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("gradient"));
        }
        for ((p, b), g) in params.iter_mut().zip(&mut self.buffer).zip(grad) {
            *b = self.momentum * *b + (1.0 - self.dampening) * g;
            *p -= self.lr * *b;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::non_finite("parameters after SGD step"));
        }
        Ok(())
    }
}

/// `lr(t) = base * factor^floor(t / period)`; `period = None` disables decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub decay_factor: f64,
    pub period_steps: Option<u64>,
}

impl LrSchedule {
    pub const CONSTANT: LrSchedule = LrSchedule {
        decay_factor: 1.0,
        period_steps: None,
    };

    pub fn step_decay(decay_factor: f64, period_steps: u64) -> Result<Self> {
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(Error::invalid(
                "lr_decay_factor",
                format!("must be in (0, 1], got {decay_factor}"),
            ));
        }
        if period_steps == 0 {
            return Err(Error::invalid("lr_decay_period", "must be >= 1"));
        }
        Ok(Self {
            decay_factor,
            period_steps: Some(period_steps),
        })
    }

    /// Multiplier applied to the base learning rate at `step`.
    pub fn factor(&self, step: u64) -> f64 {
        match self.period_steps {
            Some(period) => self.decay_factor.powi((step / period) as i32),
            None => 1.0,
        }
    }

    pub fn lr(&self, base_lr: f64, step: u64) -> f64 {
        base_lr * self.factor(step)
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid("lr", format!("must be > 0, got {lr}")));
    }
    Ok(())
}
