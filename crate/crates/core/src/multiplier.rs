//! Lagrange multiplier for the distortion constraint.
//!
//! The multiplier is stored as `mu = ln λ`, which keeps `λ` positive. Each step
//! performs momentum ascent on `mu` using the constraint gap `D / c_D - 1`
//! directly as the step signal (not the chain-rule derivative `gap * λ`).
//! Dampening equals momentum, so the buffer is an exponential moving average of
//! the gaps:
//!
//! ```text
//! buffer <- α buffer + (1 - α) gap
//! mu     <- min(mu + lr buffer, ln clip)
//! ```
//!
//! Starting from `buffer = 0`, `t` identical gaps `g` give `buffer = g (1 - α^t)`.
//! The multiplier starts at the clip value.

use crate::error::{Error, Result};

pub const DEFAULT_CLIP: f64 = 1e3;
pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_LR: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    mu: f64,
    momentum_buffer: f64,
    clip_lambda: f64,
    log_clip: f64,
    momentum: f64,
    lr: f64,
    step_count: u64,
}

impl Default for MultiplierState {
    fn default() -> Self {
        Self::new(DEFAULT_CLIP, DEFAULT_MOMENTUM, DEFAULT_LR).expect("default multiplier settings")
    }
}

impl MultiplierState {
    /// Multiplier initialized at `clip` with an empty momentum buffer.
    pub fn new(clip: f64, momentum: f64, lr: f64) -> Result<Self> {
        if !(clip > 0.0 && clip.is_finite()) {
            return Err(Error::invalid("clip", format!("must be > 0, got {clip}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(
                "momentum",
                format!("must be in [0, 1), got {momentum}"),
            ));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be > 0, got {lr}")));
        }
        let log_clip = clip.ln();
        Ok(Self {
            mu: log_clip,
            momentum_buffer: 0.0,
            clip_lambda: clip,
            log_clip,
            momentum,
            lr,
            step_count: 0,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn momentum_buffer(&self) -> f64 {
        self.momentum_buffer
    }

    pub fn clip(&self) -> f64 {
        self.clip_lambda
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be > 0, got {lr}")));
        }
        self.lr = lr;
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// True while `mu` sits exactly on the clip bound.
    pub fn at_clip(&self) -> bool {
        self.mu >= self.log_clip
    }

    /// `λ = exp(mu)`, in `(0, clip]`.
    pub fn lambda(&self) -> f64 {
        if self.at_clip() {
            self.clip_lambda
        } else {
            self.mu.exp().min(self.clip_lambda)
        }
    }

    /// One ascent step on the constraint gap `D / c_D - 1`.
    pub fn update(&mut self, gap: f64) -> Result<()> {
        if !gap.is_finite() {
            return Err(Error::non_finite("constraint gap"));
        }
        let a = self.momentum;
        self.momentum_buffer = a * self.momentum_buffer + (1.0 - a) * gap;
        self.mu = (self.mu + self.lr * self.momentum_buffer).min(self.log_clip);
        self.step_count += 1;
        Ok(())
    }

    /// Same settings with `mu` replaced, clamped to the clip.
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu.min(self.log_clip);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_at_clip() {
        let m = MultiplierState::default();
        assert_eq!(m.lambda(), 1e3);
        assert!((m.mu() - 6.907_755_278_982_137).abs() < 1e-12);
        assert_eq!(m.momentum_buffer(), 0.0);
        assert_eq!(m.step_count(), 0);

        let unit = MultiplierState::new(1.0, 0.99, 5e-3).unwrap();
        assert_eq!(unit.mu(), 0.0);
        assert_eq!(unit.lambda(), 1.0);
    }

    #[test]
    fn invalid_ranges() {
        assert!(MultiplierState::new(0.0, 0.5, 1e-3).is_err());
        assert!(MultiplierState::new(1.0, 1.0, 1e-3).is_err());
        assert!(MultiplierState::new(1.0, -0.1, 1e-3).is_err());
        assert!(MultiplierState::new(1.0, 0.5, 0.0).is_err());
        assert!(MultiplierState::default().update(f64::NAN).is_err());
    }

    #[test]
    fn zero_momentum_is_plain_ascent() {
        let mut m = MultiplierState::new(1e3, 0.0, 0.1).unwrap().with_mu(0.0);
        m.update(0.5).unwrap();
        assert_eq!(m.momentum_buffer(), 0.5);
        assert!((m.mu() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_gap_fixed_point() {
        let mut m = MultiplierState::default().with_mu(1.0);
        for _ in 0..1000 {
            m.update(0.0).unwrap();
        }
        assert_eq!(m.mu(), 1.0);
        assert_eq!(m.step_count(), 1000);
    }

    #[test]
    fn positive_gap_at_clip_stays_clipped() {
        let mut m = MultiplierState::default();
        m.update(1.0).unwrap();
        assert!((m.momentum_buffer() - 0.01).abs() < 1e-15);
        assert_eq!(m.mu(), 1e3_f64.ln());
        assert_eq!(m.lambda(), 1e3);
    }

    #[test]
    fn negative_gap_from_clip() {
        let mut m = MultiplierState::default();
        m.update(-1.0).unwrap();
        assert!((m.momentum_buffer() + 0.01).abs() < 1e-15);
        assert!((m.mu() - (1e3_f64.ln() - 5e-5)).abs() < 1e-13);
        assert!(m.lambda() < 1e3);
    }

    #[test]
    fn constant_gap_closed_form() {
        let g = 0.37;
        let mut m = MultiplierState::new(1e9, 0.99, 1e-6).unwrap().with_mu(0.0);
        for t in 1..=500 {
            m.update(g).unwrap();
            let expect = g * (1.0 - 0.99_f64.powi(t));
            assert!((m.momentum_buffer() - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn persistent_violation_pins_clip() {
        let mut m = MultiplierState::default().with_mu(2.0);
        for _ in 0..20_000 {
            m.update(0.3).unwrap();
        }
        assert!(m.at_clip());
        assert_eq!(m.lambda(), 1e3);
    }

    proptest! {
        #[test]
        fn lambda_bounded(gaps in proptest::collection::vec(-5.0f64..5.0, 1..400), mu0 in -5.0f64..7.0) {
            let mut m = MultiplierState::default().with_mu(mu0);
            for g in gaps {
                m.update(g).unwrap();
                prop_assert!(m.lambda() > 0.0 && m.lambda() <= 1e3);
            }
        }

        #[test]
        fn monotone_single_step(gap in -5.0f64..5.0, mu0 in -5.0f64..6.0) {
            let mut m = MultiplierState::default().with_mu(mu0);
            m.update(gap).unwrap();
            if gap > 0.0 { prop_assert!(m.mu() >= mu0); }
            if gap < 0.0 { prop_assert!(m.mu() <= mu0); }
        }

        #[test]
        fn spike_response_bounded(history in proptest::collection::vec(-1.0f64..1.0, 0..50), spike in -100.0f64..100.0) {
            let mut a = MultiplierState::default().with_mu(0.0);
            for g in &history {
                a.update(*g).unwrap();
            }
            let mut b = a.clone();
            a.update(0.0).unwrap();
            b.update(spike).unwrap();
            prop_assert!((b.mu() - a.mu()).abs() <= 5e-3 * 0.01 * spike.abs() + 1e-15);
        }
    }
}
