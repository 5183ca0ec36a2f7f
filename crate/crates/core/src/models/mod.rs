//! Two-loss objective models: each exposes a rate `R`, a distortion `D`, and
//! their gradients with respect to a flat parameter vector.

mod compressor;
mod gaussian_linear;
mod quadratic;

pub use compressor::{compressor_forward, Compressor, CompressorSpec, COLLAPSE_GAP};
pub use gaussian_linear::{gaussian_linear_eval, GaussianLinear, GaussianLinearSpec};
pub use quadratic::{quadratic_eval, Quadratic, QuadraticRDSpec};

use crate::error::{Error, Result};
use crate::math::{finite_diff_grad, relative_error, Matrix, RealVec, SeededRng};

/// A named span of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered segments tiling `[0, len)` without gaps or overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    len: usize,
}

impl ParamLayout {
    pub fn new<S: Into<String>>(spans: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut segments = Vec::new();
        let mut offset = 0;
        for (name, len) in spans {
            let name = name.into();
            if segments.iter().any(|s: &Segment| s.name == name) {
                return Err(Error::invalid("layout", format!("duplicate segment `{name}`")));
            }
            segments.push(Segment { name, offset, len });
            offset += len;
        }
        Ok(Self {
            segments,
            len: offset,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Model parameters together with their segment layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: RealVec,
    pub layout: ParamLayout,
}

impl ParamVector {
    pub fn new(values: RealVec, layout: ParamLayout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::LengthMismatch {
                expected: layout.len(),
                got: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.segment(name).map(|s| &self.values[s.range()])
    }

    /// Copy with `values` replaced; the layout is kept.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(RealVec::new(values)?, self.layout.clone())
    }
}

/// Rate, distortion and their parameter gradients on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLosses {
    /// Bits per input dimension.
    pub rate: f64,
    /// Mean squared error per input dimension.
    pub distortion: f64,
    pub grad_rate: RealVec,
    pub grad_distortion: RealVec,
    /// Smallest gap between any two codebook centers, for quantized models.
    pub codebook_min_gap: Option<f64>,
}

impl BatchLosses {
    pub(crate) fn checked(
        rate: f64,
        distortion: f64,
        grad_rate: Vec<f64>,
        grad_distortion: Vec<f64>,
    ) -> Result<Self> {
        if !rate.is_finite() || !distortion.is_finite() {
            return Err(Error::non_finite("batch losses"));
        }
        Ok(Self {
            rate: rate.max(0.0),
            distortion: distortion.max(0.0),
            grad_rate: RealVec::new(grad_rate)?,
            grad_distortion: RealVec::new(grad_distortion)?,
            codebook_min_gap: None,
        })
    }
}

/// A differentiable problem exposing `(R, D, dR/dθ, dD/dθ)` on a batch.
pub trait ObjectiveModel: Send + Sync {
    fn name(&self) -> &str;

    fn layout(&self) -> &ParamLayout;

    /// Input dimension of data batches; `None` for data-free models.
    fn input_dim(&self) -> Option<usize>;

    /// Upper bound on the rate in bits per input dimension, if the model has one.
    fn capacity_bits(&self) -> Option<f64> {
        None
    }

    /// Initial parameters. `calibration` is a sample of training data for
    /// models with data-dependent initialization.
    fn init_params(&self, rng: &mut SeededRng, calibration: &Matrix) -> Result<ParamVector>;

    fn evaluate(&self, params: &ParamVector, batch: &Matrix) -> Result<BatchLosses>;

    /// Segments whose analytic gradients are exact derivatives of the forward
    /// losses. Straight-through paths are excluded.
    fn smooth_segments(&self) -> Vec<String> {
        self.layout().segments().iter().map(|s| s.name.clone()).collect()
    }

    /// Random parameters and batch for gradient checking.
    fn sample_check_point(&self, rng: &mut SeededRng) -> Result<(ParamVector, Matrix)>;
}

/// Which loss a gradient check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossComponent {
    Rate,
    Distortion,
}

impl std::fmt::Display for LossComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossComponent::Rate => "rate",
            LossComponent::Distortion => "distortion",
        })
    }
}

/// Worst relative gradient error for one (segment, loss) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub segment: String,
    pub component: LossComponent,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub model: String,
    pub trials: usize,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }

    /// The worst entry, if any.
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

pub const GRAD_CHECK_TRIALS: usize = 20;
const FD_STEP: f64 = 1e-5;
const REL_ERR_FLOOR: f64 = 1e-8;

/// Compares analytic gradients with central differences on the model's
/// smooth segments over [`GRAD_CHECK_TRIALS`] random (params, batch) pairs.
pub fn grad_check_all(model: &dyn ObjectiveModel, rng: &mut SeededRng) -> Result<GradCheckReport> {
    grad_check_trials(model, rng, GRAD_CHECK_TRIALS)
}

pub fn grad_check_trials(
    model: &dyn ObjectiveModel,
    rng: &mut SeededRng,
    trials: usize,
) -> Result<GradCheckReport> {
    let smooth = model.smooth_segments();
    let mut entries: Vec<GradCheckEntry> = smooth
        .iter()
        .flat_map(|s| {
            [LossComponent::Rate, LossComponent::Distortion].map(|component| GradCheckEntry {
                segment: s.clone(),
                component,
                max_rel_err: 0.0,
            })
        })
        .collect();

    for _ in 0..trials {
        let (params, batch) = model.sample_check_point(rng)?;
        let analytic = model.evaluate(&params, &batch)?;
        for entry in entries.iter_mut() {
            let seg = model
                .layout()
                .segment(&entry.segment)
                .ok_or_else(|| Error::invalid("segment", entry.segment.clone()))?
                .clone();
            let base = params.as_slice().to_vec();
            let component = entry.component;
            let numeric = finite_diff_grad(
                |local| {
                    let mut full = base.clone();
                    full[seg.range()].copy_from_slice(local);
                    let probe = match params.with_values(full) {
                        Ok(p) => p,
                        Err(_) => return f64::NAN,
                    };
                    match model.evaluate(&probe, &batch) {
                        Ok(l) => match component {
                            LossComponent::Rate => l.rate,
                            LossComponent::Distortion => l.distortion,
                        },
                        Err(_) => f64::NAN,
                    }
                },
                &base[seg.range()],
                FD_STEP,
            )?;
            let exact = match component {
                LossComponent::Rate => &analytic.grad_rate[seg.range()],
                LossComponent::Distortion => &analytic.grad_distortion[seg.range()],
            };
            let err = relative_error(exact, &numeric, REL_ERR_FLOOR);
            entry.max_rel_err = entry.max_rel_err.max(err);
        }
    }

    Ok(GradCheckReport {
        model: model.name().to_string(),
        trials,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_tiles_without_overlap() {
        let layout = ParamLayout::new([("a", 3), ("b", 0), ("c", 2)]).unwrap();
        assert_eq!(layout.len(), 5);
        let mut next = 0;
        for s in layout.segments() {
            assert_eq!(s.offset, next);
            next += s.len;
        }
        assert_eq!(next, layout.len());
        assert!(ParamLayout::new([("a", 1), ("a", 1)]).is_err());
    }

    #[test]
    fn param_vector_checks_length() {
        let layout = ParamLayout::new([("a", 2)]).unwrap();
        assert!(ParamVector::new(RealVec::zeros(3), layout.clone()).is_err());
        let p = ParamVector::new(RealVec::new(vec![1.0, 2.0]).unwrap(), layout).unwrap();
        assert_eq!(p.segment("a"), Some(&[1.0, 2.0][..]));
        assert_eq!(p.segment("b"), None);
    }
}
