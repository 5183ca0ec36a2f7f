//! The minibatch training loop.
//!
//! Each step draws a batch, evaluates `(R, D)` once, assembles the method's
//! objective, takes an Adam step on the parameters and, for D-CO, a multiplier
//! step using the same batch's constraint gap.

use std::fmt::Write as _;

use crate::data::{train_eval_split, DataStream, SourceSpec, TrainingSet};
use crate::error::{Error, Result};
use crate::loss::{assemble_beta, assemble_dco, assemble_hinge, BetaSpec, ConstraintSpec, HingeSpec};
use crate::math::{mix_seed, Matrix, SeededRng};
use crate::models::{
    Compressor, CompressorSpec, GaussianLinear, GaussianLinearSpec, ObjectiveModel, ParamVector,
    Quadratic, QuadraticRDSpec,
};
use crate::multiplier::MultiplierState;
use crate::optim::{Adam, LrSchedule};

/// Loss magnitude beyond which a run is declared diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Steps per nominal epoch for models without a training set.
pub const ANALYTIC_EPOCH_STEPS: u64 = 1000;
const MIN_WINDOW_LOG_POINTS: u64 = 50;
const CALIBRATION_ROWS: usize = 256;
const INIT_STREAM: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Dco,
    Hinge,
    Beta,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Dco => "dco",
            MethodKind::Hinge => "hinge",
            MethodKind::Beta => "beta",
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dco" => Ok(MethodKind::Dco),
            "hinge" => Ok(MethodKind::Hinge),
            "beta" => Ok(MethodKind::Beta),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected dco, hinge or beta)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Dco(ConstraintSpec),
    Hinge(HingeSpec),
    Beta(BetaSpec),
}

impl Method {
    pub fn kind(&self) -> MethodKind {
        match self {
            Method::Dco(_) => MethodKind::Dco,
            Method::Hinge(_) => MethodKind::Hinge,
            Method::Beta(_) => MethodKind::Beta,
        }
    }

    pub fn target(&self) -> Option<f64> {
        match self {
            Method::Dco(c) => Some(c.target),
            Method::Hinge(h) => Some(h.target),
            Method::Beta(_) => None,
        }
    }

    /// The swept value: the target for constrained methods, β otherwise.
    pub fn sweep_value(&self) -> f64 {
        match self {
            Method::Dco(c) => c.target,
            Method::Hinge(h) => h.target,
            Method::Beta(b) => b.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Quadratic(QuadraticRDSpec),
    GaussianLinear(GaussianLinearSpec),
    Compressor(CompressorSpec),
}

impl ModelConfig {
    pub fn build(&self) -> Result<Box<dyn ObjectiveModel>> {
        Ok(match self {
            ModelConfig::Quadratic(s) => Box::new(Quadratic::new(s.clone())?),
            ModelConfig::GaussianLinear(s) => Box::new(GaussianLinear::new(s.clone())?),
            ModelConfig::Compressor(s) => Box::new(Compressor::new(s.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Quadratic(_) => "quadratic",
            ModelConfig::GaussianLinear(_) => "gaussian_linear",
            ModelConfig::Compressor(_) => "compressor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: SourceSpec,
    pub train_set_size: usize,
    pub batch_size: usize,
    /// Eval-stream samples used for the post-training evaluation.
    pub eval_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    /// Learning rate for the `prior` segment, where the model has one.
    pub lr_prior: f64,
    pub lr_decay_factor: f64,
    /// Decay period in epochs; `None` keeps the rates constant.
    pub lr_decay_epochs: Option<u64>,
    pub multiplier_lr: f64,
    pub multiplier_momentum: f64,
    pub multiplier_clip: f64,
    /// Apply the step decay to the multiplier learning rate as well.
    pub decay_multiplier_lr: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            lr_prior: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_epochs: Some(3),
            multiplier_lr: crate::multiplier::DEFAULT_LR,
            multiplier_momentum: crate::multiplier::DEFAULT_MOMENTUM,
            multiplier_clip: crate::multiplier::DEFAULT_CLIP,
            decay_multiplier_lr: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub model: ModelConfig,
    pub data: Option<DataConfig>,
    pub optimizer: OptimizerConfig,
    pub total_steps: u64,
    pub log_every: u64,
    pub seed: u64,
    /// Distortion-only steps run before the main budget.
    pub warm_start_steps: u64,
    /// Fraction of the main budget averaged into the final summary.
    pub trailing_fraction: f64,
    pub psnr_peak: f64,
    /// Relative slack on `D <= c_D` for the achieved flag.
    pub achieved_tolerance: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::invalid("total_steps", "must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log_every", "must be >= 1"));
        }
        if !(self.trailing_fraction > 0.0 && self.trailing_fraction <= 1.0) {
            return Err(Error::invalid("trailing_fraction", "must be in (0, 1]"));
        }
        if !(self.psnr_peak > 0.0 && self.psnr_peak.is_finite()) {
            return Err(Error::invalid("psnr_peak", "must be > 0"));
        }
        let model = self.model.build()?;
        match (model.input_dim(), &self.data) {
            (Some(_), None) => {
                return Err(Error::Config(format!(
                    "model `{}` needs a data source",
                    model.name()
                )))
            }
            (Some(dim), Some(d)) if d.source.dim != dim => {
                return Err(Error::Config(format!(
                    "source dimension {} does not match model input dimension {dim}",
                    d.source.dim
                )))
            }
            _ => {}
        }
        if let Some(d) = &self.data {
            d.source.validate()?;
            if d.batch_size == 0 || d.train_set_size < d.batch_size {
                return Err(Error::invalid("train_set_size", "must be >= batch_size >= 1"));
            }
            if d.eval_samples == 0 {
                return Err(Error::invalid("eval_samples", "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Number of trailing main-phase steps averaged into the final summary.
    pub fn window_steps(&self) -> u64 {
        let frac = (self.total_steps as f64 * self.trailing_fraction).ceil() as u64;
        frac.max(MIN_WINDOW_LOG_POINTS * self.log_every)
            .min(self.total_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPoint {
    pub step: u64,
    /// Mean training rate over the steps since the previous log point.
    pub rate: f64,
    pub distortion: f64,
    /// `λ` for D-CO and hinge, `β` for the β objective.
    pub weight: f64,
    pub lr: f64,
}

/// Averages over the trailing window of training steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalSummary {
    pub rate: f64,
    pub distortion: f64,
    pub weight: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub rate: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvergenceFlags {
    /// `None` for the β objective, which has no target.
    pub target_achieved: Option<bool>,
    pub multiplier_at_clip: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: MethodKind,
    pub sweep_value: f64,
    pub target: Option<f64>,
    pub psnr_peak: f64,
    pub series: Vec<LogPoint>,
    pub final_summary: FinalSummary,
    pub eval: Option<EvalSummary>,
    pub flags: ConvergenceFlags,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub rate: f64,
    pub distortion: f64,
    pub psnr: f64,
    pub gap: Option<f64>,
}

/// `10 log10(peak² / D)`; `+inf` at zero distortion.
pub fn psnr(distortion: f64, peak: f64) -> f64 {
    if distortion <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / distortion).log10()
    }
}

pub fn compute_metrics(record: &RunRecord) -> Result<MetricsSummary> {
    if record.series.is_empty() && record.final_summary.steps == 0 {
        return Err(Error::invalid("record", "empty run record"));
    }
    let f = &record.final_summary;
    Ok(MetricsSummary {
        rate: f.rate,
        distortion: f.distortion,
        psnr: psnr(f.distortion, record.psnr_peak),
        gap: record.target.map(|c| f.distortion / c - 1.0),
    })
}

enum Batches {
    None,
    Set(TrainingSet),
}

impl Batches {
    fn next(&mut self) -> Matrix {
        match self {
            Batches::None => Matrix::zeros(0, 0),
            Batches::Set(s) => s.next_batch(),
        }
    }
}

#[derive(Default)]
struct Accum {
    rate: f64,
    distortion: f64,
    weight: f64,
    n: u64,
    all_clipped: bool,
}

impl Accum {
    fn add(&mut self, rate: f64, distortion: f64, weight: f64) {
        self.rate += rate;
        self.distortion += distortion;
        self.weight += weight;
        self.n += 1;
    }

    fn mean(&self) -> (f64, f64, f64) {
        let n = self.n.max(1) as f64;
        (self.rate / n, self.distortion / n, self.weight / n)
    }

    fn clear(&mut self) {
        *self = Accum::default();
    }
}

pub fn run(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let model = config.model.build()?;
    let mut init_rng = SeededRng::new(mix_seed(config.seed, INIT_STREAM));

    let (mut batches, mut eval_stream, epoch_steps, calibration) = match &config.data {
        Some(d) => {
            let mut spec = d.source.clone();
            spec.seed = mix_seed(config.seed, spec.seed);
            let (mut train, eval): (DataStream, DataStream) = train_eval_split(&spec)?;
            let set = TrainingSet::new(&mut train, d.train_set_size, d.batch_size, spec.seed)?;
            let rows: Vec<usize> = (0..CALIBRATION_ROWS.min(d.train_set_size)).collect();
            let calibration = set.samples().select_rows(&rows);
            let epoch = set.steps_per_epoch();
            (Batches::Set(set), Some(eval), epoch, calibration)
        }
        None => (Batches::None, None, ANALYTIC_EPOCH_STEPS, Matrix::zeros(0, 0)),
    };

    let mut params: ParamVector = model.init_params(&mut init_rng, &calibration)?;
    let opt = &config.optimizer;
    let mut adam = Adam::with_segment_lrs(model.layout(), opt.lr, &[("prior", opt.lr_prior)])?;
    let schedule = match opt.lr_decay_epochs {
        Some(epochs) if epochs > 0 => LrSchedule::step_decay(opt.lr_decay_factor, epochs * epoch_steps)?,
        _ => LrSchedule::CONSTANT,
    };
    let mut multiplier = MultiplierState::new(opt.multiplier_clip, opt.multiplier_momentum, opt.multiplier_lr)?;

    let mut series = Vec::new();
    let mut interval = Accum::default();
    let mut window = Accum {
        all_clipped: true,
        ..Accum::default()
    };
    let window_start = config.total_steps - config.window_steps();
    let mut diverged = false;
    let mut step: u64 = 0;

    // Warm start: distortion only, outside the main budget and the summary window.
    for _ in 0..config.warm_start_steps {
        let batch = batches.next();
        let losses = match model.evaluate(&params, &batch) {
            Ok(l) => l,
            Err(Error::NonFinite { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if adam.step(&mut params, &losses.grad_distortion, 1.0).is_err() {
            diverged = true;
            break;
        }
        step += 1;
    }

    let mut main_step: u64 = 0;
    while !diverged && main_step < config.total_steps {
        let batch = batches.next();
        let losses = match model.evaluate(&params, &batch) {
            Ok(l) => l,
            Err(Error::NonFinite { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let lr_scale = schedule.factor(main_step);
        let (assembled, weight) = match &config.method {
            Method::Dco(spec) => {
                let lambda = multiplier.lambda();
                (assemble_dco(&losses, spec, lambda)?, lambda)
            }
            Method::Hinge(spec) => (assemble_hinge(&losses, spec)?, spec.multiplier),
            Method::Beta(spec) => (assemble_beta(&losses, spec)?, spec.beta),
        };
        if !assembled.total.is_finite() || assembled.total.abs() > DIVERGENCE_THRESHOLD {
            interval.add(losses.rate, losses.distortion, weight);
            step += 1;
            diverged = true;
            break;
        }
        if main_step >= window_start {
            window.add(losses.rate, losses.distortion, weight);
            if matches!(config.method, Method::Dco(_)) {
                window.all_clipped &= multiplier.at_clip();
            }
        }
        interval.add(losses.rate, losses.distortion, weight);

        if adam.step(&mut params, &assembled.grad_total, lr_scale).is_err() {
            diverged = true;
            break;
        }
        if let Method::Dco(_) = &config.method {
            if opt.decay_multiplier_lr {
                multiplier.set_lr(opt.multiplier_lr * lr_scale)?;
            }
            let gap = assembled.constraint_gap.unwrap_or(0.0);
            multiplier.update(gap)?;
        }

        main_step += 1;
        step += 1;
        if main_step % config.log_every == 0 || main_step == config.total_steps {
            let (rate, distortion, weight) = interval.mean();
            series.push(LogPoint {
                step,
                rate,
                distortion,
                weight,
                lr: opt.lr * lr_scale,
            });
            interval.clear();
        }
    }
    if diverged && interval.n > 0 {
        let (rate, distortion, weight) = interval.mean();
        series.push(LogPoint {
            step: step.max(1),
            rate,
            distortion,
            weight,
            lr: opt.lr * schedule.factor(main_step),
        });
    }

    let (rate, distortion, weight) = if window.n > 0 {
        window.mean()
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    let final_summary = FinalSummary {
        rate,
        distortion,
        weight,
        steps: window.n,
    };

    let eval = if diverged {
        None
    } else {
        Some(evaluate_final(model.as_ref(), &params, eval_stream.as_mut(), config)?)
    };

    let target = config.method.target();
    let target_achieved = target.map(|c| {
        !diverged && final_summary.distortion.is_finite()
            && final_summary.distortion / c - 1.0 <= config.achieved_tolerance
    });
    let multiplier_at_clip = matches!(config.method, Method::Dco(_)) && window.n > 0 && window.all_clipped;

    Ok(RunRecord {
        method: config.method.kind(),
        sweep_value: config.method.sweep_value(),
        target,
        psnr_peak: config.psnr_peak,
        series,
        final_summary,
        eval,
        flags: ConvergenceFlags {
            target_achieved,
            multiplier_at_clip,
            diverged,
        },
        params: params.values.into_inner(),
    })
}

fn evaluate_final(
    model: &dyn ObjectiveModel,
    params: &ParamVector,
    eval_stream: Option<&mut DataStream>,
    config: &RunConfig,
) -> Result<EvalSummary> {
    match (eval_stream, &config.data) {
        (Some(stream), Some(d)) => {
            let mut rate = 0.0;
            let mut dist = 0.0;
            let mut rows = 0usize;
            let chunk = 256;
            while rows < d.eval_samples {
                let n = chunk.min(d.eval_samples - rows);
                let batch = stream.next_batch(n)?;
                let l = model.evaluate(params, &batch)?;
                rate += l.rate * n as f64;
                dist += l.distortion * n as f64;
                rows += n;
            }
            Ok(EvalSummary {
                rate: rate / rows as f64,
                distortion: dist / rows as f64,
            })
        }
        _ => {
            let l = model.evaluate(params, &Matrix::zeros(0, 0))?;
            Ok(EvalSummary {
                rate: l.rate,
                distortion: l.distortion,
            })
        }
    }
}

/// Formats a float for CSV output; shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v != 0.0 && !(1e-4..1e16).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub const RUN_CSV_HEADER: &str = "step,rate,distortion,multiplier,lr,psnr";
pub const SUMMARY_CSV_HEADER: &str = "method,target_or_beta,rate,distortion,multiplier_final,psnr,gap,achieved,multiplier_at_clip,diverged,eval_rate,eval_distortion,eval_psnr";

impl RunRecord {
    pub fn run_csv(&self) -> String {
        let mut out = String::from(RUN_CSV_HEADER);
        out.push('\n');
        for p in &self.series {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.step,
                fmt_f64(p.rate),
                fmt_f64(p.distortion),
                fmt_f64(p.weight),
                fmt_f64(p.lr),
                fmt_f64(psnr(p.distortion, self.psnr_peak))
            );
        }
        out
    }

    pub fn summary_row(&self) -> String {
        let f = &self.final_summary;
        let gap = self
            .target
            .map(|c| fmt_f64(f.distortion / c - 1.0))
            .unwrap_or_default();
        let achieved = self
            .flags
            .target_achieved
            .map(|a| a.to_string())
            .unwrap_or_else(|| "na".into());
        let (er, ed, ep) = match &self.eval {
            Some(e) => (
                fmt_f64(e.rate),
                fmt_f64(e.distortion),
                fmt_f64(psnr(e.distortion, self.psnr_peak)),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            fmt_f64(self.sweep_value),
            fmt_f64(f.rate),
            fmt_f64(f.distortion),
            fmt_f64(f.weight),
            fmt_f64(psnr(f.distortion, self.psnr_peak)),
            gap,
            achieved,
            self.flags.multiplier_at_clip,
            self.flags.diverged,
            er,
            ed,
            ep
        )
    }

    pub fn summary_csv(&self) -> String {
        format!("{SUMMARY_CSV_HEADER}\n{}\n", self.summary_row())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceKind;

    pub(crate) fn quadratic_config(method: Method, steps: u64) -> RunConfig {
        RunConfig {
            method,
            model: ModelConfig::Quadratic(
                QuadraticRDSpec::new(vec![0.0], vec![1.0], vec![2.0], vec![1.0]).unwrap(),
            ),
            data: None,
            optimizer: OptimizerConfig {
                lr_decay_epochs: None,
                ..OptimizerConfig::default()
            },
            total_steps: steps,
            log_every: 10,
            seed: 1,
            warm_start_steps: 0,
            trailing_fraction: 0.1,
            psnr_peak: 1.0,
            achieved_tolerance: 0.02,
        }
    }

    #[test]
    fn dco_hand_quadratic() {
        let cfg = quadratic_config(Method::Dco(ConstraintSpec::new(1.0).unwrap()), 20_000);
        let rec = run(&cfg).unwrap();
        let f = rec.final_summary;
        assert!((rec.params[0] - 1.0).abs() < 0.02, "theta {}", rec.params[0]);
        assert!((f.rate - 1.0).abs() < 0.02, "rate {}", f.rate);
        assert!((f.weight - 1.0).abs() < 0.02, "lambda {}", f.weight);
        assert_eq!(rec.flags.target_achieved, Some(true));
        assert!(!rec.flags.multiplier_at_clip);
    }

    #[test]
    fn beta_hand_quadratic() {
        let cfg = quadratic_config(Method::Beta(BetaSpec::new(1.0).unwrap()), 5_000);
        let rec = run(&cfg).unwrap();
        assert!((rec.params[0] - 1.0).abs() < 1e-3);
        assert!((rec.final_summary.rate - 1.0).abs() < 1e-2);
        assert!((rec.final_summary.distortion - 1.0).abs() < 1e-2);
        assert_eq!(rec.flags.target_achieved, None);
    }

    #[test]
    fn infeasible_target_pins_multiplier() {
        let mut cfg = quadratic_config(Method::Dco(ConstraintSpec::new(0.25).unwrap()), 5_000);
        cfg.model = ModelConfig::Quadratic(
            QuadraticRDSpec::new(vec![0.0], vec![1.0], vec![2.0], vec![1.0])
                .unwrap()
                .with_floor(0.5)
                .unwrap(),
        );
        let rec = run(&cfg).unwrap();
        assert!(rec.flags.multiplier_at_clip);
        assert_eq!(rec.final_summary.weight, 1e3);
        assert_eq!(rec.flags.target_achieved, Some(false));
        assert!(rec.series.iter().all(|p| p.weight == 1e3));
    }

    #[test]
    fn series_is_increasing_and_bounded() {
        let cfg = quadratic_config(Method::Dco(ConstraintSpec::new(0.5).unwrap()), 3_000);
        let rec = run(&cfg).unwrap();
        assert!(rec.series.windows(2).all(|w| w[0].step < w[1].step));
        assert!(rec.series.iter().all(|p| p.weight > 0.0 && p.weight <= 1e3));
        assert_eq!(rec.series.len(), 300);
    }

    #[test]
    fn runs_are_bit_identical() {
        let cfg = compressor_config(Method::Dco(ConstraintSpec::new(0.3).unwrap()), 300);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.run_csv(), b.run_csv());
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        let mut cfg = quadratic_config(Method::Beta(BetaSpec::new(1.0).unwrap()), 100);
        cfg.model = ModelConfig::Quadratic(
            QuadraticRDSpec::new(vec![1e7], vec![1e9], vec![0.0], vec![1.0]).unwrap(),
        );
        let rec = run(&cfg).unwrap();
        assert!(rec.flags.diverged);
        assert!(rec.eval.is_none());
        assert_eq!(rec.series.len(), 1);
        assert!(rec.series[0].distortion > DIVERGENCE_THRESHOLD);
        assert!(rec.final_summary.rate.is_nan());
    }

    #[test]
    fn warm_start_outside_window() {
        let mut cfg = quadratic_config(Method::Beta(BetaSpec::new(1.0).unwrap()), 1_000);
        cfg.warm_start_steps = 200;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.final_summary.steps, cfg.window_steps());
        assert_eq!(rec.series.first().unwrap().step, 210);
    }

    #[test]
    fn metrics_psnr() {
        assert_eq!(psnr(1.0, 1.0), 0.0);
        assert!((psnr(65.025, 255.0) - 30.0).abs() < 1e-12);
        assert_eq!(psnr(0.0, 1.0), f64::INFINITY);
        let cfg = quadratic_config(Method::Dco(ConstraintSpec::new(1.0).unwrap()), 20_000);
        let rec = run(&cfg).unwrap();
        let m = compute_metrics(&rec).unwrap();
        assert!(m.gap.unwrap().abs() < 0.02);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut cfg = compressor_config(Method::Dco(ConstraintSpec::new(0.3).unwrap()), 10);
        cfg.data = None;
        assert!(run(&cfg).is_err());
        let mut cfg = compressor_config(Method::Dco(ConstraintSpec::new(0.3).unwrap()), 10);
        cfg.data.as_mut().unwrap().source.dim = 3;
        assert!(run(&cfg).is_err());
        let cfg = quadratic_config(Method::Dco(ConstraintSpec::new(0.3).unwrap()), 0);
        assert!(run(&cfg).is_err());
    }

    fn compressor_config(method: Method, steps: u64) -> RunConfig {
        let spec = CompressorSpec {
            input_dim: 8,
            latent_dim: 4,
            hidden_dim: 8,
            codebook_size: 4,
            ste_temperature: 1.0,
        };
        RunConfig {
            method,
            model: ModelConfig::Compressor(spec),
            data: Some(DataConfig {
                source: SourceSpec {
                    kind: SourceKind::SmoothField {
                        variance: 1.0,
                        correlation_length: 2.0,
                    },
                    dim: 8,
                    seed: 0,
                },
                train_set_size: 1024,
                batch_size: 32,
                eval_samples: 256,
            }),
            optimizer: OptimizerConfig::default(),
            total_steps: steps,
            log_every: 10,
            seed: 3,
            warm_start_steps: 0,
            trailing_fraction: 0.1,
            psnr_peak: 1.0,
            achieved_tolerance: 0.02,
        }
    }
}
