//! Flat TOML run and sweep files.
//!
//! Every key is a scalar or a short list. A run file describes one training
//! run; a sweep file holds the same keys plus the swept values. See the README
//! for the full key reference.

use serde::Deserialize;

use crate::data::{SourceKind, SourceSpec};
use crate::error::{Error, Result};
use crate::loss::{BetaSpec, ConstraintSpec, HingeSpec};
use crate::models::{CompressorSpec, GaussianLinearSpec, QuadraticRDSpec};
use crate::trainer::{
    DataConfig, Method, MethodKind, ModelConfig, OptimizerConfig, RunConfig, ANALYTIC_EPOCH_STEPS,
};

/// Every key accepted in run and sweep files.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub method: Option<String>,
    pub target: Option<f64>,
    pub normalized: Option<bool>,
    pub hinge_lambda: Option<f64>,
    pub beta: Option<f64>,

    pub model: Option<String>,
    pub rate_center: Option<Vec<f64>>,
    pub rate_curvature: Option<Vec<f64>>,
    pub dist_center: Option<Vec<f64>>,
    pub dist_curvature: Option<Vec<f64>>,
    pub dist_floor: Option<f64>,
    pub input_dim: Option<usize>,
    pub latent_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub codebook_size: Option<usize>,
    pub ste_temperature: Option<f64>,
    pub half_capacity: Option<bool>,

    pub source: Option<String>,
    pub source_variance: Option<f64>,
    pub correlation_length: Option<f64>,
    pub mixture_weights: Option<Vec<f64>>,
    pub mixture_means: Option<Vec<f64>>,
    pub mixture_stds: Option<Vec<f64>>,
    pub data_seed: Option<u64>,
    pub batch_size: Option<usize>,
    pub train_set_size: Option<usize>,
    pub eval_samples: Option<usize>,

    pub lr: Option<f64>,
    pub lr_prior: Option<f64>,
    pub lr_decay_factor: Option<f64>,
    pub lr_decay_epochs: Option<u64>,
    pub multiplier_lr: Option<f64>,
    pub multiplier_momentum: Option<f64>,
    pub multiplier_clip: Option<f64>,
    pub decay_multiplier_lr: Option<bool>,

    pub total_steps: Option<u64>,
    pub eval_every: Option<u64>,
    pub seed: Option<u64>,
    pub warm_start_steps: Option<u64>,
    pub trailing_fraction: Option<f64>,
    pub psnr_peak: Option<f64>,
    pub achieved_tolerance: Option<f64>,

    pub sweep_values: Option<Vec<f64>>,
    pub sweep_targets: Option<Vec<f64>>,
    pub sweep_lambdas: Option<Vec<f64>>,
}

/// Steps per run for data-driven models; analytic models use 20k.
pub const DEFAULT_DATA_STEPS: u64 = 100_000;
pub const DEFAULT_ANALYTIC_STEPS: u64 = 20_000;

/// Default training set: one pass every tenth of the run, so the 3-epoch
/// decay fires about three times regardless of run length.
pub fn default_train_set_size(batch_size: usize, total_steps: u64) -> usize {
    (batch_size * total_steps.div_ceil(10) as usize).max(4096)
}

const SWEEP_KEYS: [&str; 3] = ["sweep_values", "sweep_targets", "sweep_lambdas"];

/// Parses TOML text; syntax and type errors carry line and column.
pub fn parse_raw(text: &str) -> Result<RawConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
}

/// One-based line of `key = ...` in `text`, for diagnostics.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, key: &str, reason: impl std::fmt::Display) -> Error {
        match line_of(self.text, key) {
            Some(line) => Error::Config(format!("line {line}, field `{key}`: {reason}")),
            None => Error::Config(format!("field `{key}`: {reason}")),
        }
    }

    fn wrap(&self, key: &str, e: Error) -> Error {
        match e {
            Error::InvalidArgument { reason, .. } => self.err(key, reason),
            other => self.err(key, other),
        }
    }

    fn required<T: Clone>(&self, key: &str, v: &Option<T>) -> Result<T> {
        v.clone()
            .ok_or_else(|| Error::Config(format!("missing required field `{key}`")))
    }

    fn forbid<T>(&self, key: &str, v: &Option<T>, why: &str) -> Result<()> {
        if v.is_some() {
            return Err(self.err(key, why));
        }
        Ok(())
    }
}

fn parse_method(ctx: &Ctx<'_>, raw: &RawConfig) -> Result<MethodKind> {
    let m = ctx.required("method", &raw.method)?;
    m.parse().map_err(|e| ctx.wrap("method", e))
}

/// Method spec for a single run, checking that only the matching keys are set.
fn method_spec(ctx: &Ctx<'_>, raw: &RawConfig, kind: MethodKind) -> Result<Method> {
    match kind {
        MethodKind::Dco => {
            ctx.forbid("beta", &raw.beta, "not used by method `dco`")?;
            ctx.forbid("hinge_lambda", &raw.hinge_lambda, "not used by method `dco`")?;
            let target = ctx.required("target", &raw.target)?;
            dco_spec(ctx, raw, target)
        }
        MethodKind::Hinge => {
            ctx.forbid("beta", &raw.beta, "not used by method `hinge`")?;
            ctx.forbid("normalized", &raw.normalized, "not used by method `hinge`")?;
            let target = ctx.required("target", &raw.target)?;
            let lambda = ctx.required("hinge_lambda", &raw.hinge_lambda)?;
            hinge_spec(ctx, target, lambda)
        }
        MethodKind::Beta => {
            ctx.forbid("target", &raw.target, "not used by method `beta`")?;
            ctx.forbid("hinge_lambda", &raw.hinge_lambda, "not used by method `beta`")?;
            ctx.forbid("normalized", &raw.normalized, "not used by method `beta`")?;
            let beta = ctx.required("beta", &raw.beta)?;
            beta_spec(ctx, beta)
        }
    }
}

fn dco_spec(ctx: &Ctx<'_>, raw: &RawConfig, target: f64) -> Result<Method> {
    let spec = if raw.normalized.unwrap_or(true) {
        ConstraintSpec::new(target)
    } else {
        ConstraintSpec::unnormalized(target)
    };
    Ok(Method::Dco(spec.map_err(|e| ctx.wrap("target", e))?))
}

fn hinge_spec(ctx: &Ctx<'_>, target: f64, lambda: f64) -> Result<Method> {
    HingeSpec::new(target, lambda)
        .map(Method::Hinge)
        .map_err(|e| ctx.wrap("hinge_lambda", e))
}

fn beta_spec(ctx: &Ctx<'_>, beta: f64) -> Result<Method> {
    BetaSpec::new(beta)
        .map(Method::Beta)
        .map_err(|e| ctx.wrap("beta", e))
}

fn model_config(ctx: &Ctx<'_>, raw: &RawConfig) -> Result<ModelConfig> {
    let name = raw.model.clone().unwrap_or_else(|| "compressor".into());
    match name.as_str() {
        "quadratic" => {
            let spec = QuadraticRDSpec {
                rate_center: ctx.required("rate_center", &raw.rate_center)?,
                rate_curvature: ctx.required("rate_curvature", &raw.rate_curvature)?,
                dist_center: ctx.required("dist_center", &raw.dist_center)?,
                dist_curvature: ctx.required("dist_curvature", &raw.dist_curvature)?,
                dist_floor: raw.dist_floor.unwrap_or(0.0),
            };
            spec.validate().map_err(|e| match e {
                Error::InvalidArgument { name, reason } => ctx.err(name, reason),
                other => other,
            })?;
            Ok(ModelConfig::Quadratic(spec))
        }
        "gaussian_linear" => {
            let dim = raw.input_dim.unwrap_or(CompressorSpec::default().input_dim);
            let variance = source_variance(raw);
            Ok(ModelConfig::GaussianLinear(GaussianLinearSpec { dim, variance }))
        }
        "compressor" => {
            let d = CompressorSpec::default();
            let spec = CompressorSpec {
                input_dim: raw.input_dim.unwrap_or(d.input_dim),
                latent_dim: raw.latent_dim.unwrap_or(d.latent_dim),
                hidden_dim: raw.hidden_dim.unwrap_or(d.hidden_dim),
                codebook_size: raw.codebook_size.unwrap_or(d.codebook_size),
                ste_temperature: raw.ste_temperature.unwrap_or(d.ste_temperature),
            };
            let spec = if raw.half_capacity.unwrap_or(false) {
                spec.half_capacity()
            } else {
                spec
            };
            Ok(ModelConfig::Compressor(spec))
        }
        other => Err(ctx.err(
            "model",
            format!("unknown model `{other}` (expected quadratic, gaussian_linear or compressor)"),
        )),
    }
}

fn source_variance(raw: &RawConfig) -> f64 {
    raw.source_variance.unwrap_or(1.0)
}

fn data_config(ctx: &Ctx<'_>, raw: &RawConfig, model: &ModelConfig) -> Result<Option<DataConfig>> {
    let dim = match model {
        ModelConfig::Quadratic(_) => {
            for (key, set) in [
                ("source", raw.source.is_some()),
                ("batch_size", raw.batch_size.is_some()),
                ("train_set_size", raw.train_set_size.is_some()),
            ] {
                if set {
                    return Err(ctx.err(key, "the quadratic model takes no data"));
                }
            }
            return Ok(None);
        }
        ModelConfig::GaussianLinear(s) => s.dim,
        ModelConfig::Compressor(s) => s.input_dim,
    };
    let variance = source_variance(raw);
    let kind = match raw.source.as_deref().unwrap_or("smooth_field") {
        "iid_gaussian" => SourceKind::IidGaussian { variance },
        "smooth_field" => SourceKind::SmoothField {
            variance,
            correlation_length: raw.correlation_length.unwrap_or(2.0),
        },
        "gaussian_mixture" => SourceKind::GaussianMixture {
            weights: ctx.required("mixture_weights", &raw.mixture_weights)?,
            means: ctx.required("mixture_means", &raw.mixture_means)?,
            stds: ctx.required("mixture_stds", &raw.mixture_stds)?,
        },
        other => {
            return Err(ctx.err(
                "source",
                format!("unknown source `{other}` (expected iid_gaussian, smooth_field or gaussian_mixture)"),
            ))
        }
    };
    let source = SourceSpec {
        kind,
        dim,
        seed: raw.data_seed.unwrap_or(0),
    };
    source.validate().map_err(|e| ctx.wrap("source", e))?;
    let batch_size = raw.batch_size.unwrap_or(crate::data::DEFAULT_BATCH_SIZE);
    if batch_size == 0 {
        return Err(ctx.err("batch_size", "must be >= 1"));
    }
    let train_set_size = raw
        .train_set_size
        .unwrap_or_else(|| default_train_set_size(batch_size, raw.total_steps.unwrap_or(DEFAULT_DATA_STEPS)));
    if train_set_size < batch_size {
        return Err(ctx.err("train_set_size", "must be >= batch_size"));
    }
    let eval_samples = raw.eval_samples.unwrap_or(2048);
    if eval_samples == 0 {
        return Err(ctx.err("eval_samples", "must be >= 1"));
    }
    Ok(Some(DataConfig {
        source,
        train_set_size,
        batch_size,
        eval_samples,
    }))
}

fn positive(ctx: &Ctx<'_>, key: &str, v: Option<f64>, default: f64) -> Result<f64> {
    let v = v.unwrap_or(default);
    if !(v > 0.0 && v.is_finite()) {
        return Err(ctx.err(key, format!("must be > 0, got {v}")));
    }
    Ok(v)
}

/// Builds a run configuration from a parsed file and an explicit method spec.
fn build(ctx: &Ctx<'_>, raw: &RawConfig, method: Method) -> Result<RunConfig> {
    let model = model_config(ctx, raw)?;
    let data = data_config(ctx, raw, &model)?;
    let is_compressor = matches!(model, ModelConfig::Compressor(_));

    let defaults = OptimizerConfig::default();
    let lr_decay_factor = raw.lr_decay_factor.unwrap_or(defaults.lr_decay_factor);
    if !(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0) {
        return Err(ctx.err("lr_decay_factor", format!("must be in (0, 1], got {lr_decay_factor}")));
    }
    let decay_epochs = raw
        .lr_decay_epochs
        .unwrap_or(if data.is_some() { 3 } else { 0 });
    let momentum = raw.multiplier_momentum.unwrap_or(defaults.multiplier_momentum);
    if !(0.0..1.0).contains(&momentum) {
        return Err(ctx.err("multiplier_momentum", format!("must be in [0, 1), got {momentum}")));
    }
    let optimizer = OptimizerConfig {
        lr: positive(ctx, "lr", raw.lr, defaults.lr)?,
        lr_prior: positive(ctx, "lr_prior", raw.lr_prior, defaults.lr_prior)?,
        lr_decay_factor,
        lr_decay_epochs: (decay_epochs > 0).then_some(decay_epochs),
        multiplier_lr: positive(ctx, "multiplier_lr", raw.multiplier_lr, defaults.multiplier_lr)?,
        multiplier_momentum: momentum,
        multiplier_clip: positive(ctx, "multiplier_clip", raw.multiplier_clip, defaults.multiplier_clip)?,
        decay_multiplier_lr: raw.decay_multiplier_lr.unwrap_or(false),
    };

    let warm_default = if is_compressor { 100 } else { 0 };
    let total_steps = raw.total_steps.unwrap_or(if data.is_some() {
        DEFAULT_DATA_STEPS
    } else {
        DEFAULT_ANALYTIC_STEPS
    });
    if total_steps == 0 {
        return Err(ctx.err("total_steps", "must be >= 1"));
    }
    let log_every = raw.eval_every.unwrap_or(10);
    if log_every == 0 {
        return Err(ctx.err("eval_every", "must be >= 1"));
    }
    // Analytic runs have no passes; their trailing window is one nominal epoch.
    let trailing_fraction = raw.trailing_fraction.unwrap_or(if data.is_some() {
        0.1
    } else {
        (ANALYTIC_EPOCH_STEPS as f64 / total_steps as f64).min(1.0)
    });
    if !(trailing_fraction > 0.0 && trailing_fraction <= 1.0) {
        return Err(ctx.err("trailing_fraction", "must be in (0, 1]"));
    }
    let config = RunConfig {
        method,
        model,
        data,
        optimizer,
        total_steps,
        log_every,
        seed: raw.seed.unwrap_or(0),
        warm_start_steps: raw.warm_start_steps.unwrap_or(warm_default),
        trailing_fraction,
        psnr_peak: positive(ctx, "psnr_peak", raw.psnr_peak, 1.0)?,
        achieved_tolerance: positive(ctx, "achieved_tolerance", raw.achieved_tolerance, 0.02)?,
    };
    config.validate().map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    Ok(config)
}

/// Parses a single-run file.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let raw = parse_raw(text)?;
    let ctx = Ctx { text };
    for key in SWEEP_KEYS {
        if line_of(text, key).is_some() {
            return Err(ctx.err(key, "sweep keys belong in a sweep file (use `sweep`)"));
        }
    }
    let kind = parse_method(&ctx, &raw)?;
    let method = method_spec(&ctx, &raw, kind)?;
    build(&ctx, &raw, method)
}

pub fn load_run_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_run_config(&text).map_err(|e| prefix(path, e))
}

fn prefix(path: &std::path::Path, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPoint {
    Target(f64),
    Beta(f64),
    Hinge { target: f64, lambda: f64 },
}

impl SweepPoint {
    pub fn label(&self) -> String {
        match self {
            SweepPoint::Target(c) => format!("{c}"),
            SweepPoint::Beta(b) => format!("{b}"),
            SweepPoint::Hinge { target, lambda } => format!("{target}@{lambda}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub method: MethodKind,
    pub points: Vec<SweepPoint>,
    raw: RawConfig,
    text: String,
}

fn check_values(ctx: &Ctx<'_>, key: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(ctx.err(key, "must list at least one value"));
    }
    for (i, v) in values.iter().enumerate() {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(ctx.err(key, format!("values must be > 0, got {v}")));
        }
        if values[..i].contains(v) {
            return Err(ctx.err(key, format!("duplicate value {v}")));
        }
    }
    Ok(())
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = parse_raw(text)?;
        let ctx = Ctx { text };
        let method = parse_method(&ctx, &raw)?;
        let points = match method {
            MethodKind::Dco | MethodKind::Beta => {
                ctx.forbid("sweep_targets", &raw.sweep_targets, "only used by hinge sweeps")?;
                ctx.forbid("sweep_lambdas", &raw.sweep_lambdas, "only used by hinge sweeps")?;
                let single = if method == MethodKind::Dco { "target" } else { "beta" };
                ctx.forbid(single, if method == MethodKind::Dco { &raw.target } else { &raw.beta }, "set by `sweep_values` in a sweep file")?;
                let values = ctx.required("sweep_values", &raw.sweep_values)?;
                check_values(&ctx, "sweep_values", &values)?;
                values
                    .into_iter()
                    .map(|v| if method == MethodKind::Dco { SweepPoint::Target(v) } else { SweepPoint::Beta(v) })
                    .collect()
            }
            MethodKind::Hinge => {
                ctx.forbid("sweep_values", &raw.sweep_values, "hinge sweeps use sweep_targets and sweep_lambdas")?;
                ctx.forbid("target", &raw.target, "set by `sweep_targets` in a sweep file")?;
                ctx.forbid("hinge_lambda", &raw.hinge_lambda, "set by `sweep_lambdas` in a sweep file")?;
                let targets = ctx.required("sweep_targets", &raw.sweep_targets)?;
                let lambdas = ctx.required("sweep_lambdas", &raw.sweep_lambdas)?;
                check_values(&ctx, "sweep_targets", &targets)?;
                check_values(&ctx, "sweep_lambdas", &lambdas)?;
                targets
                    .iter()
                    .flat_map(|&t| lambdas.iter().map(move |&l| SweepPoint::Hinge { target: t, lambda: l }))
                    .collect()
            }
        };
        let spec = Self {
            method,
            points,
            raw,
            text: text.to_string(),
        };
        for i in 0..spec.points.len() {
            spec.run_config(i)?;
        }
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| prefix(path, e))
    }

    /// Builds a sweep from an in-memory base file and explicit points.
    pub fn from_parts(base: &str, method: MethodKind, points: Vec<SweepPoint>) -> Result<Self> {
        let raw = parse_raw(base)?;
        let spec = Self {
            method,
            points,
            raw,
            text: base.to_string(),
        };
        for i in 0..spec.points.len() {
            spec.run_config(i)?;
        }
        Ok(spec)
    }

    pub fn run_config(&self, index: usize) -> Result<RunConfig> {
        let ctx = Ctx { text: &self.text };
        let method = match self.points[index] {
            SweepPoint::Target(c) => dco_spec(&ctx, &self.raw, c)?,
            SweepPoint::Beta(b) => beta_spec(&ctx, b)?,
            SweepPoint::Hinge { target, lambda } => hinge_spec(&ctx, target, lambda)?,
        };
        build(&ctx, &self.raw, method)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.raw.seed = Some(seed);
    }
}
