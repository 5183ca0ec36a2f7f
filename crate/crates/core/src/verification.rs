//! Executable checks binding the stated properties to the implementation.
//!
//! Each suite returns [`CheckResult`]s named `<invariant>/<detail>`. The
//! invariant ids are listed in [`SUITES`]; every id belongs to exactly one
//! suite.

use std::f64::consts::LN_2;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use crate::config::{SweepPoint, SweepSpec};
use crate::error::{Error, Result};
use crate::experiment::{compare_sweeps, run_sweep, sweep_to_dir, ComparisonReport, SweepOutput, SweepResult};
use crate::loss::{BetaSpec, ConstraintSpec};
use crate::math::{mix_seed, Matrix, RealVec, SeededRng};
use crate::models::{
    compressor_forward, grad_check_all, BatchLosses, Compressor, CompressorSpec, GaussianLinear,
    GaussianLinearSpec, ObjectiveModel, ParamLayout, ParamVector, Quadratic, QuadraticRDSpec,
};
use crate::multiplier::MultiplierState;
use crate::optim::{Adam, LrSchedule};
use crate::oracles::{
    brute_force_min, frontier_dd_dr, frontier_slope_lambda, kkt_stationarity_residual,
    shannon_rd_gaussian, solve_quadratic_kkt, GridProblem,
};
use crate::trainer::{
    run, Method, MethodKind, ModelConfig, OptimizerConfig, RunConfig, RunRecord, ANALYTIC_EPOCH_STEPS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub details: String,
}

impl CheckResult {
    /// A reporting row: always passes, carries a value for the record.
    pub fn report(name: impl Into<String>, measured: f64, details: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: true,
            measured,
            tolerance: f64::INFINITY,
            details: details.into(),
        }
    }

    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64, details: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
            details: details.into(),
        }
    }

    /// The invariant id, i.e. the name up to the first `/`.
    pub fn invariant(&self) -> &str {
        self.name.split('/').next().unwrap_or(&self.name)
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: measured {:.3e} (tolerance {:.1e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            if self.details.is_empty() {
                String::new()
            } else {
                format!(" {}", self.details)
            }
        )
    }
}

pub struct Suite {
    pub name: &'static str,
    pub invariants: &'static [&'static str],
}

pub const SUITES: &[Suite] = &[
    Suite {
        name: "optimizer_units",
        invariants: &[
            "multiplier.init_at_clip",
            "multiplier.clip_bound",
            "multiplier.ema_closed_form",
            "multiplier.zero_gap_fixed_point",
            "multiplier.step_response",
            "multiplier.ascent_sign",
            "optim.adam_first_step",
            "optim.schedule_monotone",
        ],
    },
    Suite {
        name: "gradients",
        invariants: &["gradient.smooth_segments", "gradient.ste_fixture"],
    },
    Suite {
        name: "oracles",
        invariants: &[
            "oracle.kkt_conditions",
            "oracle.hand_example",
            "oracle.grid_agreement",
            "oracle.frontier_slope",
            "oracle.shannon",
        ],
    },
    Suite {
        name: "kkt_convergence",
        invariants: &[
            "trainer.kkt_convergence",
            "trainer.inactive_constraint",
            "trainer.infeasible_clip",
            "trainer.lambda_bounded",
            "trainer.determinism",
            "slope.dco_lambda",
            "slope.beta",
        ],
    },
    Suite {
        name: "method_comparison",
        invariants: &[
            "comparison.constraint_satisfaction",
            "comparison.infeasible_collapse",
            "comparison.hinge_gaps",
            "comparison.rate_parity",
            "comparison.shannon_bound",
            "comparison.model_selection",
            "comparison.sweep_runtime",
        ],
    },
];

#[derive(Debug, Clone, Default)]
pub struct CheckOptions {
    pub seed: u64,
    /// Model whose distortion gradient is perturbed before checking.
    pub corrupt_gradient: Option<String>,
}

/// The suites run by `dco check`: everything except the compressor sweeps.
pub fn run_checks(options: &CheckOptions) -> Result<Vec<CheckResult>> {
    let seed = options.seed;
    let ((units, grads), (oracles, kkt)) = rayon::join(
        || {
            rayon::join(
                || suite_optimizer_units(seed),
                || suite_gradients(seed, options.corrupt_gradient.as_deref()),
            )
        },
        || rayon::join(|| suite_oracles(seed), || suite_kkt_convergence(seed)),
    );
    let mut out = units;
    out.extend(grads?);
    out.extend(oracles?);
    out.extend(kkt?);
    Ok(out)
}

pub const RESULTS_CSV_HEADER: &str = "name,passed,measured,tolerance,details";

pub fn results_csv(results: &[CheckResult]) -> String {
    let mut s = format!("{RESULTS_CSV_HEADER}\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{:e},{:e},\"{}\"\n",
            r.name,
            r.passed,
            r.measured,
            r.tolerance,
            r.details.replace('"', "'")
        ));
    }
    s
}

pub fn write_results_csv(path: &Path, results: &[CheckResult]) -> Result<()> {
    std::fs::write(path, results_csv(results)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Multiplier and optimizer mechanics.
pub fn suite_optimizer_units(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = SeededRng::new(mix_seed(seed, 100));
    let base = MultiplierState::default();
    let (clip, alpha, lr) = (base.clip(), base.momentum(), base.lr());

    out.push(CheckResult::at_most(
        "multiplier.init_at_clip",
        (base.lambda() - clip).abs() + base.momentum_buffer().abs(),
        0.0,
        format!("lambda_0 = {}", base.lambda()),
    ));

    // 10^6 random gap sequences from random starting points.
    let mut violations = 0u64;
    let mut max_lambda: f64 = 0.0;
    let mut min_lambda = f64::INFINITY;
    for _ in 0..1_000_000 {
        let mut m = base.clone().with_mu(rng.uniform_range(-10.0, clip.ln() + 1.0));
        for _ in 0..8 {
            let g = rng.uniform_range(-20.0, 20.0);
            m.update(g).expect("finite gap");
            let l = m.lambda();
            max_lambda = max_lambda.max(l);
            min_lambda = min_lambda.min(l);
            if !(l > 0.0 && l <= clip) {
                violations += 1;
            }
        }
    }
    out.push(CheckResult::at_most(
        "multiplier.clip_bound",
        violations as f64,
        0.0,
        format!("lambda range [{min_lambda:.3e}, {max_lambda}] over 1e6 sequences"),
    ));

    let mut worst: f64 = 0.0;
    for g in [-1.0, -0.37, 0.05, 0.8, 3.0] {
        let mut m = MultiplierState::new(1e12, alpha, 1e-9)
            .expect("valid settings")
            .with_mu(0.0);
        for t in 1..=2000 {
            m.update(g).expect("finite gap");
            worst = worst.max((m.momentum_buffer() - g * (1.0 - alpha.powi(t))).abs());
        }
    }
    out.push(CheckResult::at_most(
        "multiplier.ema_closed_form",
        worst,
        1e-12,
        "buffer vs g(1 - alpha^t), t <= 2000",
    ));

    let mut drift: f64 = 0.0;
    for mu0 in [-3.0, 0.0, 1.5, clip.ln()] {
        let mut m = base.clone().with_mu(mu0);
        for _ in 0..10_000 {
            m.update(0.0).expect("finite gap");
        }
        drift = drift.max((m.mu() - mu0).abs());
    }
    out.push(CheckResult::at_most(
        "multiplier.zero_gap_fixed_point",
        drift,
        0.0,
        "mu after 1e4 zero-gap steps",
    ));

    // Single-step response to a gap spike relative to lr (1 - alpha) |gap|.
    let mut ratio: f64 = 0.0;
    let mut sign_violations = 0u64;
    for _ in 0..100_000 {
        let mut m = base.clone().with_mu(rng.uniform_range(-5.0, clip.ln() - 0.5));
        for _ in 0..rng.index(20) {
            m.update(rng.uniform_range(-1.0, 1.0)).expect("finite gap");
        }
        let spike = rng.uniform_range(1.0, 100.0) * if rng.index(2) == 0 { 1.0 } else { -1.0 };
        let (mut a, mut b) = (m.clone(), m.clone());
        a.update(0.0).expect("finite gap");
        b.update(spike).expect("finite gap");
        let bound = lr * (1.0 - alpha) * spike.abs();
        ratio = ratio.max((b.mu() - a.mu()).abs() / bound);

        let mut fresh = base.clone().with_mu(m.mu());
        let before = fresh.mu();
        fresh.update(spike).expect("finite gap");
        let moved = fresh.mu() - before;
        if (spike > 0.0 && moved < 0.0) || (spike < 0.0 && moved > 0.0) {
            sign_violations += 1;
        }
    }
    out.push(CheckResult::at_most(
        "multiplier.step_response",
        ratio,
        1.0 + 1e-9,
        "max |delta mu| / (lr (1 - alpha) |gap|)",
    ));
    out.push(CheckResult::at_most(
        "multiplier.ascent_sign",
        sign_violations as f64,
        0.0,
        "steps from an empty buffer moving mu against the gap sign",
    ));

    let layout = ParamLayout::new([("all", 3)]).expect("layout");
    let mut p = ParamVector::new(RealVec::zeros(3), layout).expect("params");
    let mut adam = Adam::new(2e-3, 3).expect("adam");
    adam.step(&mut p, &[4.0, -0.5, 1e3], 1.0).expect("finite gradient");
    let dev = p
        .as_slice()
        .iter()
        .zip([-1.0, 1.0, -1.0])
        .map(|(v, s)| (v - s * 2e-3).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(
        "optim.adam_first_step",
        dev,
        1e-8,
        "first Adam step equals -lr sign(g)",
    ));

    let sched = LrSchedule::step_decay(0.1, 300).expect("schedule");
    let mut increases = 0;
    for t in 1..3000 {
        if sched.factor(t) > sched.factor(t - 1) {
            increases += 1;
        }
    }
    let exact = (sched.lr(2e-3, 900) - 2e-6).abs() / 2e-6;
    out.push(CheckResult::at_most(
        "optim.schedule_monotone",
        increases as f64 + exact,
        1e-12,
        "step decay never increases; lr(3 periods) = base 1e-3",
    ));
    out
}

/// Distortion-gradient perturbation used by the negative test of `dco check`.
struct Corrupted {
    inner: Box<dyn ObjectiveModel>,
}

impl ObjectiveModel for Corrupted {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn layout(&self) -> &ParamLayout {
        self.inner.layout()
    }
    fn input_dim(&self) -> Option<usize> {
        self.inner.input_dim()
    }
    fn init_params(&self, rng: &mut SeededRng, calibration: &Matrix) -> Result<ParamVector> {
        self.inner.init_params(rng, calibration)
    }
    fn evaluate(&self, params: &ParamVector, batch: &Matrix) -> Result<BatchLosses> {
        let mut l = self.inner.evaluate(params, batch)?;
        l.grad_distortion.update(|g| {
            for v in g.iter_mut() {
                *v = 1.05 * *v + 1e-3;
            }
        })?;
        Ok(l)
    }
    fn smooth_segments(&self) -> Vec<String> {
        self.inner.smooth_segments()
    }
    fn sample_check_point(&self, rng: &mut SeededRng) -> Result<(ParamVector, Matrix)> {
        self.inner.sample_check_point(rng)
    }
}

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const STE_TOLERANCE: f64 = 1e-10;

pub fn check_models() -> Result<Vec<Box<dyn ObjectiveModel>>> {
    Ok(vec![
        Box::new(Quadratic::new(QuadraticRDSpec::new(
            vec![0.5, -1.0, 2.0],
            vec![1.0, 0.3, 2.0],
            vec![-1.0, 1.5, 0.0],
            vec![0.7, 1.2, 0.4],
        )?)?),
        Box::new(GaussianLinear::new(GaussianLinearSpec {
            dim: 4,
            variance: 1.0,
        })?),
        Box::new(Compressor::new(CompressorSpec::default())?),
    ])
}

/// Finite-difference checks on every smooth segment plus the STE fixture.
pub fn suite_gradients(seed: u64, corrupt: Option<&str>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let models = check_models()?;
    if let Some(name) = corrupt {
        if !models.iter().any(|m| m.name() == name) {
            return Err(Error::invalid("corrupt_gradient", format!("unknown model `{name}`")));
        }
    }
    for (i, model) in models.into_iter().enumerate() {
        let model: Box<dyn ObjectiveModel> = if corrupt == Some(model.name()) {
            Box::new(Corrupted { inner: model })
        } else {
            model
        };
        let mut rng = SeededRng::new(mix_seed(seed, 200 + i as u64));
        let report = grad_check_all(model.as_ref(), &mut rng)?;
        for e in &report.entries {
            out.push(CheckResult::at_most(
                format!("gradient.smooth_segments/{}/{}/{}", report.model, e.segment, e.component),
                e.max_rel_err,
                GRADIENT_TOLERANCE,
                format!("max relative error over {} trials", report.trials),
            ));
        }
    }
    out.push(ste_fixture_check()?);
    Ok(out)
}

/// Hand-derived gradients of the 1-dim, K = 2 compressor against the
/// implementation. The backward relaxation is `q = Σ s_k c_k` with
/// `s = softmax(-τ (z - c)²)`; forward values use the hard assignment.
pub fn ste_fixture_check() -> Result<CheckResult> {
    let tau = 1.5;
    let model = Compressor::new(CompressorSpec {
        input_dim: 1,
        latent_dim: 1,
        hidden_dim: 1,
        codebook_size: 2,
        ste_temperature: tau,
    })?;
    let (w1, b1, w2, b2) = (0.8, 0.1, 1.3, -0.2);
    let (c0, c1) = (-0.5_f64, 0.6_f64);
    let (v1, d1, v2, d2) = (0.9, -0.1, 1.1, 0.05);
    let (l0, l1) = (0.3_f64, -0.4_f64);
    let x = 0.7_f64;
    let values = vec![w1, b1, w2, b2, c0, c1, v1, d1, v2, d2, l0, l1];
    let params = ParamVector::new(RealVec::new(values)?, model.layout().clone())?;
    let got = compressor_forward(&model, &params, &Matrix::new(1, 1, vec![x])?)?;

    let hh = (w1 * x + b1).tanh();
    let z = w2 * hh + b2;
    let q = if (z - c1).abs() < (z - c0).abs() { c1 } else { c0 };
    let pick1 = q == c1;
    let g = (v1 * q + d1).tanh();
    let xhat = v2 * g + d2;
    let lse = (l0.exp() + l1.exp()).ln();
    let (lp0, lp1) = (l0 - lse, l1 - lse);

    let u0 = -tau * (z - c0).powi(2);
    let u1 = -tau * (z - c1).powi(2);
    let s0 = 1.0 / (1.0 + (u1 - u0).exp());
    let s1 = 1.0 - s0;
    let j = s0 * s1;
    let ds0_dz = j * (-2.0 * tau * (z - c0) + 2.0 * tau * (z - c1));
    let ds0_dc0 = j * 2.0 * tau * (z - c0);
    let ds0_dc1 = -j * 2.0 * tau * (z - c1);

    let dd_dxhat = 2.0 * (xhat - x);
    let dd_da2 = dd_dxhat * v2 * (1.0 - g * g);
    let dd_dq = dd_da2 * v1;
    let dq_dz = (c0 - c1) * ds0_dz;
    let dq_dc0 = s0 + (c0 - c1) * ds0_dc0;
    let dq_dc1 = s1 + (c0 - c1) * ds0_dc1;
    let dd_dz = dd_dq * dq_dz;
    let dd_da1 = dd_dz * w2 * (1.0 - hh * hh);
    let expect_dist = [
        dd_da1 * x,
        dd_da1,
        dd_dz * hh,
        dd_dz,
        dd_dq * dq_dc0,
        dd_dq * dq_dc1,
        dd_da2 * q,
        dd_da2,
        dd_dxhat * g,
        dd_dxhat,
        0.0,
        0.0,
    ];

    let dr_ds0 = (lp1 - lp0) / LN_2;
    let dr_dz = dr_ds0 * ds0_dz;
    let dr_da1 = dr_dz * w2 * (1.0 - hh * hh);
    let (p0, p1) = (lp0.exp(), lp1.exp());
    let (o0, o1) = if pick1 { (0.0, 1.0) } else { (1.0, 0.0) };
    let expect_rate = [
        dr_da1 * x,
        dr_da1,
        dr_dz * hh,
        dr_dz,
        dr_ds0 * ds0_dc0,
        dr_ds0 * ds0_dc1,
        0.0,
        0.0,
        0.0,
        0.0,
        (p0 - o0) / LN_2,
        (p1 - o1) / LN_2,
    ];
    let rate = -(if pick1 { lp1 } else { lp0 }) / LN_2;
    let dist = (xhat - x).powi(2);

    let mut worst = (got.rate - rate).abs().max((got.distortion - dist).abs());
    for (a, e) in got.grad_distortion.iter().zip(&expect_dist) {
        worst = worst.max((a - e).abs());
    }
    for (a, e) in got.grad_rate.iter().zip(&expect_rate) {
        worst = worst.max((a - e).abs());
    }
    Ok(CheckResult::at_most(
        "gradient.ste_fixture",
        worst,
        STE_TOLERANCE,
        "1-dim K=2 fixture, max abs deviation of losses and gradients",
    ))
}

pub fn random_quadratic(rng: &mut SeededRng, dim: usize) -> Result<QuadraticRDSpec> {
    let mut v = |lo: f64, hi: f64| (0..dim).map(|_| rng.uniform_range(lo, hi)).collect::<Vec<_>>();
    let r = v(-2.0, 2.0);
    let a = v(0.5, 2.0);
    let d = v(-2.0, 2.0);
    let b = v(0.5, 2.0);
    QuadraticRDSpec::new(r, a, d, b)
}

fn rate_minimizer_distortion(spec: &QuadraticRDSpec) -> f64 {
    spec.distortion(&spec.rate_center)
}

/// KKT solver self-consistency, grid agreement and the Gaussian bound.
pub fn suite_oracles(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = SeededRng::new(mix_seed(seed, 300));

    let (mut stat, mut slack, mut feas) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let dim = 1 + rng.index(5);
        let spec = random_quadratic(&mut rng, dim)?;
        let c = rate_minimizer_distortion(&spec) * rng.uniform_range(0.05, 1.2);
        let s = solve_quadratic_kkt(&spec, c)?;
        stat = stat.max(kkt_stationarity_residual(&spec, &s, c));
        slack = slack.max((s.lambda * (s.distortion / c - 1.0)).abs());
        feas = feas.max(s.distortion - c);
    }
    out.push(CheckResult::at_most("oracle.kkt_conditions/stationarity", stat, 1e-10, "200 random specs"));
    out.push(CheckResult::at_most("oracle.kkt_conditions/slackness", slack, 1e-10, "200 random specs"));
    out.push(CheckResult::at_most("oracle.kkt_conditions/feasibility", feas.max(0.0), 1e-12, "max D - c_D"));

    let hand = QuadraticRDSpec::new(vec![0.0], vec![1.0], vec![2.0], vec![1.0])?;
    let s = solve_quadratic_kkt(&hand, 1.0)?;
    let inactive = solve_quadratic_kkt(&hand, 5.0)?;
    let boundary = solve_quadratic_kkt(&hand, 0.0)?;
    let dev = [
        (s.theta[0] - 1.0).abs(),
        (s.rate - 1.0).abs(),
        (s.distortion - 1.0).abs(),
        (s.lambda - 1.0).abs(),
        inactive.lambda,
        inactive.theta[0].abs(),
        (boundary.theta[0] - 2.0).abs(),
        (boundary.rate - 4.0).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    out.push(CheckResult::at_most(
        "oracle.hand_example",
        dev,
        1e-10,
        "theta*=1, lambda*=1; inactive at c=5; boundary at c=0",
    ));

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let dim = 1 + rng.index(2);
        let spec = random_quadratic(&mut rng, dim)?;
        let c = rate_minimizer_distortion(&spec) * rng.uniform_range(0.05, 0.95);
        let exact = solve_quadratic_kkt(&spec, c)?;
        let grid = brute_force_min(&GridProblem::from_quadratic(&spec), c, 1e-3)?;
        worst = worst.max((grid.rate - exact.rate).abs() / exact.rate.max(1e-12));
    }
    out.push(CheckResult::at_most(
        "oracle.grid_agreement",
        worst,
        1e-3,
        "relative R* difference, 50 random specs at grid resolution 1e-3",
    ));

    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let spec = random_quadratic(&mut rng, 2)?;
        let c = rate_minimizer_distortion(&spec) * rng.uniform_range(0.2, 0.8);
        let exact = solve_quadratic_kkt(&spec, c)?;
        let est = frontier_slope_lambda(&GridProblem::from_quadratic(&spec), c, 1e-2, 1e-6)?;
        worst = worst.max((est - exact.lambda).abs() / exact.lambda);
    }
    out.push(CheckResult::at_most(
        "oracle.frontier_slope",
        worst,
        0.05,
        "grid frontier slope vs KKT multiplier, 10 specs",
    ));

    let dev = [
        shannon_rd_gaussian(1.0, 1.0)?,
        (shannon_rd_gaussian(1.0, 0.25)? - 1.0).abs(),
        shannon_rd_gaussian(1.0, 2.0)?,
        if shannon_rd_gaussian(1.0, 0.0).is_err() { 0.0 } else { 1.0 },
    ]
    .into_iter()
    .fold(0.0, f64::max);
    out.push(CheckResult::at_most("oracle.shannon", dev, 1e-15, "closed-form examples"));
    Ok(out)
}

pub const KKT_STEPS: u64 = 20_000;
/// Weakly active targets take longer for λ to descend from the clip.
pub const SLOPE_STEPS: u64 = 40_000;

pub fn quadratic_run(method: Method, spec: QuadraticRDSpec, steps: u64, seed: u64) -> RunConfig {
    RunConfig {
        method,
        model: ModelConfig::Quadratic(spec),
        data: None,
        optimizer: OptimizerConfig {
            lr_decay_epochs: None,
            ..OptimizerConfig::default()
        },
        total_steps: steps,
        log_every: 10,
        seed,
        warm_start_steps: 0,
        trailing_fraction: ANALYTIC_EPOCH_STEPS as f64 / steps as f64,
        psnr_peak: 1.0,
        achieved_tolerance: 0.02,
    }
}

/// D-CO training on quadratics against the KKT oracle, plus the frontier slope
/// identities.
pub fn suite_kkt_convergence(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = SeededRng::new(mix_seed(seed, 400));

    let mut problems = vec![(
        QuadraticRDSpec::new(vec![0.0], vec![1.0], vec![2.0], vec![1.0])?,
        1.0,
    )];
    while problems.len() < 10 {
        let dim = 1 + rng.index(4);
        let spec = random_quadratic(&mut rng, dim)?;
        let c = rate_minimizer_distortion(&spec) * rng.uniform_range(0.2, 0.8);
        problems.push((spec, c));
    }
    let mut lambda_out_of_range = 0usize;
    for (i, (spec, c)) in problems.iter().enumerate() {
        let oracle = solve_quadratic_kkt(spec, *c)?;
        let cfg = quadratic_run(Method::Dco(ConstraintSpec::new(*c)?), spec.clone(), KKT_STEPS, seed);
        let rec = run(&cfg)?;
        let f = rec.final_summary;
        lambda_out_of_range += rec
            .series
            .iter()
            .filter(|p| !(p.weight > 0.0 && p.weight <= 1e3))
            .count();
        let detail = format!("dim {} c_D {c:.4}", spec.dim());
        out.push(CheckResult::at_most(
            format!("trainer.kkt_convergence/{i}/gap"),
            (f.distortion / c - 1.0).abs(),
            0.02,
            detail.clone(),
        ));
        out.push(CheckResult::at_most(
            format!("trainer.kkt_convergence/{i}/rate"),
            (f.rate - oracle.rate).abs() / oracle.rate,
            0.02,
            format!("{detail} R {:.5} vs R* {:.5}", f.rate, oracle.rate),
        ));
        out.push(CheckResult::at_most(
            format!("trainer.kkt_convergence/{i}/lambda"),
            (f.weight - oracle.lambda).abs() / oracle.lambda,
            0.05,
            format!("{detail} lambda {:.5} vs lambda* {:.5}", f.weight, oracle.lambda),
        ));
    }
    out.push(CheckResult::at_most(
        "trainer.lambda_bounded",
        lambda_out_of_range as f64,
        0.0,
        "logged multipliers outside (0, 1e3]",
    ));

    // Inactive constraint: the rate minimizer already satisfies c_D.
    let spec = QuadraticRDSpec::new(vec![0.0], vec![1.0], vec![2.0], vec![1.0])?;
    let rec = run(&quadratic_run(Method::Dco(ConstraintSpec::new(5.0)?), spec.clone(), KKT_STEPS, seed))?;
    out.push(CheckResult::at_most(
        "trainer.inactive_constraint/lambda",
        rec.final_summary.weight,
        1e-2,
        "lambda decays towards 0",
    ));
    out.push(CheckResult::at_most(
        "trainer.inactive_constraint/rate",
        rec.final_summary.rate,
        1e-3,
        "theta reaches the rate minimizer",
    ));

    // Infeasible target below the distortion floor.
    let floored = spec.clone().with_floor(0.5)?;
    let rec = run(&quadratic_run(Method::Dco(ConstraintSpec::new(0.25)?), floored, 5_000, seed))?;
    let pinned = rec.flags.multiplier_at_clip && rec.final_summary.weight == 1e3 && rec.flags.target_achieved == Some(false);
    out.push(CheckResult::at_most(
        "trainer.infeasible_clip",
        if pinned { 0.0 } else { 1.0 },
        0.0,
        format!("lambda_final {} at_clip {}", rec.final_summary.weight, rec.flags.multiplier_at_clip),
    ));

    let cfg = quadratic_run(Method::Dco(ConstraintSpec::new(1.0)?), spec.clone(), 2_000, seed);
    let (a, b) = (run(&cfg)?, run(&cfg)?);
    out.push(CheckResult::at_most(
        "trainer.determinism",
        if a.run_csv() == b.run_csv() && a == b { 0.0 } else { 1.0 },
        0.0,
        "identical configs give identical records",
    ));

    out.extend(slope_checks(seed)?);
    Ok(out)
}

/// Converged D-CO multipliers against the grid frontier slope, and converged
/// β optima against `dD/dR = -β`.
pub fn slope_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let spec = QuadraticRDSpec::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, -1.0], vec![1.0, 0.5])?;
    let d0 = rate_minimizer_distortion(&spec);
    let problem = GridProblem::from_quadratic(&spec);
    for frac in [0.3, 0.5, 0.7] {
        let c = d0 * frac;
        let rec = run(&quadratic_run(Method::Dco(ConstraintSpec::new(c)?), spec.clone(), SLOPE_STEPS, seed))?;
        let slope_lambda = frontier_slope_lambda(&problem, c, 1e-2, 1e-6)?;
        out.push(CheckResult::at_most(
            format!("slope.dco_lambda/c={c:.4}"),
            (rec.final_summary.weight - slope_lambda).abs() / slope_lambda,
            0.05,
            format!("lambda {:.5} vs -c dR/dD {:.5}", rec.final_summary.weight, slope_lambda),
        ));
    }
    for beta in [0.3, 1.0, 3.0] {
        let rec = run(&quadratic_run(Method::Beta(BetaSpec::new(beta)?), spec.clone(), KKT_STEPS, seed))?;
        let slope = frontier_dd_dr(&spec, rec.final_summary.distortion, 1e-3)?;
        out.push(CheckResult::at_most(
            format!("slope.beta/beta={beta}"),
            (slope + beta).abs() / beta,
            0.05,
            format!("dD/dR {slope:.5} at trained D {:.5}", rec.final_summary.distortion),
        ));
    }
    Ok(out)
}

/// Targets at least this multiple of a model's floor count as feasible.
pub const FEASIBLE_MARGIN: f64 = 1.25;
/// Targets below this multiple of a model's floor count as infeasible.
pub const INFEASIBLE_MARGIN: f64 = 0.9;
/// β used to approximate distortion-only training when probing floors.
pub const FLOOR_PROBE_BETA: f64 = 1e-6;
/// Per-sweep wall-clock budget on one core, in seconds.
pub const SWEEP_BUDGET_SECS: f64 = 900.0;
pub const SHANNON_SLACK: f64 = 0.05;

/// Steps per compressor run in the full comparison. Longer runs keep the
/// initial learning rate for longer; past ~75k steps at 2e-3 with a small
/// multiplier, whole latents collapse onto one symbol and never recover.
pub const COMPARISON_STEPS: u64 = 100_000;

/// Settings for the compressor comparison suite.
#[derive(Debug, Clone)]
pub struct ComparisonPlan {
    pub total_steps: u64,
    pub seed: u64,
    pub jobs: usize,
    /// Extra config lines appended to every run (model or data overrides).
    pub extra: String,
    pub target_count: usize,
    /// Lowest target as a multiple of the full-capacity floor.
    pub low_factor: f64,
    /// Highest target as a multiple of the half-capacity floor.
    pub high_factor: f64,
    /// Infeasible full-capacity targets as multiples of its floor.
    pub infeasible_factors: Vec<f64>,
    pub betas: Vec<f64>,
    pub hinge_lambdas: Vec<f64>,
    /// Hinge targets as indices into the D-CO target list.
    pub hinge_targets: Vec<usize>,
    pub gaussian_targets: Vec<f64>,
    pub gaussian_betas: Vec<f64>,
    /// Write every sweep's CSVs and plots below this directory.
    pub out_dir: Option<std::path::PathBuf>,
}

impl Default for ComparisonPlan {
    fn default() -> Self {
        Self {
            total_steps: COMPARISON_STEPS,
            seed: 0,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            extra: String::new(),
            target_count: 7,
            low_factor: 1.5,
            high_factor: 2.0,
            infeasible_factors: vec![0.4, 0.7],
            betas: vec![0.1, 0.3, 1.0, 3.0],
            hinge_lambdas: vec![0.1, 1.0, 10.0],
            hinge_targets: vec![2, 4],
            gaussian_targets: vec![0.7, 0.9],
            gaussian_betas: vec![0.1, 1.0],
            out_dir: None,
        }
    }
}

impl ComparisonPlan {
    /// A scaled-down plan that exercises every check in seconds. Its results
    /// are not expected to pass.
    pub fn smoke() -> Self {
        Self {
            total_steps: 600,
            extra: "hidden_dim = 8\ntrain_set_size = 4096\neval_samples = 256\n".into(),
            target_count: 4,
            betas: vec![0.3, 3.0],
            hinge_lambdas: vec![1.0],
            hinge_targets: vec![1],
            gaussian_targets: vec![0.9],
            gaussian_betas: vec![1.0],
            jobs: 1,
            ..Self::default()
        }
    }

    fn base(&self, overrides: &str) -> String {
        format!(
            "total_steps = {}\nseed = {}\n{}{}",
            self.total_steps, self.seed, self.extra, overrides
        )
    }
}

/// Everything the comparison suite measured, for reporting.
#[derive(Debug, Clone)]
pub struct ComparisonOutcome {
    pub checks: Vec<CheckResult>,
    pub floor_full: f64,
    pub floor_half: f64,
    pub targets: Vec<f64>,
    pub sweeps: Vec<(String, SweepResult, f64)>,
    pub model_selection: ComparisonReport,
    pub beta_selection: ComparisonReport,
}

impl ComparisonOutcome {
    pub fn sweep(&self, name: &str) -> Option<&SweepResult> {
        self.sweeps.iter().find(|(n, ..)| n == name).map(|(_, s, _)| s)
    }
}

struct Runner<'a> {
    plan: &'a ComparisonPlan,
    sweeps: Vec<(String, SweepResult, f64)>,
}

impl Runner<'_> {
    fn sweep(&mut self, name: &str, overrides: &str, method: MethodKind, points: Vec<SweepPoint>) -> Result<SweepResult> {
        let spec = SweepSpec::from_parts(&self.plan.base(overrides), method, points)?;
        let start = Instant::now();
        let result = match &self.plan.out_dir {
            Some(dir) => sweep_to_dir(&spec, &dir.join(name), self.plan.jobs, true)?,
            None => run_sweep(&spec, self.plan.jobs)?,
        };
        self.sweeps
            .push((name.to_string(), result.clone(), start.elapsed().as_secs_f64()));
        Ok(result)
    }
}

fn gap(r: &RunRecord) -> f64 {
    r.target.map_or(f64::NAN, |c| r.final_summary.distortion / c - 1.0)
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo
}

/// Exponentially spaced targets from `low` to `high` inclusive.
pub fn geometric_targets(low: f64, high: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![low];
    }
    let ratio = (high / low).powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| low * ratio.powi(k as i32)).collect()
}

/// Full and half-capacity toy compressors under D-CO, β and hinge training.
pub fn suite_method_comparison(plan: &ComparisonPlan) -> Result<ComparisonOutcome> {
    let mut runner = Runner {
        plan,
        sweeps: Vec::new(),
    };
    let mut checks = Vec::new();
    let half = "half_capacity = true\n";
    let clip = OptimizerConfig::default().multiplier_clip;

    let probe = vec![SweepPoint::Beta(FLOOR_PROBE_BETA)];
    let floor_full = runner.sweep("floor_full", "", MethodKind::Beta, probe.clone())?.records[0]
        .final_summary
        .distortion;
    let floor_half = runner.sweep("floor_half", half, MethodKind::Beta, probe)?.records[0]
        .final_summary
        .distortion;

    let targets = geometric_targets(
        plan.low_factor * floor_full,
        plan.high_factor * floor_half,
        plan.target_count,
    );
    let points = |ts: &[f64]| ts.iter().map(|&c| SweepPoint::Target(c)).collect::<Vec<_>>();
    let full = runner.sweep("dco_full", "", MethodKind::Dco, points(&targets))?;
    let half_dco = runner.sweep("dco_half", half, MethodKind::Dco, points(&targets))?;

    // Constraint satisfaction on every feasible full-capacity target.
    let feasible = |c: f64, floor: f64| c >= FEASIBLE_MARGIN * floor;
    let mut n_feasible = 0;
    for r in &full.records {
        let c = r.sweep_value;
        if feasible(c, floor_full) {
            n_feasible += 1;
            checks.push(CheckResult::at_most(
                format!("comparison.constraint_satisfaction/full/c={c:.4}"),
                gap(r).abs(),
                0.02,
                format!("D {:.5} lambda {:.4}", r.final_summary.distortion, r.final_summary.weight),
            ));
        }
    }
    checks.push(CheckResult::at_most(
        "comparison.constraint_satisfaction/count",
        6.0 - n_feasible as f64,
        0.0,
        format!("{n_feasible} feasible targets (>= {FEASIBLE_MARGIN} x floor {floor_full:.5})"),
    ));

    // Targets below the floor: λ pinned at the clip, runs collapse together.
    let infeasible_targets: Vec<f64> = plan.infeasible_factors.iter().map(|f| f * floor_full).collect();
    let below_full = runner.sweep("dco_full_infeasible", "", MethodKind::Dco, points(&infeasible_targets))?;
    let half_below: Vec<&RunRecord> = half_dco
        .records
        .iter()
        .filter(|r| r.sweep_value < INFEASIBLE_MARGIN * floor_half)
        .collect();
    for (model, runs) in [("full", below_full.records.iter().collect::<Vec<_>>()), ("half", half_below)] {
        for r in &runs {
            let pinned = r.final_summary.weight == clip && r.flags.target_achieved == Some(false);
            checks.push(CheckResult::at_most(
                format!("comparison.infeasible_collapse/{model}/c={:.4}", r.sweep_value),
                if pinned { 0.0 } else { 1.0 },
                0.0,
                format!(
                    "lambda_final {} achieved {:?} D {:.5}",
                    r.final_summary.weight, r.flags.target_achieved, r.final_summary.distortion
                ),
            ));
        }
        if runs.len() >= 2 {
            let ds: Vec<f64> = runs.iter().map(|r| r.final_summary.distortion).collect();
            checks.push(CheckResult::at_most(
                format!("comparison.infeasible_collapse/{model}/spread"),
                spread(&ds),
                0.05,
                format!("{} runs, relative D spread", runs.len()),
            ));
        }
    }

    // Hinge runs are reported, not asserted.
    let hinge_points: Vec<SweepPoint> = plan
        .hinge_targets
        .iter()
        .filter_map(|&i| targets.get(i))
        .flat_map(|&t| plan.hinge_lambdas.iter().map(move |&l| SweepPoint::Hinge { target: t, lambda: l }))
        .collect();
    let hinge = runner.sweep("hinge_full", "", MethodKind::Hinge, hinge_points)?;
    for (p, r) in hinge.points.iter().zip(&hinge.records) {
        checks.push(CheckResult::report(
            format!("comparison.hinge_gaps/{}", p.label()),
            gap(r),
            format!("D {:.5} R {:.5}", r.final_summary.distortion, r.final_summary.rate),
        ));
    }

    // β-VAE frontier, then D-CO at each β run's trailing distortion.
    let beta_points: Vec<SweepPoint> = plan.betas.iter().map(|&b| SweepPoint::Beta(b)).collect();
    let beta_full = runner.sweep("beta_full", "", MethodKind::Beta, beta_points.clone())?;
    let beta_ds: Vec<f64> = beta_full.records.iter().map(|r| r.final_summary.distortion).collect();
    let matched = runner.sweep("dco_at_beta", "", MethodKind::Dco, points(&beta_ds))?;
    for ((b, rb), rd) in plan.betas.iter().zip(&beta_full.records).zip(&matched.records) {
        let (r_beta, r_dco) = (rb.final_summary.rate, rd.final_summary.rate);
        checks.push(CheckResult::at_most(
            format!("comparison.rate_parity/beta={b}"),
            (r_dco - r_beta).abs() / r_beta,
            0.10,
            format!(
                "beta R {r_beta:.5} D {:.5}; D-CO R {r_dco:.5} D {:.5}",
                rb.final_summary.distortion, rd.final_summary.distortion
            ),
        ));
    }

    // Shannon lower bound on the iid Gaussian source.
    let gauss = "source = \"iid_gaussian\"\n";
    let variance = 1.0;
    let g_dco = runner.sweep("gaussian_dco", gauss, MethodKind::Dco, points(&plan.gaussian_targets))?;
    let g_beta = runner.sweep(
        "gaussian_beta",
        gauss,
        MethodKind::Beta,
        plan.gaussian_betas.iter().map(|&b| SweepPoint::Beta(b)).collect(),
    )?;
    for (p, r) in g_dco.points.iter().zip(&g_dco.records).chain(g_beta.points.iter().zip(&g_beta.records)) {
        let f = &r.final_summary;
        let bound = shannon_rd_gaussian(variance, f.distortion)?;
        checks.push(CheckResult::at_most(
            format!("comparison.shannon_bound/{}={}", r.method, p.label()),
            (bound - SHANNON_SLACK) - f.rate,
            0.0,
            format!("R {:.5} vs R(D) {bound:.5} at D {:.5}", f.rate, f.distortion),
        ));
    }

    // Pointwise model selection between capacities.
    let model_selection = compare_sweeps(&SweepOutput::from_result(&full), &SweepOutput::from_result(&half_dco))?;
    let mut mutual = 0;
    let mut dco_mismatch: f64 = 0.0;
    for (row, (rf, rh)) in model_selection.rows.iter().zip(full.records.iter().zip(&half_dco.records)) {
        let c = rf.sweep_value;
        if !(feasible(c, floor_full) && feasible(c, floor_half)) {
            continue;
        }
        mutual += 1;
        checks.push(CheckResult::at_most(
            format!("comparison.model_selection/c={c:.4}/both_within"),
            gap(rf).abs().max(gap(rh).abs()),
            0.02,
            format!("full D {:.5}, half D {:.5}", rf.final_summary.distortion, rh.final_summary.distortion),
        ));
        let mismatch = (rf.final_summary.distortion - rh.final_summary.distortion).abs() / c;
        dco_mismatch = dco_mismatch.max(mismatch);
        checks.push(CheckResult::at_most(
            format!("comparison.model_selection/c={c:.4}/distortion_match"),
            mismatch,
            0.04,
            "|D_full - D_half| / c_D",
        ));
        checks.push(CheckResult::at_most(
            format!("comparison.model_selection/c={c:.4}/rate_delta"),
            if row.rate_delta.is_some() { 0.0 } else { 1.0 },
            0.0,
            row.rate_delta.map_or("missing".into(), |d| format!("half - full rate {d:+.5}")),
        ));
    }
    checks.push(CheckResult::at_most(
        "comparison.model_selection/mutual_count",
        1.0 - mutual as f64,
        0.0,
        format!("{mutual} mutually feasible targets (floors {floor_full:.5}, {floor_half:.5})"),
    ));
    let beta_half = runner.sweep("beta_half", half, MethodKind::Beta, beta_points)?;
    let beta_selection =
        compare_sweeps(&SweepOutput::from_result(&beta_full), &SweepOutput::from_result(&beta_half))?;
    let beta_mismatch = beta_selection
        .rows
        .iter()
        .map(|r| r.distortion_delta.abs() / r.a.distortion)
        .fold(0.0, f64::max);
    checks.push(CheckResult::report(
        "comparison.model_selection/beta_mismatch",
        beta_mismatch,
        format!("max per-beta |D_half - D_full| / D_full; D-CO max {dco_mismatch:.4}"),
    ));

    if let Some(dir) = &plan.out_dir {
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
        };
        write("comparison_dco.csv", model_selection.to_csv())?;
        write("comparison_beta.csv", beta_selection.to_csv())?;
    }
    for (name, _, secs) in &runner.sweeps {
        checks.push(CheckResult::at_most(
            format!("comparison.sweep_runtime/{name}"),
            *secs,
            SWEEP_BUDGET_SECS,
            "seconds",
        ));
    }

    Ok(ComparisonOutcome {
        checks,
        floor_full,
        floor_half,
        targets,
        sweeps: runner.sweeps,
        model_selection,
        beta_selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_ids_unique() {
        let mut seen = HashSet::new();
        for s in SUITES {
            for id in s.invariants {
                assert!(seen.insert(*id), "invariant {id} listed twice");
            }
        }
    }

    fn assert_covers(suite: &str, results: &[CheckResult]) {
        let spec = SUITES.iter().find(|s| s.name == suite).unwrap();
        let ids: HashSet<&str> = results.iter().map(|r| r.invariant()).collect();
        for id in spec.invariants {
            assert!(ids.contains(id), "suite {suite} does not check {id}");
        }
        for id in &ids {
            assert!(spec.invariants.contains(id), "suite {suite} emits unregistered {id}");
        }
    }

    #[test]
    fn cheap_suites_cover_registry_and_pass() {
        let units = suite_optimizer_units(0);
        assert_covers("optimizer_units", &units);
        let grads = suite_gradients(0, None).unwrap();
        assert_covers("gradients", &grads);
        let oracles = suite_oracles(0).unwrap();
        assert_covers("oracles", &oracles);
        for r in units.iter().chain(&grads).chain(&oracles) {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn kkt_suite_covers_registry_and_passes() {
        let res = suite_kkt_convergence(0).unwrap();
        assert_covers("kkt_convergence", &res);
        for r in &res {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn corrupted_gradient_is_caught_and_named() {
        let res = suite_gradients(0, Some("gaussian_linear")).unwrap();
        let failed: Vec<_> = res.iter().filter(|r| !r.passed).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|r| r.name.contains("gaussian_linear") && r.name.contains("distortion")));
        assert!(suite_gradients(0, Some("nope")).is_err());
    }

    #[test]
    fn comparison_smoke_covers_registry() {
        let out = suite_method_comparison(&ComparisonPlan::smoke()).unwrap();
        assert_covers("method_comparison", &out.checks);
        assert!(out.floor_half > out.floor_full);
        assert_eq!(out.targets.len(), 4);
        assert_eq!(out.model_selection.rows.len(), 4);
        assert!(out.sweep("beta_half").is_some());
    }

    #[test]
    fn geometric_targets_are_exponentially_spaced() {
        let t = geometric_targets(0.1, 0.8, 4);
        assert_eq!(t.len(), 4);
        assert!((t[3] - 0.8).abs() < 1e-12);
        for w in t.windows(2) {
            assert!((w[1] / w[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn results_csv_schema() {
        let csv = results_csv(&[CheckResult::at_most("a/b", 1.0, 2.0, "x \"y\"")]);
        assert_eq!(csv.lines().next(), Some(RESULTS_CSV_HEADER));
        assert_eq!(csv.lines().nth(1), Some("a/b,true,1e0,2e0,\"x 'y'\""));
    }
}
