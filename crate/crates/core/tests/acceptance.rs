//! Acceptance suite: one pass/fail line per criterion.
//!
//! Per-check results land in `<target tmpdir>/acceptance/results.csv`, next to
//! the sweep outputs of the compressor comparison.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use dco_core::experiment::train_to_dir;
use dco_core::verification::{
    results_csv, suite_gradients, suite_kkt_convergence, suite_method_comparison, suite_optimizer_units,
    CheckResult, ComparisonPlan, SUITES,
};
use dco_core::config::parse_run_config;

struct Criterion {
    id: usize,
    title: &'static str,
    checks: Vec<CheckResult>,
    extra: Vec<String>,
}

impl Criterion {
    fn new(id: usize, title: &'static str, checks: Vec<CheckResult>) -> Self {
        Self {
            id,
            title,
            checks,
            extra: Vec::new(),
        }
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn print(&self) {
        let failed: Vec<_> = self.checks.iter().filter(|c| !c.passed).collect();
        println!(
            "[{}] criterion {}: {} ({} checks, {} failed)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks.len(),
            failed.len()
        );
        for c in failed {
            println!("    {c}");
        }
        for line in &self.extra {
            println!("    {line}");
        }
    }
}

fn select(results: &[CheckResult], prefixes: &[&str]) -> Vec<CheckResult> {
    results
        .iter()
        .filter(|r| prefixes.iter().any(|p| r.name.starts_with(p)))
        .cloned()
        .collect()
}

fn worst(checks: &[CheckResult], prefix: &str) -> String {
    let w = checks
        .iter()
        .filter(|c| c.name.starts_with(prefix) && c.tolerance.is_finite())
        .max_by(|a, b| (a.measured / a.tolerance).total_cmp(&(b.measured / b.tolerance)));
    match w {
        Some(c) => format!("worst {}: {:.3e} (tolerance {:.1e})", c.name, c.measured, c.tolerance),
        None => format!("no {prefix} checks"),
    }
}

fn main() -> ExitCode {
    let seed = 0;
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&out_dir);
    std::fs::create_dir_all(&out_dir).expect("acceptance output dir");
    let mut all = Vec::new();
    let mut criteria = Vec::new();

    let start = Instant::now();
    let kkt = suite_kkt_convergence(seed).expect("kkt suite");
    let kkt_secs = start.elapsed().as_secs_f64();
    all.extend(kkt.clone());

    let mut c1 = select(&kkt, &["trainer.kkt_convergence"]);
    c1.push(CheckResult::at_most(
        "acceptance.runtime/kkt_suite",
        kkt_secs,
        60.0,
        "seconds for the quadratic convergence suite",
    ));
    let mut c = Criterion::new(1, "D-CO matches the KKT oracle on 10 random quadratics", c1);
    c.extra.push(worst(&c.checks, "trainer.kkt_convergence"));
    c.extra.push(format!("suite runtime {kkt_secs:.1} s"));
    criteria.push(c);

    let units = suite_optimizer_units(seed);
    all.extend(units.clone());
    let c4 = select(
        &units,
        &[
            "multiplier.clip_bound",
            "multiplier.ema_closed_form",
            "multiplier.zero_gap_fixed_point",
            "multiplier.step_response",
        ],
    );
    let mut c = Criterion::new(4, "multiplier mechanics", c4);
    for r in &c.checks {
        c.extra.push(format!("{}: {:.3e} (tolerance {:.1e})", r.name, r.measured, r.tolerance));
    }
    let c4 = c;

    let mut c = Criterion::new(5, "frontier slope identities on quadratics", select(&kkt, &["slope."]));
    c.extra.push(worst(&c.checks, "slope.dco_lambda"));
    c.extra.push(worst(&c.checks, "slope.beta"));
    let c5 = c;

    let grads = suite_gradients(seed, None).expect("gradient suite");
    all.extend(grads.clone());
    let mut c = Criterion::new(7, "analytic gradients and STE fixture", grads.clone());
    c.extra.push(worst(&grads, "gradient.smooth_segments"));
    c.extra.push(worst(&grads, "gradient.ste_fixture"));
    let c7 = c;

    // Byte-identical run CSVs on the compressor, written to disk twice.
    let config = parse_run_config("model = \"compressor\"\nmethod = \"dco\"\ntarget = 0.1\ntotal_steps = 2000\n")
        .expect("determinism config");
    let bytes = |name: &str| {
        let dir = out_dir.join(name);
        train_to_dir(&config, &dir).expect("determinism run");
        std::fs::read(dir.join("run.csv")).expect("run.csv")
    };
    let (a, b) = (bytes("determinism_a"), bytes("determinism_b"));
    let mut c9 = select(&kkt, &["trainer.determinism"]);
    c9.push(CheckResult::at_most(
        "acceptance.determinism/compressor_run_csv",
        if a == b && !a.is_empty() { 0.0 } else { 1.0 },
        0.0,
        format!("{} bytes", a.len()),
    ));
    let c9 = Criterion::new(9, "identical configs give byte-identical run CSVs", c9);

    let plan = ComparisonPlan {
        seed,
        out_dir: Some(out_dir.join("comparison")),
        ..ComparisonPlan::default()
    };
    let start = Instant::now();
    let cmp = suite_method_comparison(&plan).expect("comparison suite");
    let cmp_secs = start.elapsed().as_secs_f64();
    all.extend(cmp.checks.clone());

    let floors = format!(
        "distortion floors: full {:.5}, half {:.5}; targets {}",
        cmp.floor_full,
        cmp.floor_half,
        cmp.targets.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join(" ")
    );
    let runtimes = select(&cmp.checks, &["comparison.sweep_runtime"]);
    let mut c2 = select(&cmp.checks, &["comparison.constraint_satisfaction"]);
    c2.extend(runtimes.iter().filter(|r| r.name.ends_with("/dco_full")).cloned());
    let mut c = Criterion::new(2, "D-CO meets feasible compressor targets within 2%", c2);
    c.extra.push(floors.clone());
    c.extra.push(worst(&c.checks, "comparison.constraint_satisfaction/full"));
    let c2 = c;

    let mut c = Criterion::new(
        3,
        "infeasible targets pin the multiplier and collapse",
        select(&cmp.checks, &["comparison.infeasible_collapse"]),
    );
    c.extra.push(worst(&c.checks, "comparison.infeasible_collapse"));
    let c3 = c;

    let mut c = Criterion::new(6, "D-CO rate parity with beta runs", select(&cmp.checks, &["comparison.rate_parity"]));
    for r in &c.checks {
        c.extra.push(format!("{}: {:.4}; {}", r.name, r.measured, r.details));
    }
    for r in select(&cmp.checks, &["comparison.hinge_gaps"]) {
        c.extra.push(format!("hinge (reported) {}: gap {:+.4}; {}", r.name, r.measured, r.details));
    }
    let c6 = c;

    let mut c = Criterion::new(
        8,
        "Shannon bound on the iid Gaussian source",
        select(&cmp.checks, &["comparison.shannon_bound"]),
    );
    c.extra.push(worst(&c.checks, "comparison.shannon_bound"));
    let c8 = c;

    let mut c = Criterion::new(
        10,
        "pointwise model selection between capacities",
        select(&cmp.checks, &["comparison.model_selection"]),
    );
    for r in c.checks.iter().filter(|r| !r.tolerance.is_finite() || r.name.ends_with("rate_delta")) {
        c.extra.push(format!("{}: {}", r.name, r.details));
    }
    let c10 = c;

    criteria.extend([c2, c3, c4, c5, c6, c7, c8, c9, c10]);
    criteria.sort_by_key(|c| c.id);
    for c in &criteria {
        c.print();
    }
    for r in &runtimes {
        println!("    sweep {}: {:.1} s", r.name.trim_start_matches("comparison.sweep_runtime/"), r.measured);
    }
    println!("    comparison suite {cmp_secs:.1} s; outputs in {}", out_dir.display());

    let registered = SUITES.iter().flat_map(|s| s.invariants.iter()).count();
    std::fs::write(out_dir.join("results.csv"), results_csv(&all)).expect("results.csv");
    let failed = criteria.iter().filter(|c| !c.passed()).count();
    println!(
        "{} of {} criteria passed ({} checks over {registered} registered invariants)",
        criteria.len() - failed,
        criteria.len(),
        all.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
