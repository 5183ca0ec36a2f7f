//! Single runs, sweeps and sweep comparisons, with their CSV and SVG outputs.
//!
//! Sweep runs execute in parallel and each writes to its own `run_NNN`
//! directory; the frontier file is then written sequentially in sweep order,
//! so outputs do not depend on completion order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SweepPoint, SweepSpec};
use crate::error::{Error, Result};
use crate::plot::{Plot, Series};
use crate::trainer::{fmt_f64, run, MethodKind, RunConfig, RunRecord};

pub const FRONTIER_CSV_HEADER: &str = "target_or_beta,rate,distortion,multiplier_final,achieved,gap";
pub const COMPARISON_CSV_HEADER: &str = "target_or_beta,rate_a,distortion_a,achieved_a,rate_b,distortion_b,achieved_b,pointwise,rate_delta,distortion_delta";

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Runs one configuration and writes `run.csv` and `summary.csv` into `out`.
pub fn train_to_dir(config: &RunConfig, out: &Path) -> Result<RunRecord> {
    let record = run(config)?;
    write_run_outputs(&record, out)?;
    Ok(record)
}

fn write_run_outputs(record: &RunRecord, out: &Path) -> Result<()> {
    create_dir(out)?;
    write(&out.join("run.csv"), &record.run_csv())?;
    write(&out.join("summary.csv"), &record.summary_csv())
}

/// One frontier row, as written to and read from `frontier.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRow {
    pub value: f64,
    pub rate: f64,
    pub distortion: f64,
    pub multiplier_final: f64,
    /// `None` for β sweeps.
    pub achieved: Option<bool>,
    pub gap: Option<f64>,
}

impl FrontierRow {
    fn from_record(r: &RunRecord) -> Self {
        let f = &r.final_summary;
        Self {
            value: r.sweep_value,
            rate: f.rate,
            distortion: f.distortion,
            multiplier_final: f.weight,
            achieved: r.flags.target_achieved,
            gap: r.target.map(|c| f.distortion / c - 1.0),
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt_f64(self.value),
            fmt_f64(self.rate),
            fmt_f64(self.distortion),
            fmt_f64(self.multiplier_final),
            self.achieved.map(|a| a.to_string()).unwrap_or_else(|| "na".into()),
            self.gap.map(fmt_f64).unwrap_or_default()
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::Config(format!("frontier row has {} columns: `{line}`", cols.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{s}` in frontier row `{line}`")))
        };
        Ok(Self {
            value: num(cols[0])?,
            rate: num(cols[1])?,
            distortion: num(cols[2])?,
            multiplier_final: num(cols[3])?,
            achieved: match cols[4] {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            },
            gap: if cols[5].is_empty() { None } else { Some(num(cols[5])?) },
        })
    }
}

pub fn frontier_csv(rows: &[FrontierRow]) -> String {
    let mut out = format!("{FRONTIER_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct SweepMeta {
    method: String,
    points: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub method: MethodKind,
    pub points: Vec<SweepPoint>,
    pub records: Vec<RunRecord>,
}

impl SweepResult {
    pub fn frontier(&self) -> Vec<FrontierRow> {
        self.records.iter().map(FrontierRow::from_record).collect()
    }
}

/// Runs every sweep point with at most `jobs` concurrent runs.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    let configs = (0..spec.points.len())
        .map(|i| spec.run_config(i))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| configs.par_iter().map(run).collect::<Vec<_>>());
    Ok(SweepResult {
        method: spec.method,
        points: spec.points.clone(),
        records: records.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

/// Runs a sweep and writes per-run directories, `frontier.csv`, `meta.toml`
/// and, with `plot`, SVG figures.
pub fn sweep_to_dir(spec: &SweepSpec, out: &Path, jobs: usize, plot: bool) -> Result<SweepResult> {
    let result = run_sweep(spec, jobs)?;
    write_sweep_outputs(&result, out, plot)?;
    Ok(result)
}

pub fn write_sweep_outputs(result: &SweepResult, out: &Path, plot: bool) -> Result<()> {
    create_dir(out)?;
    for (i, record) in result.records.iter().enumerate() {
        write_run_outputs(record, &out.join(format!("run_{i:03}")))?;
    }
    write(&out.join("frontier.csv"), &frontier_csv(&result.frontier()))?;
    let meta = SweepMeta {
        method: result.method.to_string(),
        points: result.points.iter().map(|p| p.label()).collect(),
    };
    let meta = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    write(&out.join("meta.toml"), &meta)?;
    if plot {
        write(&out.join("frontier.svg"), &frontier_plot(result).to_svg())?;
        if result.method == MethodKind::Dco {
            write(&out.join("multipliers.svg"), &multiplier_plot(result).to_svg())?;
        }
    }
    Ok(())
}

pub fn frontier_plot(result: &SweepResult) -> Plot {
    let mut pts: Vec<(f64, f64)> = result
        .records
        .iter()
        .map(|r| (r.final_summary.distortion, r.final_summary.rate))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Plot {
        title: format!("{} frontier", result.method),
        x_label: "distortion (MSE)".into(),
        y_label: "rate (bits/dim)".into(),
        log_y: false,
        series: vec![Series {
            name: result.method.to_string(),
            points: pts,
            lines: true,
        }],
    }
}

pub fn multiplier_plot(result: &SweepResult) -> Plot {
    Plot {
        title: "multiplier trajectories".into(),
        x_label: "step".into(),
        y_label: "multiplier".into(),
        log_y: true,
        series: result
            .records
            .iter()
            .zip(&result.points)
            .map(|(r, p)| Series {
                name: format!("c={}", p.label()),
                points: r.series.iter().map(|s| (s.step as f64, s.weight)).collect(),
                lines: true,
            })
            .collect(),
    }
}

/// Method, point labels and frontier rows read back from a sweep directory.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub dir: PathBuf,
    pub method: MethodKind,
    pub labels: Vec<String>,
    pub rows: Vec<FrontierRow>,
}

impl SweepOutput {
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.toml");
        let meta_text =
            fs::read_to_string(&meta_path).map_err(|e| Error::io(meta_path.display().to_string(), e))?;
        let meta: SweepMeta = toml::from_str(&meta_text)
            .map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;
        let frontier_path = dir.join("frontier.csv");
        let text = fs::read_to_string(&frontier_path)
            .map_err(|e| Error::io(frontier_path.display().to_string(), e))?;
        let mut lines = text.lines();
        if lines.next() != Some(FRONTIER_CSV_HEADER) {
            return Err(Error::Config(format!(
                "{}: unexpected header",
                frontier_path.display()
            )));
        }
        let rows = lines.map(FrontierRow::parse).collect::<Result<Vec<_>>>()?;
        if rows.len() != meta.points.len() {
            return Err(Error::Config(format!(
                "{}: {} rows for {} sweep points",
                dir.display(),
                rows.len(),
                meta.points.len()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            method: meta.method.parse()?,
            labels: meta.points,
            rows,
        })
    }

    pub fn from_result(result: &SweepResult) -> Self {
        Self {
            dir: PathBuf::new(),
            method: result.method,
            labels: result.points.iter().map(|p| p.label()).collect(),
            rows: result.frontier(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub a: FrontierRow,
    pub b: FrontierRow,
    /// Both runs achieved the same target, so their rates are comparable.
    pub pointwise: bool,
    /// `rate_b - rate_a`, only for pointwise rows.
    pub rate_delta: Option<f64>,
    pub distortion_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub method: MethodKind,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn pointwise_rows(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.pointwise)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{COMPARISON_CSV_HEADER}\n");
        let ach = |a: Option<bool>| a.map(|v| v.to_string()).unwrap_or_else(|| "na".into());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                fmt_f64(r.a.rate),
                fmt_f64(r.a.distortion),
                ach(r.a.achieved),
                fmt_f64(r.b.rate),
                fmt_f64(r.b.distortion),
                ach(r.b.achieved),
                r.pointwise,
                r.rate_delta.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.distortion_delta)
            );
        }
        out
    }
}

/// Aligns two sweeps point by point. Rates are compared only where both runs
/// achieved a shared target; β sweeps never align pointwise.
pub fn compare_sweeps(a: &SweepOutput, b: &SweepOutput) -> Result<ComparisonReport> {
    if a.method != b.method {
        return Err(Error::Config(format!(
            "sweeps use different methods: `{}` vs `{}`",
            a.method, b.method
        )));
    }
    if a.labels != b.labels {
        return Err(Error::Config("sweeps use different value lists".into()));
    }
    let rows = a
        .labels
        .iter()
        .zip(a.rows.iter().zip(&b.rows))
        .map(|(label, (ra, rb))| {
            let pointwise = a.method != MethodKind::Beta && ra.achieved == Some(true) && rb.achieved == Some(true);
            ComparisonRow {
                label: label.clone(),
                a: ra.clone(),
                b: rb.clone(),
                pointwise,
                rate_delta: pointwise.then(|| rb.rate - ra.rate),
                distortion_delta: rb.distortion - ra.distortion,
            }
        })
        .collect();
    Ok(ComparisonReport {
        method: a.method,
        rows,
    })
}

pub fn compare_to_file(a: &Path, b: &Path, out: &Path) -> Result<ComparisonReport> {
    let report = compare_sweeps(&SweepOutput::load(a)?, &SweepOutput::load(b)?)?;
    create_dir(out)?;
    write(&out.join("comparison.csv"), &report.to_csv())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
model = "quadratic"
rate_center = [0.0, 1.0]
rate_curvature = [1.0, 2.0]
dist_center = [2.0, -1.0]
dist_curvature = [1.0, 0.5]
total_steps = 3000
"#;

    fn dco_sweep(values: &[f64]) -> SweepSpec {
        SweepSpec::parse(&format!(
            "method = \"dco\"\nsweep_values = {values:?}\n{BASE}"
        ))
        .unwrap()
    }

    #[test]
    fn frontier_round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dco_sweep(&[2.0, 1.0, 3.0]);
        let res = sweep_to_dir(&spec, dir.path(), 3, true).unwrap();
        let loaded = SweepOutput::load(dir.path()).unwrap();
        assert_eq!(loaded.rows.len(), 3);
        assert_eq!(loaded.rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![2.0, 1.0, 3.0]);
        assert_eq!(loaded.rows, res.frontier());
        assert!(dir.path().join("run_002/run.csv").exists());
        assert!(dir.path().join("frontier.svg").exists());
        assert!(dir.path().join("multipliers.svg").exists());
    }

    #[test]
    fn parallel_and_serial_sweeps_match() {
        let spec = dco_sweep(&[2.0, 1.0, 3.0, 0.5]);
        let serial = run_sweep(&spec, 1).unwrap();
        let parallel = run_sweep(&spec, 4).unwrap();
        assert_eq!(frontier_csv(&serial.frontier()), frontier_csv(&parallel.frontier()));
    }

    #[test]
    fn plot_flag_does_not_change_csv() {
        let spec = dco_sweep(&[1.0]);
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        sweep_to_dir(&spec, d1.path(), 1, true).unwrap();
        sweep_to_dir(&spec, d2.path(), 1, false).unwrap();
        let read = |d: &Path| fs::read(d.join("frontier.csv")).unwrap();
        assert_eq!(read(d1.path()), read(d2.path()));
        assert!(!d2.path().join("frontier.svg").exists());
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let res = run_sweep(&dco_sweep(&[2.0, 1.0]), 2).unwrap();
        let out = SweepOutput::from_result(&res);
        let report = compare_sweeps(&out, &out).unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert!(r.pointwise);
            assert_eq!(r.rate_delta, Some(0.0));
        }
        assert!(report.to_csv().starts_with(COMPARISON_CSV_HEADER));
    }

    #[test]
    fn mismatched_sweeps_rejected() {
        let a = SweepOutput::from_result(&run_sweep(&dco_sweep(&[2.0]), 1).unwrap());
        let b = SweepOutput::from_result(&run_sweep(&dco_sweep(&[1.0]), 1).unwrap());
        assert!(compare_sweeps(&a, &b).is_err());
        let mut c = a.clone();
        c.method = MethodKind::Beta;
        assert!(compare_sweeps(&a, &c).is_err());
    }

    #[test]
    fn unachieved_rows_are_not_pointwise() {
        let res = run_sweep(&dco_sweep(&[2.0, 1.0]), 1).unwrap();
        let a = SweepOutput::from_result(&res);
        let mut b = a.clone();
        b.rows[1].achieved = Some(false);
        let report = compare_sweeps(&a, &b).unwrap();
        assert!(report.rows[0].pointwise);
        assert!(!report.rows[1].pointwise);
        assert_eq!(report.rows[1].rate_delta, None);
    }
}
