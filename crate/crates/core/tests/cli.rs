//! End-to-end runs of the `dco` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUADRATIC: &str = r#"
model = "quadratic"
rate_center = [0.0]
rate_curvature = [1.0]
dist_center = [2.0]
dist_curvature = [1.0]
method = "dco"
target = 1.0
"#;

fn dco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dco"))
        .args(args)
        .output()
        .expect("spawn dco")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_quadratic_meets_target() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "q.toml", QUADRATIC);
    let out = tmp.path().join("run");
    let o = dco(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let run = fs::read_to_string(out.join("run.csv")).unwrap();
    assert_eq!(run.lines().next(), Some("step,rate,distortion,multiplier,lr,psnr"));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let field = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    let d: f64 = field("distortion").parse().unwrap();
    assert!((d - 1.0).abs() <= 0.02, "D = {d}");
    assert_eq!(field("achieved"), "true");
    assert!(stdout(&o).contains("achieved=true"));
}

#[test]
fn identical_configs_write_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "method = \"dco\"\ntarget = 0.2\ntotal_steps = 300\ntrain_set_size = 1024\nhidden_dim = 8\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = dco(&["train", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["run.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let missing = write(tmp.path(), "m.toml", "method = \"dco\"\n");
    let o = dco(&["train", "--config", &missing, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing required field `target`"), "{}", stderr(&o));

    let unknown = write(tmp.path(), "u.toml", "method = \"beta\"\nbeta = 1.0\nbogus = 3\n");
    let o = dco(&["train", "--config", &unknown, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn sweep_and_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "method = \"dco\"\nsweep_values = [0.15, 0.3]\ntotal_steps = 300\ntrain_set_size = 1024\neval_samples = 256\n";
    let full = write(tmp.path(), "full.toml", base);
    let half = write(tmp.path(), "half.toml", &format!("{base}half_capacity = true\n"));
    let (a, b) = (tmp.path().join("full"), tmp.path().join("half"));
    let o = dco(&["sweep", "--config", &full, "--out", a.to_str().unwrap(), "--plot", "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dco(&["sweep", "--config", &half, "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let frontier = fs::read_to_string(a.join("frontier.csv")).unwrap();
    assert_eq!(frontier.lines().count(), 3);
    assert!(a.join("run_001").join("run.csv").exists());
    assert!(fs::read_to_string(a.join("frontier.svg")).unwrap().starts_with("<svg"));
    assert!(a.join("multipliers.svg").exists());

    let cmp = tmp.path().join("cmp");
    let o = dco(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--out", cmp.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(cmp.join("comparison.csv")).unwrap();
    assert!(report.starts_with("target_or_beta,rate_a,distortion_a,achieved_a,"));
    assert_eq!(report.lines().count(), 3);

    let beta = write(tmp.path(), "beta.toml", "method = \"beta\"\nsweep_values = [0.15, 0.3]\ntotal_steps = 50\n");
    let c = tmp.path().join("beta");
    assert!(dco(&["sweep", "--config", &beta, "--out", c.to_str().unwrap()]).status.success());
    let o = dco(&["compare", a.to_str().unwrap(), c.to_str().unwrap(), "--out", cmp.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("different methods"), "{}", stderr(&o));
}

#[test]
fn check_passes_and_catches_a_corrupted_gradient() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("checks.csv");
    let o = dco(&["check", "--out", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains(" 0 failed"));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("name,passed,measured,tolerance,details"));
    assert!(!text.contains(",false,"));

    let o = dco(&["check", "--corrupt-gradient", "quadratic"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let failed: Vec<&str> = out.lines().filter(|l| l.starts_with("[FAIL]")).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|l| l.contains("gradient.smooth_segments/quadratic/")), "{out}");
}

#[test]
fn multi_seed_sweep_writes_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.toml",
        "method = \"beta\"\nsweep_values = [1.0]\ntotal_steps = 50\ntrain_set_size = 512\neval_samples = 64\n",
    );
    let out = tmp.path().join("multi");
    let o = dco(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3", "--seeds", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("seed_3").join("frontier.csv").exists());
    assert!(out.join("seed_4").join("frontier.csv").exists());
    assert_ne!(
        fs::read(out.join("seed_3/run_000/run.csv")).unwrap(),
        fs::read(out.join("seed_4/run_000/run.csv")).unwrap()
    );
}
