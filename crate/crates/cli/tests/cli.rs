use std::path::Path;
use std::process::{Command, Output};

use qdpc::npy;
use tempfile::TempDir;

fn qdpc(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qdpc"));
    c.args(args).env_remove("QDPC_OUT_DIR").env_remove("RUST_LOG");
    c
}

fn run_ok(out: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--out-dir", out.to_str().unwrap()];
    full.extend_from_slice(args);
    let o = qdpc(&full).output().unwrap();
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn csv_column(p: impl AsRef<Path>, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(p.as_ref()).unwrap();
    let k = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[k].parse().unwrap()).collect()
}

fn assert_self_describing(dir: &Path) {
    let version = read(dir.join("version.txt"));
    assert_eq!(version.trim(), format!("qdpc {}", env!("CARGO_PKG_VERSION")));
    let cfg: toml::Value = toml::from_str(&read(dir.join("config.resolved.toml"))).unwrap();
    assert_eq!(cfg["schema_version"].as_integer(), Some(1));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[grid]\nsize = 32\n\n[noise]\nsnr_db = 10.0\nseed = 4\n").unwrap();
    run_ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "simulate", "--snr-db", "20"]);
    let dir = tmp.path().join("simulate");
    assert_self_describing(&dir);
    let resolved: toml::Value = toml::from_str(&read(dir.join("config.resolved.toml"))).unwrap();
    assert_eq!(resolved["grid"]["size"].as_integer(), Some(32));
    assert_eq!(resolved["noise"]["snr_db"].as_float(), Some(20.0));
    assert_eq!(resolved["noise"]["seed"].as_integer(), Some(4));
    let meta: toml::Value = toml::from_str(&read(dir.join("metadata.toml"))).unwrap();
    assert_eq!(meta["size"].as_integer(), Some(32));
}

#[test]
fn env_var_sets_the_output_base_and_the_flag_wins() {
    let tmp = TempDir::new().unwrap();
    let env_dir = tmp.path().join("from-env");
    let flag_dir = tmp.path().join("from-flag");
    let o = qdpc(&["ptf", "--size", "32"]).env("QDPC_OUT_DIR", &env_dir).output().unwrap();
    assert!(o.status.success());
    assert!(env_dir.join("ptf/ptf_0.npy").exists());

    let o = qdpc(&["--out-dir", flag_dir.to_str().unwrap(), "ptf", "--size", "32"])
        .env("QDPC_OUT_DIR", tmp.path().join("ignored"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_dir.join("ptf/ptf_0.npy").exists());
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn exit_codes_are_distinct_and_documented() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();

    let help = qdpc(&["--help"]).output().unwrap();
    assert!(help.status.success());
    let text = String::from_utf8_lossy(&help.stdout);
    for needle in ["Exit codes:", "  2  ", "  3  ", "  4  ", "  5  ", "QDPC_OUT_DIR"] {
        assert!(text.contains(needle), "help lacks {needle:?}");
    }

    let bad_cfg = tmp.path().join("bad.toml");
    std::fs::write(&bad_cfg, "[grid]\nsize = 32\nshape = 3\n").unwrap();
    let o = qdpc(&["--out-dir", out, "--config", bad_cfg.to_str().unwrap(), "ptf"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = qdpc(&["--out-dir", out, "reconstruct", "--input", out, "--method", "magic"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage:"));

    let o = qdpc(&["--out-dir", out, "ptf", "--na", "-1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let missing = tmp.path().join("nowhere");
    let o = qdpc(&["--out-dir", out, "reconstruct", "--input", missing.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = qdpc(&["--out-dir", out, "metrics", "--rec", "a.npy", "--gt", "b.npy"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ptf_writes_complex_arrays_and_previews() {
    let tmp = TempDir::new().unwrap();
    run_ok(tmp.path(), &["ptf", "--size", "32"]);
    let dir = tmp.path().join("ptf");
    assert_self_describing(&dir);
    for n in 0..2 {
        let arr = npy::read(&dir.join(format!("ptf_{n}.npy"))).unwrap();
        assert_eq!(arr.shape, vec![32, 32]);
        assert!(matches!(arr.data, npy::NpyData::C128(_)));
        for f in [format!("ptf_{n}_mag.png"), format!("ptf_{n}_imag.png"), format!("psf_{n}.npy")] {
            assert!(dir.join(&f).exists(), "{f}");
        }
    }
    assert!(read(dir.join("ptf.csv")).lines().count() >= 3);
}

#[test]
fn clean_simulation_reconstructs_through_the_cli() {
    let tmp = TempDir::new().unwrap();
    run_ok(tmp.path(), &["simulate", "--snr-db", "inf", "--no-background"]);
    let sim = tmp.path().join("simulate");
    let gt = sim.join("ground_truth_observable.npy");
    run_ok(
        tmp.path(),
        &["reconstruct", "--input", sim.to_str().unwrap(), "--method", "l2", "--alpha", "1e-6", "--gt", gt.to_str().unwrap()],
    );
    let rec = tmp.path().join("reconstruct");
    assert_self_describing(&rec);
    assert!(rec.join("phase.npy").exists() && rec.join("phase.png").exists());
    let rp = csv_column(rec.join("metrics.csv"), "rpsnr");
    assert!(rp[0] >= 40.0, "rpSNR {:.2}", rp[0]);
}

#[test]
fn pd_trace_and_edges() {
    let tmp = TempDir::new().unwrap();
    run_ok(tmp.path(), &["simulate", "--size", "64"]);
    let sim = tmp.path().join("simulate");
    let input = sim.to_str().unwrap();

    let o = qdpc(&["--out-dir", tmp.path().to_str().unwrap(), "reconstruct", "--input", input, "--method", "l2", "--trace"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    run_ok(tmp.path(), &["reconstruct", "--input", input, "--method", "pd", "--iters", "5", "--trace", "--emit-edges"]);
    let rec = tmp.path().join("reconstruct");
    let its = csv_column(rec.join("trace.csv"), "iteration");
    assert_eq!(its, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(csv_column(rec.join("trace.csv"), "cost").iter().all(|c| c.is_finite()));
    for n in 0..2 {
        assert!(rec.join(format!("edges_{n}.npy")).exists());
    }
    let resolved = read(rec.join("config.resolved.toml"));
    assert!(resolved.contains("method = \"pd\""), "{resolved}");
}

#[test]
fn sensor_reports_weights() {
    let tmp = TempDir::new().unwrap();
    run_ok(tmp.path(), &["simulate", "--size", "64"]);
    let sim = tmp.path().join("simulate");
    let o = run_ok(tmp.path(), &["sensor", "--input", sim.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sigma") && stdout.contains("alpha"), "{stdout}");
    let report: toml::Value = toml::from_str(&read(tmp.path().join("sensor/sensor.toml"))).unwrap();
    let sigma = report["sigma"].as_float().unwrap();
    assert!(sigma > 0.0);
    assert_eq!(report["beta"].as_float().unwrap(), sigma / 10.0);
}

#[test]
fn metrics_appends_rows() {
    let tmp = TempDir::new().unwrap();
    run_ok(tmp.path(), &["simulate", "--size", "64"]);
    let gt = tmp.path().join("simulate/ground_truth.npy");
    let g = gt.to_str().unwrap();
    let table = tmp.path().join("scores.csv");
    for method in ["self", "again"] {
        run_ok(tmp.path(), &["metrics", "--rec", g, "--gt", g, "--csv", table.to_str().unwrap(), "--method", method]);
    }
    let text = read(&table);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with("scenario,method"));
    assert_eq!(csv_column(&table, "ssim"), vec![1.0, 1.0]);
    assert_self_describing(&tmp.path().join("metrics"));
}

#[test]
fn learn_pupil_writes_snapshots_and_trace() {
    let tmp = TempDir::new().unwrap();
    run_ok(tmp.path(), &["learn-pupil", "--size", "32", "--iters", "5", "--snapshots", "1,5", "--edge", "0:1"]);
    let dir = tmp.path().join("learn-pupil");
    assert_self_describing(&dir);
    for f in ["q_iter001.npy", "q_iter005.npy", "q_final.npy", "source.npy"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let costs = csv_column(dir.join("trace.csv"), "cost");
    assert_eq!(costs.len(), 6);
    assert!(costs.windows(2).all(|w| w[1] >= w[0]));
}
