use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn frcb(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frcb")).current_dir(cwd).args(args).output().expect("spawn frcb")
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn wiggly_run(out: &Path, workers: &str) -> Output {
    frcb(
        &manifest_dir(),
        &["--command", "test", "--input", "data/wiggly.csv", "--seed", "7", "--workers", workers, "--out", out.to_str().unwrap()],
    )
}

#[test]
fn wiggly_matches_golden_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wiggly_run(tmp.path(), "1");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let produced = std::fs::read_to_string(tmp.path().join("report.json")).unwrap();
    let golden_path = manifest_dir().join("tests/golden/wiggly_report.json");
    if std::env::var_os("FRCB_UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden_path, &produced).unwrap();
    }
    let golden = std::fs::read_to_string(&golden_path).unwrap();
    assert!(produced == golden, "report.json differs from {}", golden_path.display());

    let v: Value = serde_json::from_str(&produced).unwrap();
    assert_eq!(v["schema_version"], 1);
    let r = &v["result"];
    let h_cb = r["cb"]["statistic"].as_f64().unwrap();
    let h_frcb = r["frcb"]["report"]["statistic"].as_f64().unwrap();
    let p_frcb = r["frcb"]["report"]["p_value"].as_f64().unwrap();
    assert!(p_frcb <= 0.05, "p = {p_frcb}");
    assert!(h_frcb < h_cb, "{h_frcb} vs {h_cb}");
}

#[test]
fn test_output_independent_of_workers() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(wiggly_run(a.path(), "1").status.success());
    assert!(wiggly_run(b.path(), "4").status.success());
    for name in ["report.json", "fits.csv", "band.csv", "segments.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between worker counts");
    }
}

#[test]
fn simulate_output_independent_of_workers() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, w) in [(&a, "1"), (&b, "3")] {
        let out = frcb(
            dir.path(),
            &["--command", "simulate", "--functions", "m3,flat1", "--sizes", "40", "--sims", "3", "--boot", "19", "--workers", w, "--out", "."],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["table.csv", "table.json", "table.txt"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn two_row_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "two.csv", "x,y\n1,2\n3,4\n");
    let out = frcb(tmp.path(), &["--command", "test", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("observation"), "{err}");
}

#[test]
fn non_finite_value_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "nan.csv", "x,y\n1,2\n2,3\n3,NaN\n4,5\n");
    let out = frcb(tmp.path(), &["--command", "test", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nan.csv:4"));
}

#[test]
fn usage_and_io_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "ok.csv", "x,y\n1,2\n2,3\n3,4\n4,4\n5,6\n");
    let bad_alpha = frcb(tmp.path(), &["--command", "test", "--input", "ok.csv", "--alpha", "1.5"]);
    assert_eq!(bad_alpha.status.code(), Some(2));
    let bad_flag = frcb(tmp.path(), &["--command", "nope"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    let missing = frcb(tmp.path(), &["--command", "test", "--input", "absent.csv"]);
    assert_eq!(missing.status.code(), Some(5));
    drop(input);
}

#[test]
fn monotone_data_is_not_rejected() {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let mut text = String::from("x,y\n");
    for i in 0..150 {
        let x = i as f64 / 149.0;
        text.push_str(&format!("{x},{}\n", 2.0 * x + noise.sample(&mut rng)));
    }
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "mono.csv", &text);
    let out = frcb(tmp.path(), &["--command", "test", "--input", "mono.csv", "--boot", "99", "--seed", "3", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&tmp.path().join("o/report.json"));
    let r = &v["result"];
    assert!(r["cb"]["p_value"].as_f64().unwrap() > 0.05);
    assert!(r["frcb"]["report"]["statistic"].as_f64().unwrap() <= r["cb"]["statistic"].as_f64().unwrap());
}

#[test]
fn density_band_and_paths_commands_run() {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, b) = (Normal::new(-2.0, 0.5).unwrap(), Normal::new(2.0, 0.5).unwrap());
    let mut text = String::from("value\n");
    for i in 0..200 {
        let d = if i % 2 == 0 { &a } else { &b };
        text.push_str(&format!("{}\n", d.sample(&mut rng)));
    }
    write(tmp.path(), "bimodal.csv", &text);
    let out = frcb(tmp.path(), &["--command", "test-density", "--input", "bimodal.csv", "--boot", "49", "--out", "d"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&tmp.path().join("d/report.json"));
    assert!(v["result"]["cb"]["p_value"].as_f64().unwrap() <= 0.05);

    let band = frcb(&manifest_dir(), &["--command", "band", "--input", "data/wiggly.csv", "--boot", "49", "--out", tmp.path().join("b").to_str().unwrap()]);
    assert!(band.status.success(), "{}", String::from_utf8_lossy(&band.stderr));
    let header = std::fs::read_to_string(tmp.path().join("b/band.csv")).unwrap();
    assert!(header.starts_with("x,fit,lower,upper,segment_id,h\n"));

    let paths = frcb(&manifest_dir(), &["--command", "paths", "--input", "data/wiggly.csv", "--bandwidths", "10,40", "--out", tmp.path().join("p").to_str().unwrap()]);
    assert!(paths.status.success(), "{}", String::from_utf8_lossy(&paths.stderr));
    let fits = std::fs::read_to_string(tmp.path().join("p/fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 1 + 2 * 100);
}
