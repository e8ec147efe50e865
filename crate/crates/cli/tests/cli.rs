use std::path::Path;
use std::process::Command;

fn d2ps(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_d2ps"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("run d2ps");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_then_detect_fully_spoofed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[roi]\na1 = -50.0\na2 = 50.0\nb1 = -50.0\nb2 = 50.0\n[spoofer]\nspoofed_fraction = 1.0\n[run]\nn_receivers = 20\nseed = 4\n",
    );
    d2ps(dir.path(), &["simulate", "--config", &cfg]);
    let m = read(dir.path(), "measurements.csv");
    assert!(m.starts_with("epoch,receiver_id,satellite_id,pseudorange_m\n"));
    assert_eq!(m.lines().count(), 1 + 20 * 12);
    let manifest = read(dir.path(), "manifest.toml");
    assert!(manifest.contains("seed = 4") && manifest.contains("config_hash"));

    let meas = dir.path().join("measurements.csv");
    let out = d2ps(
        dir.path(),
        &[
            "detect",
            "--config",
            &cfg,
            "--measurements",
            meas.to_str().unwrap(),
            "--method",
            "both",
        ],
    );
    assert!(out.contains("region 0: H1"), "{out}");
    let det = read(dir.path(), "detection.csv");
    assert!(det.starts_with("region_id,variance_m2,gamma1,gamma2,decision,pd_h1_pred,pd_h2_pred\n"));
    assert!(read(dir.path(), "detection_glrt.csv")
        .lines()
        .next()
        .unwrap()
        .ends_with(",method"));
}

#[test]
fn resized_detection_writes_region_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[roi]\na1 = -500.0\na2 = 500.0\nb1 = -500.0\nb2 = 500.0\n[run]\nn_receivers = 200\n",
    );
    d2ps(dir.path(), &["simulate", "--config", &cfg]);
    let meas = dir.path().join("measurements.csv");
    let rx = dir.path().join("receivers.csv");
    d2ps(
        dir.path(),
        &[
            "detect",
            "--config",
            &cfg,
            "--measurements",
            meas.to_str().unwrap(),
            "--receivers",
            rx.to_str().unwrap(),
            "--resize",
        ],
    );
    let report = read(dir.path(), "resize_report.csv");
    assert!(report.starts_with("region_id,x_lo,x_hi,y_lo,y_hi,n_receivers,decision\n"));
    assert!(report.lines().count() >= 2);
}

#[test]
fn sweeps_are_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "partial-sweep",
        "--alpha",
        "0.2,0.6",
        "--pf-ratio",
        "1.5",
        "--trials",
        "20",
        "--seed",
        "9",
        "--method",
        "both",
    ];
    d2ps(a.path(), &args);
    d2ps(b.path(), &args);
    let ra = read(a.path(), "results.csv");
    assert_eq!(ra, read(b.path(), "results.csv"));
    assert_eq!(ra.lines().count(), 1 + 4);
}

#[test]
fn roc_at_full_false_alarm_detects_everything() {
    let dir = tempfile::tempdir().unwrap();
    d2ps(
        dir.path(),
        &["roc", "--fa", "1.0", "--trials", "20", "--seed", "2"],
    );
    let roc = read(dir.path(), "roc.csv");
    let row = roc.lines().nth(1).unwrap();
    assert!(row.ends_with(",1"), "{row}");
}

#[test]
fn variance_prints_every_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = d2ps(
        dir.path(),
        &["variance", "--d", "100", "--spoofed-sats", "6"],
    );
    for label in [
        "spoofing-free",
        "fully spoofed",
        "partially spoofed",
        "partial satellites",
    ] {
        assert!(out.contains(label), "{out}");
    }
    assert!(out.contains("100.0000 m^2"));
}

#[test]
fn histogram_and_bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    d2ps(dir.path(), &["histogram", "--bins", "10", "--seed", "3"]);
    assert_eq!(read(dir.path(), "histogram.csv").lines().count(), 11);
    assert!(read(dir.path(), "d2ps_samples.csv").starts_with("idx,sample_m\n"));
    d2ps(dir.path(), &["bench", "--m", "5,8", "--trials", "0"]);
    assert_eq!(read(dir.path(), "timing.csv"), "method,M,mean_seconds\n");
}
