use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hmdchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmdchan"))
        .args(args)
        .env("HMDCHAN_THREADS", "1")
        .output()
        .expect("spawn hmdchan")
}

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn quick_pipeline(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec![
        "pipeline",
        "--random-scenes",
        "1",
        "--desk-scale",
        "--snapshot-rate",
        "0.125",
        "--seed",
        "5",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    hmdchan(&args)
}

#[test]
fn missing_scene_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = hmdchan(&[
        "pipeline",
        "--scene",
        tmp.path().join("absent.json").to_str().unwrap(),
        "--desk-scale",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[config]"), "{err}");
    assert!(!out.exists());
}

#[test]
fn full_only_panel_list_gives_unit_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let o = quick_pipeline(tmp.path(), &["--panel-counts", "8", "--rear-headband", "none"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&tmp.path().join("gain_tradeoff_v1.csv"));
    let col = rows[0].iter().position(|h| h == "gain_ratio").unwrap();
    assert!(rows.len() > 1);
    for r in &rows[1..] {
        assert_eq!(r[col].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = quick_pipeline(d, &["--panel-counts", "1,4,8", "--rear-headband", "1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    assert!(names.len() >= 10);
    for n in names {
        assert_eq!(
            std::fs::read(a.join(&n)).unwrap(),
            std::fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn stepwise_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let t = |p: &str| tmp.path().join(p).to_str().unwrap().to_owned();
    let scene = demo_dir().join("scene_u0.json");

    let o = hmdchan(&[
        "synth",
        scene.to_str().unwrap(),
        "--desk-scale",
        "--snapshot-rate",
        "0.125",
        "--out",
        &t("cir"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cirs: Vec<String> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(cirs.len(), 4);

    let mut args = vec!["denoise", "--desk-scale", "--out"];
    let clean_dir = t("clean");
    args.push(&clean_dir);
    args.extend(cirs.iter().map(String::as_str));
    let o = hmdchan(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = csv_rows(&tmp.path().join("clean/denoise_report_v1.csv"));
    assert_eq!(report.len(), 5);

    let gains_dir = t("grids");
    let mut args = vec![
        "gains",
        "--desk-scale",
        "-c",
        "fwd8",
        "-c",
        "fwd2",
        "-c",
        "III,VII",
        "--out",
        &gains_dir,
    ];
    args.extend(cirs.iter().map(String::as_str));
    let o = hmdchan(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let grids = [t("grids/fwd8.grd"), t("grids/fwd2.grd")];
    let metrics_dir = t("metrics");
    let o = hmdchan(&["metrics", &grids[0], &grids[1], "--out", &metrics_dir]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&tmp.path().join("metrics/gain_tradeoff_v1.csv"));
    let col = rows[0].iter().position(|h| h == "gain_ratio").unwrap();
    for r in &rows[1..] {
        let v: f64 = r[col].parse().unwrap();
        assert!(v > 0.0 && v <= 1.0, "{v}");
    }

    let report_dir = t("report");
    let o = hmdchan(&["report", &grids[0], &grids[1], "--out", &report_dir]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("report/gain_ratio_cdf_v1.csv").exists());
}

#[test]
fn metrics_without_reference_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = quick_pipeline(tmp.path(), &["--panel-counts", "2", "--rear-headband", "none"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = tmp.path().join("grids/fwd2.grd");
    let o = hmdchan(&[
        "metrics",
        grid.to_str().unwrap(),
        "--out",
        tmp.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn bad_flag_values_are_rejected() {
    let o = hmdchan(&["pipeline", "--random-scenes", "1", "--panel-counts", "9"]);
    assert!(!o.status.success());
    let o = hmdchan(&["pipeline", "--random-scenes", "1", "--noise-region", "2e-6"]);
    assert!(!o.status.success());
    let o = hmdchan(&["pipeline"]);
    assert!(!o.status.success());
}

#[test]
fn shipped_demo_config_parses() {
    let cfg = hmd_channel::pipeline::RunConfig::from_file(&demo_dir().join("desk.json")).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.load_scenes().unwrap().len(), 6);
}
