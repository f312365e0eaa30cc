use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use beamwork::dataset::{is_circular_band, Dataset, Manifest};
use beamwork::evaluator::{MetricsReport, METRICS_CSV_HEADER};

const CONFIG: &str = r#"{
  "scenario": {"num_samples": 200, "num_beams": 16,
    "sensing": {"camera_height": 16, "camera_width": 16, "bev_height": 16, "bev_width": 16,
                "radar_samples": 32, "radar_chirps": 8, "radar_map_size": 8}},
  "model": {"embed_dim": 16, "heads": 2, "layers": 1, "num_beams": 16},
  "train": {"epochs": 2, "batch_size": 32},
  "latency": {"sensor_ms": {"camera": 33.3, "lidar": 50, "radar": 20, "gps": 100, "mmwave": 10},
              "inference_ms": 0.5},
  "sweep": ["mmwave", "gps,mmwave"]
}"#;

fn beamwork(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamwork"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = beamwork(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Run {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("cfg.json");
        fs::write(&config, CONFIG).unwrap();
        let out = dir.path().join("run");
        Run { _dir: dir, config, out }
    }

    fn args<'a>(&'a self, cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
        let mut v = vec![
            cmd,
            "--config",
            self.config.to_str().unwrap(),
            "--out",
            self.out.to_str().unwrap(),
        ];
        v.extend_from_slice(extra);
        v
    }
}

fn dir_bytes(p: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(p)
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_a_valid_deterministic_dataset() {
    let run = Run::new();
    let stdout = ok(&run.args("simulate", &[]));
    assert!(stdout.contains("wrote 200 samples"), "{stdout}");
    assert!(stdout.contains("contiguous"), "{stdout}");
    let manifest = Manifest::read(&run.out.join("dataset")).unwrap();
    assert_eq!(manifest.num_samples, 200);
    manifest.split.validate(200).unwrap();
    let first = dir_bytes(&run.out.join("dataset"));
    ok(&run.args("simulate", &[]));
    assert_eq!(first, dir_bytes(&run.out.join("dataset")));

    // straight road: the occupied labels form one circular band
    let ds = Dataset::open(&run.out.join("dataset")).unwrap();
    let mut used: Vec<usize> = ds.labels().to_vec();
    used.sort_unstable();
    used.dedup();
    assert!(is_circular_band(&used, 16), "{used:?}");
}

#[test]
fn pipeline_produces_comparable_rows_and_a_ranked_report() {
    let run = Run::new();
    ok(&run.args("simulate", &[]));
    ok(&run.args("train", &[]));
    ok(&run.args("eval", &["--modalities", "mmwave"]));
    ok(&run.args("eval", &["--modalities", "mmwave,gps"]));
    let a: MetricsReport =
        serde_json::from_str(&fs::read_to_string(run.out.join("eval/mmwave/metrics.json")).unwrap()).unwrap();
    let b: MetricsReport =
        serde_json::from_str(&fs::read_to_string(run.out.join("eval/gps+mmwave/metrics.json")).unwrap()).unwrap();
    assert_eq!(a.num_samples, b.num_samples);
    for slug in ["mmwave", "gps+mmwave"] {
        let csv = fs::read_to_string(run.out.join(format!("eval/{slug}/metrics.csv"))).unwrap();
        assert_eq!(csv.lines().next().unwrap(), METRICS_CSV_HEADER);
    }

    // a set with no checkpoint of its own falls back to a trained superset
    ok(&run.args("eval", &["--modalities", "gps"]));
    let stdout = ok(&run.args("report", &[]));
    assert!(stdout.contains("| 1 |"), "{stdout}");
    let summary = fs::read_to_string(run.out.join("report/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let scores: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]), "{scores:?}");
    for f in [
        "learning_curves.csv",
        "se_comparison.csv",
        "snr_gap.csv",
        "latency_stack.csv",
        "summary.md",
    ] {
        assert!(run.out.join("report").join(f).is_file(), "{f}");
    }
    for c in ["simulate", "train", "eval", "report"] {
        assert!(run.out.join(format!("config/{c}.json")).is_file());
    }

    // pinned inference latency makes eval and report idempotent
    let before = fs::read(run.out.join("report/summary.csv")).unwrap();
    ok(&run.args("eval", &["--modalities", "gps"]));
    ok(&run.args("report", &[]));
    assert_eq!(before, fs::read(run.out.join("report/summary.csv")).unwrap());
}

#[test]
fn missing_checkpoint_exits_3_naming_the_path() {
    let run = Run::new();
    ok(&run.args("simulate", &[]));
    let out = beamwork(&run.args("eval", &["--modalities", "radar"]));
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("checkpoints/radar/checkpoint.json"), "{err}");
}

#[test]
fn config_errors_exit_2_with_the_field() {
    let run = Run::new();
    fs::write(&run.config, r#"{"model": {"heads": -1}}"#).unwrap();
    let out = beamwork(&run.args("simulate", &[]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.heads"));

    let out = beamwork(&["eval", "--out", run.out.to_str().unwrap(), "--split", "holdout"]);
    assert_eq!(out.status.code(), Some(2));
    let out = beamwork(&["train", "--out", run.out.to_str().unwrap(), "--modalities", "sonar"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_3() {
    let run = Run::new();
    let out = beamwork(&run.args("train", &[]));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gradcheck_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["gradcheck", "--out", dir.path().to_str().unwrap()]);
    assert!(stdout.contains("checks passed"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
}
