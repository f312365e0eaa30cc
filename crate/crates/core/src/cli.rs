//! Command-line front end.
//!
//! Run directory layout:
//!
//! ```text
//! RUN/config/<command>.json       echoed configuration
//! RUN/dataset/                    manifest.json + .bmt arrays
//! RUN/checkpoints/<set>/          checkpoint, train_log.csv, train_timing.csv
//! RUN/eval/<set>/                 metrics.json, metrics.csv, latency.json
//! RUN/report/                     summary.md and plot-ready CSVs
//! ```
//!
//! `<set>` is a modality-set slug such as `gps+mmwave`. Exit codes follow
//! [`Error::exit_code`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{is_circular_band, label_histogram, simulate, Dataset, Split};
use crate::error::{Error, Result};
use crate::evaluator::{
    evaluate_combination, write_report, EvalRequest, LatencyBreakdown, MetricsReport, ReportRow, METRICS_CSV_HEADER,
};
use crate::modality::ModalitySet;
use crate::model::{Checkpoint, CHECKPOINT_FILE};
use crate::tensor::gradcheck::{run_op_suite, GradCheckReport};
use crate::trainer::{end_to_end_gradcheck, train, TrainLog};

#[derive(Debug, Parser)]
#[command(name = "beamwork", version, about = "Multimodal mmWave beam-prediction workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into RUN/dataset.
    Simulate(Common),
    /// Train one model per modality set on RUN/dataset.
    Train(Common),
    /// Evaluate trained checkpoints on one split.
    Eval(EvalArgs),
    /// Rank all evaluated sets and write the comparison tables.
    Report(Common),
    /// Run the finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Modality set such as `gps,mmwave`; repeat for several sets.
    #[arg(long)]
    pub modalities: Vec<ModalitySet>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Optional run directory for gradcheck.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => cmd_simulate(&c),
        Command::Train(c) => cmd_train(&c),
        Command::Eval(e) => cmd_eval(&e.common, e.split),
        Command::Report(c) => cmd_report(&c),
        Command::Gradcheck(g) => cmd_gradcheck(g.out.as_deref(), g.seed),
    }
}

fn load_config(c: &Common, command: &str) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    write_text(&c.out.join("config").join(format!("{command}.json")), &cfg.to_json())?;
    Ok(cfg)
}

fn sets(c: &Common, cfg: &RunConfig) -> Vec<ModalitySet> {
    let mut v = if c.modalities.is_empty() {
        cfg.sweep.clone()
    } else {
        c.modalities.clone()
    };
    v.dedup();
    v
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("serializable") + "\n"),
    )
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn dataset_dir(run: &Path) -> PathBuf {
    run.join("dataset")
}

pub fn checkpoint_dir(run: &Path, set: ModalitySet) -> PathBuf {
    run.join("checkpoints").join(set.slug())
}

pub fn eval_dir(run: &Path, set: ModalitySet) -> PathBuf {
    run.join("eval").join(set.slug())
}

/// One-line-per-fact summary of the label distribution.
pub fn label_summary(ds: &Dataset) -> String {
    let hist = label_histogram(ds.labels(), ds.num_beams());
    let used: Vec<usize> = (0..hist.len()).filter(|&b| hist[b] > 0).collect();
    let mut s = String::new();
    let _ = writeln!(s, "beams used: {} of {}", used.len(), ds.num_beams());
    if let (Some(lo), Some(hi)) = (used.first(), used.last()) {
        let band = if is_circular_band(&used, ds.num_beams()) {
            "contiguous"
        } else {
            "fragmented"
        };
        let _ = writeln!(s, "label range: {lo}..={hi} ({band})");
    }
    let mut top: Vec<(usize, usize)> = used.iter().map(|&b| (hist[b], b)).collect();
    top.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let most: Vec<String> = top.iter().take(5).map(|(c, b)| format!("{b}:{c}")).collect();
    let _ = writeln!(s, "most frequent (beam:count): {}", most.join(" "));
    s
}

fn cmd_simulate(c: &Common) -> Result<()> {
    let cfg = load_config(c, "simulate")?;
    let ds = simulate(&cfg.scenario)?;
    let dir = dataset_dir(&c.out);
    ds.write(&dir)?;
    let sp = ds.split();
    println!(
        "wrote {} samples to {} (train {}, val {}, test {})",
        ds.len(),
        dir.display(),
        sp.train.len(),
        sp.val.len(),
        sp.test.len()
    );
    print!("{}", label_summary(&ds));
    Ok(())
}

fn cmd_train(c: &Common) -> Result<()> {
    let cfg = load_config(c, "train")?;
    let ds = Dataset::open(&dataset_dir(&c.out))?;
    for set in sets(c, &cfg) {
        let tc = crate::trainer::TrainConfig {
            modalities: set,
            ..cfg.train.clone()
        };
        let out = train(&tc, &cfg.model, &ds)?;
        let dir = checkpoint_dir(&c.out, set);
        out.checkpoint.save(&dir)?;
        out.log.write_csv(&dir.join("train_log.csv"))?;
        out.log.write_timing_csv(&dir.join("train_timing.csv"))?;
        println!(
            "{:<32} epoch {:>3}  val top1 {:.4}  -> {}",
            set.display_name(),
            out.checkpoint.epoch,
            out.checkpoint.val_top1,
            dir.display()
        );
    }
    Ok(())
}

/// Checkpoint for `set`: the exact match, else the smallest trained superset.
pub fn find_checkpoint(run: &Path, set: ModalitySet) -> Result<PathBuf> {
    let exact = checkpoint_dir(run, set);
    if exact.join(CHECKPOINT_FILE).is_file() {
        return Ok(exact);
    }
    let root = run.join("checkpoints");
    let mut best: Option<(usize, String, PathBuf)> = None;
    if let Ok(entries) = fs::read_dir(&root) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            let Ok(trained) = name.parse::<ModalitySet>() else {
                continue;
            };
            if !set.is_subset_of(trained) || !e.path().join(CHECKPOINT_FILE).is_file() {
                continue;
            }
            let key = (trained.len(), name.clone());
            if best.as_ref().is_none_or(|b| key < (b.0, b.1.clone())) {
                best = Some((key.0, key.1, e.path()));
            }
        }
    }
    best.map(|b| b.2)
        .ok_or(Error::MissingArtifact(exact.join(CHECKPOINT_FILE)))
}

fn cmd_eval(c: &Common, split: Split) -> Result<()> {
    let cfg = load_config(c, "eval")?;
    let wanted = sets(c, &cfg);
    cfg.check_latency(&wanted)?;
    let ds = Dataset::open(&dataset_dir(&c.out))?;
    for set in wanted {
        let ck = Checkpoint::load(&find_checkpoint(&c.out, set)?)?;
        let req = EvalRequest {
            dataset: &ds,
            split,
            modalities: set,
            gps_stats: ck.gps_stats.as_ref(),
            profile: &cfg.latency,
            batch_size: cfg.eval.batch_size,
        };
        let ev = evaluate_combination(&ck.model, &req)?;
        let dir = eval_dir(&c.out, set);
        write_json(&dir.join("metrics.json"), &ev.report)?;
        write_text(
            &dir.join("metrics.csv"),
            &format!("{METRICS_CSV_HEADER}\n{}\n", ev.report.csv_row()),
        )?;
        write_json(&dir.join("latency.json"), &ev.latency)?;
        let r = &ev.report;
        println!(
            "{:<32} top1 {:.4} top3 {:.4} top5 {:.4}  GR {:.4}  gap {:.3} dB  latency {:.1} ms",
            set.display_name(),
            r.top1,
            r.top3,
            r.top5,
            r.gain_ratio,
            r.mean_snr_gap_db,
            ev.latency.end_to_end_ms
        );
    }
    Ok(())
}

fn cmd_report(c: &Common) -> Result<()> {
    let cfg = load_config(c, "report")?;
    let root = c.out.join("eval");
    let mut dirs: Vec<PathBuf> = fs::read_dir(&root)
        .map_err(|_| Error::MissingArtifact(root.clone()))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.join("metrics.json").is_file())
        .collect();
    dirs.sort();
    if !c.modalities.is_empty() {
        let keep: Vec<String> = c.modalities.iter().map(|s| s.slug()).collect();
        dirs.retain(|d| keep.iter().any(|k| d.ends_with(k)));
    }
    if dirs.is_empty() {
        return Err(Error::MissingArtifact(root.join("<set>/metrics.json")));
    }
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for d in &dirs {
        let report: MetricsReport = read_json(&d.join("metrics.json"))?;
        let latency: LatencyBreakdown = read_json(&d.join("latency.json"))?;
        let log_path = checkpoint_dir(&c.out, report.modalities).join("train_log.csv");
        if log_path.is_file() {
            curves.push((report.modalities, TrainLog::read_csv(&log_path)?));
        }
        rows.push(ReportRow::new(report, latency, cfg.score_weights()));
    }
    let dir = c.out.join("report");
    write_report(rows, &curves, &dir)?;
    print!(
        "{}",
        fs::read_to_string(dir.join("summary.md")).map_err(|e| Error::io(&dir, e))?
    );
    Ok(())
}

fn cmd_gradcheck(out: Option<&Path>, seed: u64) -> Result<()> {
    let mut reports: Vec<GradCheckReport> = run_op_suite(seed)?;
    reports.push(end_to_end_gradcheck(seed)?);
    let mut csv = String::from("check,max_rel_error,passed\n");
    for r in &reports {
        println!(
            "{:<48} {:.3e}  {}",
            r.name,
            r.max_rel_error,
            if r.passed { "ok" } else { "FAIL" }
        );
        let _ = writeln!(csv, "{},{},{}", r.name, r.max_rel_error, r.passed);
    }
    if let Some(dir) = out {
        write_text(&dir.join("gradcheck.csv"), &csv)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("{} checks passed", reports.len());
        Ok(())
    } else {
        Err(Error::NumericDomain(format!(
            "gradient check failed: {}",
            failed.join(", ")
        )))
    }
}
