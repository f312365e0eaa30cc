use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LatencyBreakdown, MetricsReport};
use crate::error::{Error, Result};
use crate::modality::ModalitySet;
use crate::trainer::TrainLog;

/// Weights of the configuration-ranking score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub lambda_gap: f64,
    /// Per millisecond of end-to-end latency.
    pub lambda_tau: f64,
}

/// `CE + λ_gap · SNR gap + λ_τ · end-to-end latency`; lower is better.
pub fn eval_score(report: &MetricsReport, latency: &LatencyBreakdown, w: ScoreWeights) -> f64 {
    report.mean_ce + w.lambda_gap * report.mean_snr_gap_db + w.lambda_tau * latency.end_to_end_ms
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub report: MetricsReport,
    pub latency: LatencyBreakdown,
    pub score: f64,
}

impl ReportRow {
    pub fn new(report: MetricsReport, latency: LatencyBreakdown, w: ScoreWeights) -> Self {
        let score = eval_score(&report, &latency, w);
        Self { report, latency, score }
    }
}

/// Orders rows by score, then by fewer modalities, then canonically.
pub fn rank(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.report.modalities.len().cmp(&b.report.modalities.len()))
            .then(a.report.modalities.slug().cmp(&b.report.modalities.slug()))
    });
}

fn write(dir: &Path, name: &str, body: String) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Writes the ranked summary table and the plot-ready CSVs into `dir`.
/// Returns the rows in ranked order.
pub fn write_report(
    mut rows: Vec<ReportRow>,
    curves: &[(ModalitySet, TrainLog)],
    dir: &Path,
) -> Result<Vec<ReportRow>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    rank(&mut rows);

    let mut md = String::from(
        "| Rank | Modalities | Top-1 | Top-3 | Top-5 | SE_pred | SE_opt | E[ΔR] | SNR gap (dB) | GR | Latency (ms) | Score |\n\
         |---:|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n",
    );
    let mut csv = String::from(
        "rank,modalities,split,top1,top3,top5,se_pred,se_opt,mean_rate_loss,mean_snr_gap_db,gain_ratio,mean_ce,sensing_ms,inference_ms,end_to_end_ms,eval_score\n",
    );
    let mut se = String::from("modalities,se_opt,se_pred\n");
    let mut gap = String::from("modalities,mean_snr_gap_db,mean_rate_loss,gain_ratio\n");
    let mut stack = String::from("modalities,component,ms\n");
    for (i, row) in rows.iter().enumerate() {
        let r = &row.report;
        let l = &row.latency;
        let _ = writeln!(
            md,
            "| {} | {} | {:.2} | {:.2} | {:.2} | {:.3} | {:.3} | {:.4} | {:.2} | {:.3} | {:.1} | {:.4} |",
            i + 1,
            r.modalities.display_name(),
            r.top1,
            r.top3,
            r.top5,
            r.se_pred,
            r.se_opt,
            r.mean_rate_loss,
            r.mean_snr_gap_db,
            r.gain_ratio,
            l.end_to_end_ms,
            row.score
        );
        let slug = r.modalities.slug();
        let _ = writeln!(
            csv,
            "{},{slug},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            r.split.name(),
            r.top1,
            r.top3,
            r.top5,
            r.se_pred,
            r.se_opt,
            r.mean_rate_loss,
            r.mean_snr_gap_db,
            r.gain_ratio,
            r.mean_ce,
            l.sensing_ms,
            l.inference_ms,
            l.end_to_end_ms,
            row.score
        );
        let _ = writeln!(se, "{slug},{},{}", r.se_opt, r.se_pred);
        let _ = writeln!(
            gap,
            "{slug},{},{},{}",
            r.mean_snr_gap_db, r.mean_rate_loss, r.gain_ratio
        );
        let _ = writeln!(stack, "{slug},sensing,{}", l.sensing_ms);
        let _ = writeln!(stack, "{slug},inference,{}", l.inference_ms);
    }
    let mut lc = String::from("modalities,epoch,split,metric,value\n");
    for (set, log) in curves {
        for e in log.entries() {
            let _ = writeln!(
                lc,
                "{},{},{},{},{}",
                set.slug(),
                e.epoch,
                e.split.name(),
                e.metric,
                e.value
            );
        }
    }
    write(dir, "summary.md", md)?;
    write(dir, "summary.csv", csv)?;
    write(dir, "se_comparison.csv", se)?;
    write(dir, "snr_gap.csv", gap)?;
    write(dir, "latency_stack.csv", stack)?;
    write(dir, "learning_curves.csv", lc)?;
    Ok(rows)
}
