//! Accuracy, spectral-efficiency and latency metrics per sensor combination.

mod latency;
mod report;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use latency::{latency_report, sensing_latency, Combiner, LatencyBreakdown, LatencyProfile};
pub use report::{eval_score, write_report, ReportRow, ScoreWeights};

use crate::beamcore::{link_metrics, oracle_beam, rate_loss, snr_gap_db, BeamIndex, PowerVector, POWER_FLOOR};
use crate::dataset::{Batch, Dataset, Purpose, Split};
use crate::error::{Error, Result};
use crate::modality::{Modality, ModalitySet};
use crate::model::{predict_beam, BeamPosterior, FusionModel};
use crate::sensing::GpsStats;

/// Numerical guard inside the cross-entropy logarithm.
pub const LOG_EPS: f64 = 1e-12;

impl AsRef<[f64]> for BeamPosterior {
    fn as_ref(&self) -> &[f64] {
        self.probs()
    }
}

/// Whether `label` is among the `k` most probable beams, ranking ties by
/// lowest index.
pub fn in_top_k(probs: &[f64], label: BeamIndex, k: usize) -> bool {
    let p = probs[label];
    let ahead = probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < label))
        .count();
    ahead < k
}

pub fn topk_accuracy<P: AsRef<[f64]>>(posteriors: &[P], labels: &[BeamIndex], k: usize) -> Result<f64> {
    if posteriors.len() != labels.len() || posteriors.is_empty() {
        return Err(Error::invalid(format!(
            "{} posteriors vs {} labels",
            posteriors.len(),
            labels.len()
        )));
    }
    let beams = posteriors[0].as_ref().len();
    if k == 0 || k > beams {
        return Err(Error::invalid(format!("k = {k} outside 1..={beams}")));
    }
    let mut hits = 0usize;
    for (p, &l) in posteriors.iter().zip(labels) {
        let p = p.as_ref();
        if l >= p.len() {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        hits += usize::from(in_top_k(p, l, k));
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean of `−ln(p[label] + ε)`.
pub fn mean_cross_entropy<P: AsRef<[f64]>>(posteriors: &[P], labels: &[BeamIndex]) -> Result<f64> {
    if posteriors.len() != labels.len() || labels.is_empty() {
        return Err(Error::invalid("posterior/label length mismatch"));
    }
    let mut total = 0.0;
    for (p, &l) in posteriors.iter().zip(labels) {
        let p = p.as_ref();
        let v = *p
            .get(l)
            .ok_or_else(|| Error::invalid(format!("label {l} out of range")))?;
        total -= (v + LOG_EPS).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Spectral-efficiency summary of a set of beam choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeReport {
    pub se_pred: f64,
    pub se_opt: f64,
    pub mean_rate_loss: f64,
    pub mean_snr_gap_db: f64,
    pub gain_ratio: f64,
}

pub fn se_report(predicted: &[BeamIndex], powers: &[PowerVector], noise_var: f64) -> Result<SeReport> {
    if predicted.len() != powers.len() || powers.is_empty() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} power vectors",
            predicted.len(),
            powers.len()
        )));
    }
    let n = powers.len() as f64;
    let (mut se_pred, mut se_opt, mut loss, mut gap, mut ratio) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&j, p) in predicted.iter().zip(powers) {
        let best = oracle_beam(p)?;
        let p_opt = p.as_slice()[best];
        let p_pred = *p
            .as_slice()
            .get(j)
            .ok_or_else(|| Error::invalid(format!("predicted beam {j} out of range")))?;
        se_pred += link_metrics(p_pred, noise_var)?.rate;
        se_opt += link_metrics(p_opt, noise_var)?.rate;
        loss += rate_loss(p_opt, p_pred, noise_var)?;
        gap += snr_gap_db(p_opt, p_pred)?;
        ratio += p_pred.max(POWER_FLOOR) / p_opt.max(POWER_FLOOR);
    }
    Ok(SeReport {
        se_pred: se_pred / n,
        se_opt: se_opt / n,
        mean_rate_loss: loss / n,
        mean_snr_gap_db: gap / n,
        gain_ratio: ratio / n,
    })
}

/// All metrics for one sensor combination on one split. Contains no
/// wall-clock quantities, so reruns reproduce it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub modalities: ModalitySet,
    pub split: Split,
    pub num_samples: usize,
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
    pub se_opt: f64,
    pub se_pred: f64,
    pub mean_snr_gap_db: f64,
    pub mean_rate_loss: f64,
    pub gain_ratio: f64,
    pub mean_ce: f64,
    pub sensing_ms: f64,
}

pub const METRICS_CSV_HEADER: &str = "modalities,split,num_samples,top1,top3,top5,se_opt,se_pred,mean_snr_gap_db,mean_rate_loss,gain_ratio,mean_ce,sensing_ms";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.modalities.slug(),
            self.split.name(),
            self.num_samples,
            self.top1,
            self.top3,
            self.top5,
            self.se_opt,
            self.se_pred,
            self.mean_snr_gap_db,
            self.mean_rate_loss,
            self.gain_ratio,
            self.mean_ce,
            self.sensing_ms
        )
    }

    /// Checks the ordering and bound invariants every report must satisfy.
    pub fn check_invariants(&self) -> Result<()> {
        let tol = 1e-12;
        let ok = self.top1 <= self.top3 + tol
            && self.top3 <= self.top5 + tol
            && self.se_pred <= self.se_opt + tol
            && self.mean_snr_gap_db >= -tol
            && self.mean_rate_loss >= -tol
            && self.gain_ratio <= 1.0 + tol;
        if ok {
            Ok(())
        } else {
            Err(Error::NumericDomain(format!("report invariants violated: {self:?}")))
        }
    }
}

/// Aggregates posteriors into a report.
pub fn summarize(
    modalities: ModalitySet,
    split: Split,
    posteriors: &[BeamPosterior],
    labels: &[BeamIndex],
    powers: &[PowerVector],
    noise_var: f64,
    sensing_ms: f64,
) -> Result<MetricsReport> {
    let predicted: Vec<BeamIndex> = posteriors.iter().map(predict_beam).collect();
    let se = se_report(&predicted, powers, noise_var)?;
    let beams = posteriors.first().map_or(0, |p| p.probs().len());
    let top = |k: usize| topk_accuracy(posteriors, labels, k.min(beams));
    Ok(MetricsReport {
        modalities,
        split,
        num_samples: labels.len(),
        top1: top(1)?,
        top3: top(3)?,
        top5: top(5)?,
        se_opt: se.se_opt,
        se_pred: se.se_pred,
        mean_snr_gap_db: se.mean_snr_gap_db,
        mean_rate_loss: se.mean_rate_loss,
        gain_ratio: se.gain_ratio,
        mean_ce: mean_cross_entropy(posteriors, labels)?,
        sensing_ms,
    })
}

/// Anything that turns a batch into beam posteriors.
pub trait Predictor {
    fn predict(&self, batch: &Batch) -> Result<Vec<BeamPosterior>>;
}

impl Predictor for FusionModel<f32> {
    fn predict(&self, batch: &Batch) -> Result<Vec<BeamPosterior>> {
        FusionModel::predict(self, &batch.inputs)
    }
}

/// Test hook: a one-hot posterior on every sample's oracle beam.
#[derive(Debug, Clone, Copy)]
pub struct OraclePredictor {
    pub num_beams: usize,
}

impl Predictor for OraclePredictor {
    fn predict(&self, batch: &Batch) -> Result<Vec<BeamPosterior>> {
        batch
            .labels
            .iter()
            .map(|&l| {
                let mut p = vec![0.0; self.num_beams];
                p[l] = 1.0;
                BeamPosterior::new(p)
            })
            .collect()
    }
}

/// A report plus the measured latency decomposition.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub latency: LatencyBreakdown,
    pub predictions: Vec<BeamIndex>,
}

pub struct EvalRequest<'a> {
    pub dataset: &'a Dataset,
    pub split: Split,
    pub modalities: ModalitySet,
    pub gps_stats: Option<&'a GpsStats>,
    pub profile: &'a LatencyProfile,
    pub batch_size: usize,
}

/// Runs `predictor` over a split and aggregates every metric. Inference
/// latency is the mean forward-pass wall time per sample unless the profile
/// pins it.
pub fn evaluate_combination(predictor: &dyn Predictor, req: &EvalRequest<'_>) -> Result<Evaluation> {
    let ds = req.dataset;
    if let Some(m) = req.modalities.iter().find(|m| !ds.modalities().contains(*m)) {
        return Err(Error::MissingModality {
            sample: 0,
            modality: m.key().to_string(),
        });
    }
    if req.modalities.contains(Modality::Gps) && req.gps_stats.is_none() {
        return Err(Error::invalid("GPS evaluation needs training-split statistics"));
    }
    let sensing_ms = sensing_latency(req.modalities, req.profile)?;
    let range = ds.split().range(req.split);
    if range.is_empty() {
        return Err(Error::invalid(format!("split {} is empty", req.split.name())));
    }
    let indices: Vec<usize> = range.collect();
    let mut posteriors = Vec::with_capacity(indices.len());
    let (mut labels, mut powers) = (Vec::new(), Vec::new());
    let mut forward_s = 0.0;
    for chunk in indices.chunks(req.batch_size.max(1)) {
        let batch = ds.load_batch(chunk, req.modalities, req.gps_stats, Purpose::Evaluation)?;
        let start = Instant::now();
        let post = predictor.predict(&batch)?;
        forward_s += start.elapsed().as_secs_f64();
        posteriors.extend(post);
        labels.extend(batch.labels);
        powers.extend(batch.powers);
    }
    let report = summarize(
        req.modalities,
        req.split,
        &posteriors,
        &labels,
        &powers,
        ds.noise_var(),
        sensing_ms,
    )?;
    report.check_invariants()?;
    let measured_ms = 1e3 * forward_s / indices.len() as f64;
    let latency = latency_report(
        req.modalities,
        req.profile,
        req.profile.inference_ms.unwrap_or(measured_ms),
    )?;
    Ok(Evaluation {
        predictions: posteriors.iter().map(predict_beam).collect(),
        report,
        latency,
    })
}

#[cfg(test)]
mod tests;
