//! Training objective and loop.
//!
//! The loss is batch-mean cross-entropy plus `λ_gap` times the
//! posterior-expected SNR gap. Latency does not depend on the weights, so its
//! weight `λ_τ` only enters the evaluation-time ranking score.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamcore::{oracle_beam, BeamIndex, PowerVector};
use crate::dataset::{Batch, Dataset, Purpose, Split};
use crate::error::{Error, Result};
use crate::evaluator::{in_top_k, LOG_EPS};
use crate::modality::{Modality, ModalitySet};
use crate::model::{BeamPosterior, Checkpoint, FusionModel, ModelConfig};
use crate::seed::{derive_seed, Stream};
use crate::sensing::GpsStats;
use crate::tensor::gradcheck::{relative_error, GradCheckReport};
use crate::tensor::{Adam, AdamConfig, Element, Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_gap: f64,
    /// Weight per millisecond of end-to-end latency in the ranking score.
    pub lambda_tau: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub modalities: ModalitySet,
    /// Floor applied to powers before taking ratios.
    pub power_floor: f64,
    /// Batch size for validation passes.
    pub eval_batch_size: usize,
    /// GPS fields fed to the model; a run config copies this from the
    /// scenario's sensing section.
    #[serde(skip)]
    pub gps_feature_mask: [bool; 4],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_gap: 0.01,
            lambda_tau: 0.001,
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 30,
            seed: 0,
            modalities: ModalitySet::single(Modality::MmWave),
            power_floor: 1e-12,
            eval_batch_size: 256,
            gps_feature_mask: [true; 4],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(Error::config(format!("train.{f}"), m));
        if !(self.lambda_gap >= 0.0) {
            return bad("lambda_gap", "must be >= 0");
        }
        if !(self.lambda_tau >= 0.0) {
            return bad("lambda_tau", "must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.eval_batch_size == 0 {
            return bad("eval_batch_size", "must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.modalities.is_empty() {
            return bad("modalities", "must name at least one modality");
        }
        if !(self.adam.lr > 0.0) {
            return bad("adam.lr", "must be > 0");
        }
        if !(self.power_floor > 0.0) {
            return bad("power_floor", "must be > 0");
        }
        Ok(())
    }
}

/// `−ln(p[label] + ε)` for one posterior.
pub fn cross_entropy(posterior: &BeamPosterior, label: BeamIndex) -> Result<f64> {
    let p = posterior
        .probs()
        .get(label)
        .ok_or_else(|| Error::invalid(format!("label {label} out of range")))?;
    Ok(-(p + LOG_EPS).ln())
}

/// Per-beam SNR gap `10·log10(p[b*] / p[i])` in dB, with both powers floored.
pub fn beam_gaps(power: &PowerVector, floor: f64) -> Result<Vec<f64>> {
    let best = oracle_beam(power)?;
    let p_opt = power.as_slice()[best].max(floor);
    Ok(power
        .as_slice()
        .iter()
        .map(|&p| 10.0 * (p_opt / p.max(floor)).log10())
        .collect())
}

/// Posterior-expected SNR gap, `Σ_i π_i · gap_i`.
pub fn soft_snr_gap(posterior: &BeamPosterior, power: &PowerVector, floor: f64) -> Result<f64> {
    if posterior.probs().len() != power.len() {
        return Err(Error::shape("soft_snr_gap", &[posterior.probs().len()], &[power.len()]));
    }
    let gaps = beam_gaps(power, floor)?;
    Ok(posterior.probs().iter().zip(gaps).map(|(p, g)| p * g).sum())
}

/// Loss terms on a graph.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Var,
    pub ce: Var,
    pub soft_gap: Var,
}

/// Batch-mean `CE + λ_gap · soft_snr_gap` over `probs[n, B]`.
pub fn objective<T: Element>(
    g: &mut Graph<T>,
    probs: Var,
    labels: &[BeamIndex],
    powers: &[PowerVector],
    lambda_gap: f64,
    floor: f64,
) -> Result<Objective> {
    let dims = g.dims(probs).to_vec();
    if dims.len() != 2 || dims[0] != labels.len() || powers.len() != labels.len() {
        return Err(Error::shape("objective", &dims, &[labels.len(), powers.len()]));
    }
    let (n, b) = (dims[0], dims[1]);
    if let Some(l) = labels.iter().find(|&&l| l >= b) {
        return Err(Error::invalid(format!("label {l} out of range for {b} beams")));
    }
    let picked = g.gather(probs, labels)?;
    let logs = g.ln(picked, LOG_EPS)?;
    let mean_log = g.mean(logs);
    let ce = g.scale(mean_log, -1.0);
    let mut gaps = Vec::with_capacity(n * b);
    for p in powers {
        if p.len() != b {
            return Err(Error::shape("objective powers", &[b], &[p.len()]));
        }
        gaps.extend(beam_gaps(p, floor)?);
    }
    let gap_t = g.input(Tensor::from_f64_slice(&[n, b], &gaps)?);
    let weighted = g.mul(probs, gap_t)?;
    let summed = g.sum(weighted);
    let soft_gap = g.scale(summed, 1.0 / n as f64);
    let scaled_gap = g.scale(soft_gap, lambda_gap);
    let total = g.add(ce, scaled_gap)?;
    Ok(Objective { total, ce, soft_gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub split: Split,
    pub metric: String,
    pub value: f64,
}

/// Per-epoch metrics. Wall-clock times are kept apart from the entries so
/// the CSV is reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    entries: Vec<LogEntry>,
    epoch_seconds: Vec<f64>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,split,metric,value";

impl TrainLog {
    pub fn push(&mut self, epoch: usize, split: Split, metric: &str, value: f64) {
        self.entries.push(LogEntry {
            epoch,
            split,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn epoch_seconds(&self) -> &[f64] {
        &self.epoch_seconds
    }

    pub fn value(&self, epoch: usize, split: Split, metric: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.epoch == epoch && e.split == split && e.metric == metric)
            .map(|e| e.value)
    }

    pub fn series(&self, split: Split, metric: &str) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .filter(|e| e.split == split && e.metric == metric)
            .map(|e| (e.epoch, e.value))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRAIN_LOG_HEADER}\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{}", e.epoch, e.split.name(), e.metric, e.value);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("epoch,seconds\n");
        for (i, t) in self.epoch_seconds.iter().enumerate() {
            let _ = writeln!(s, "{},{t}", i + 1);
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        let mut lines = text.lines();
        if lines.next() != Some(TRAIN_LOG_HEADER) {
            return Err(Error::format(path, "unexpected header"));
        }
        let mut log = TrainLog::default();
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let parsed = (|| -> Option<LogEntry> {
                if f.len() != 4 {
                    return None;
                }
                Some(LogEntry {
                    epoch: f[0].parse().ok()?,
                    split: f[1].parse().ok()?,
                    metric: f[2].to_string(),
                    value: f[3].parse().ok()?,
                })
            })();
            log.entries
                .push(parsed.ok_or_else(|| Error::format(path, format!("line {}: '{line}'", n + 2)))?);
        }
        Ok(log)
    }
}

/// Running sums for one epoch and split.
#[derive(Default)]
struct Tally {
    n: usize,
    loss: f64,
    ce: f64,
    gap: f64,
    hits: [usize; 3],
}

impl Tally {
    fn add(&mut self, probs: &[f64], beams: usize, labels: &[BeamIndex], loss: f64, ce: f64, gap: f64) {
        let n = labels.len();
        self.n += n;
        self.loss += loss * n as f64;
        self.ce += ce * n as f64;
        self.gap += gap * n as f64;
        for (row, &l) in probs.chunks_exact(beams).zip(labels) {
            for (h, k) in self.hits.iter_mut().zip([1, 3, 5]) {
                *h += usize::from(in_top_k(row, l, k.min(beams)));
            }
        }
    }

    fn record(&self, log: &mut TrainLog, epoch: usize, split: Split) -> f64 {
        let n = self.n as f64;
        log.push(epoch, split, "loss", self.loss / n);
        log.push(epoch, split, "ce", self.ce / n);
        log.push(epoch, split, "soft_gap_db", self.gap / n);
        for (h, name) in self.hits.iter().zip(["top1", "top3", "top5"]) {
            log.push(epoch, split, name, *h as f64 / n);
        }
        self.hits[0] as f64 / n
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

fn cast_inputs<T: Element>(g: &mut Graph<T>, batch: &Batch) -> BTreeMap<Modality, Var> {
    batch.inputs.iter().map(|(m, t)| (*m, g.input(t.cast()))).collect()
}

/// One forward pass plus objective; returns the graph and handles.
fn step_graph(
    model: &FusionModel<f32>,
    batch: &Batch,
    cfg: &TrainConfig,
    trainable: bool,
) -> Result<(Graph<f32>, crate::model::Bound, Var, Objective)> {
    let mut g = Graph::new();
    let p = if trainable {
        model.bind(&mut g)
    } else {
        model.bind_frozen(&mut g)
    };
    let inputs = cast_inputs(&mut g, batch);
    let out = model.forward(&mut g, &p, &inputs)?;
    let obj = objective(
        &mut g,
        out.probs,
        &batch.labels,
        &batch.powers,
        cfg.lambda_gap,
        cfg.power_floor,
    )?;
    Ok((g, p, out.probs, obj))
}

fn scalar(g: &Graph<f32>, v: Var) -> f64 {
    g.value(v).data()[0] as f64
}

/// Trains a model on the training split, selecting the epoch with the best
/// validation Top-1 (earliest on ties).
pub fn train(cfg: &TrainConfig, model_cfg: &ModelConfig, ds: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.num_beams != ds.num_beams() {
        return Err(Error::config(
            "model.num_beams",
            format!(
                "model has {} beams, dataset has {}",
                model_cfg.num_beams,
                ds.num_beams()
            ),
        ));
    }
    let active = cfg.modalities;
    if let Some(m) = active.iter().find(|m| !ds.modalities().contains(*m)) {
        return Err(Error::MissingModality {
            sample: 0,
            modality: m.key().to_string(),
        });
    }
    let train_idx: Vec<usize> = ds.split().train.clone().collect();
    let val_idx: Vec<usize> = ds.split().val.clone().collect();
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::invalid("training needs non-empty train and validation splits"));
    }
    let gps_stats: Option<GpsStats> = if active.contains(Modality::Gps) {
        Some(ds.fit_gps_stats(&train_idx, cfg.gps_feature_mask)?)
    } else {
        None
    };
    train_with_stats(cfg, model_cfg, ds, gps_stats)
}

/// As [`train`], with GPS statistics supplied by the caller.
pub fn train_with_stats(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    ds: &Dataset,
    gps_stats: Option<GpsStats>,
) -> Result<TrainOutcome> {
    let active = cfg.modalities;
    if let Some(s) = &gps_stats {
        if s.width() != model_cfg.gps_width {
            return Err(Error::config(
                "model.gps_width",
                format!("GPS statistics cover {} fields", s.width()),
            ));
        }
    }
    let beams = model_cfg.num_beams;
    let mut init_cfg = model_cfg.clone();
    init_cfg.init_seed = derive_seed(cfg.seed, model_cfg.init_seed, Stream::ModelInit);
    let mut model = FusionModel::<f32>::new(init_cfg)?;
    let mut adam = Adam::new(cfg.adam);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, FusionModel<f32>)> = None;
    let mut order: Vec<usize> = ds.split().train.clone().collect();
    let val_idx: Vec<usize> = ds.split().val.clone().collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64, Stream::Shuffle));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut tally = Tally::default();
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = ds.load_batch(chunk, active, gps_stats.as_ref(), Purpose::Gradient)?;
            let diverged = |msg: String| Error::Training { epoch, batch: bi, msg };
            let (mut g, bound, probs, obj) = step_graph(&model, &batch, cfg, true).map_err(|e| match e {
                Error::NumericDomain(m) => diverged(m),
                e => e,
            })?;
            let loss = scalar(&g, obj.total);
            if !loss.is_finite() {
                return Err(diverged(format!("non-finite loss {loss}")));
            }
            g.backward(obj.total)?;
            let grads = model.params().grads(&g, &bound);
            if grads.iter().any(|t| t.data().iter().any(|v| !v.is_finite())) {
                return Err(diverged("non-finite gradient".into()));
            }
            let pv: Vec<f64> = g.value(probs).to_f64_vec();
            tally.add(
                &pv,
                beams,
                &batch.labels,
                loss,
                scalar(&g, obj.ce),
                scalar(&g, obj.soft_gap),
            );
            adam.step(model.params_mut().tensors_mut(), &grads)?;
            if model
                .params()
                .tensors()
                .iter()
                .any(|t| t.data().iter().any(|v| !v.is_finite()))
            {
                return Err(diverged("non-finite parameters after update".into()));
            }
        }
        tally.record(&mut log, epoch, Split::Train);

        let mut val = Tally::default();
        for chunk in val_idx.chunks(cfg.eval_batch_size) {
            let batch = ds.load_batch(chunk, active, gps_stats.as_ref(), Purpose::Selection)?;
            let (g, _, probs, obj) = step_graph(&model, &batch, cfg, false)?;
            let pv: Vec<f64> = g.value(probs).to_f64_vec();
            val.add(
                &pv,
                beams,
                &batch.labels,
                scalar(&g, obj.total),
                scalar(&g, obj.ce),
                scalar(&g, obj.soft_gap),
            );
        }
        let val_top1 = val.record(&mut log, epoch, Split::Val);
        if best.as_ref().is_none_or(|(b, _, _)| val_top1 > *b) {
            best = Some((val_top1, epoch, model.clone()));
        }
        log.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    let (val_top1, epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            modalities: active,
            gps_stats,
            epoch,
            val_top1,
        },
        log,
    })
}

/// Configuration of the tiny model used for the end-to-end gradient check.
pub fn gradcheck_model_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        num_beams: 8,
        layers: 2,
        heads: 2,
        ffn_mult: 4,
        conv_channels: [2, 3, 2],
        pool_size: 2,
        gps_width: 4,
        init_seed: 5,
        ..ModelConfig::default()
    }
}

pub const END_TO_END_TOLERANCE: f64 = 1e-3;

/// Checks `f32` analytic gradients of the full objective against `f64`
/// central differences on a random 1% of the parameters of a `d = 8` model
/// fed all five modalities.
pub fn end_to_end_gradcheck(seed: u64) -> Result<GradCheckReport> {
    let cfg = gradcheck_model_config();
    let model32 = FusionModel::<f32>::new(cfg.clone())?;
    let model64: FusionModel<f64> = model32.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3;
    let mut inputs = BTreeMap::new();
    for m in Modality::ALL {
        let dims = match m {
            Modality::MmWave => vec![n, cfg.num_beams],
            Modality::Gps => vec![n, cfg.gps_width],
            Modality::Camera => vec![n, 3, 8, 8],
            Modality::Lidar => vec![n, 1, 8, 8],
            Modality::Radar => vec![n, 2, 8, 8],
        };
        let count = dims.iter().product();
        // f32-representable values so both precisions see identical inputs
        let data: Vec<f64> = (0..count).map(|_| rng.random_range(0.0f32..1.0) as f64).collect();
        inputs.insert(m, Tensor::<f64>::new(dims, data)?);
    }
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.num_beams)).collect();
    let powers: Vec<PowerVector> = (0..n)
        .map(|_| PowerVector::new((0..cfg.num_beams).map(|_| rng.random_range(0.01..1.0)).collect()))
        .collect::<Result<_>>()?;
    let lambda_gap = 0.1;

    fn loss_of<T: Element>(
        model: &FusionModel<T>,
        inputs: &BTreeMap<Modality, Tensor<f64>>,
        labels: &[usize],
        powers: &[PowerVector],
        lambda_gap: f64,
        trainable: bool,
    ) -> Result<(Graph<T>, crate::model::Bound, Var)> {
        let mut g = Graph::new();
        let p = if trainable {
            model.bind(&mut g)
        } else {
            model.bind_frozen(&mut g)
        };
        let vars = inputs.iter().map(|(m, t)| (*m, g.input(t.cast()))).collect();
        let out = model.forward(&mut g, &p, &vars)?;
        let obj = objective(&mut g, out.probs, labels, powers, lambda_gap, 1e-12)?;
        Ok((g, p, obj.total))
    }

    let (mut g, bound, loss) = loss_of(&model32, &inputs, &labels, &powers, lambda_gap, true)?;
    g.backward(loss)?;
    let grads = model32.params().grads(&g, &bound);

    // sample ~1% of all scalar parameters, at least 32
    let total = model32.params().numel();
    let picks = (total / 100).max(32).min(total);
    let mut flat: Vec<(usize, usize)> = Vec::with_capacity(total);
    for (ti, t) in model32.params().tensors().iter().enumerate() {
        flat.extend((0..t.numel()).map(|j| (ti, j)));
    }
    flat.shuffle(&mut rng);
    flat.truncate(picks);

    let h = 1e-6;
    let mut analytic = Vec::with_capacity(picks);
    let mut numeric = Vec::with_capacity(picks);
    let mut probe = model64.clone();
    for &(ti, j) in &flat {
        analytic.push(grads[ti].data()[j] as f64);
        let base = probe.params().tensors()[ti].data()[j];
        probe.params_mut().tensors_mut()[ti].data_mut()[j] = base + h;
        let (gu, _, lu) = loss_of(&probe, &inputs, &labels, &powers, lambda_gap, false)?;
        probe.params_mut().tensors_mut()[ti].data_mut()[j] = base - h;
        let (gd, _, ld) = loss_of(&probe, &inputs, &labels, &powers, lambda_gap, false)?;
        probe.params_mut().tensors_mut()[ti].data_mut()[j] = base;
        numeric.push((gu.value(lu).data()[0] - gd.value(ld).data()[0]) / (2.0 * h));
    }
    let err = relative_error(&analytic, &numeric);
    Ok(GradCheckReport {
        name: format!("end_to_end_d8 ({picks} of {total} parameters)"),
        max_rel_error: err,
        passed: err <= END_TO_END_TOLERANCE,
    })
}
