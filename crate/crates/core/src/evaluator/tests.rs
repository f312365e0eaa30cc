use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::simulate;
use crate::model::ModelConfig;
use crate::scenario::ScenarioConfig;

fn posterior(p: &[f64]) -> BeamPosterior {
    BeamPosterior::new(p.to_vec()).unwrap()
}

fn one_hot(b: usize, i: usize) -> BeamPosterior {
    let mut p = vec![0.0; b];
    p[i] = 1.0;
    posterior(&p)
}

fn full_profile() -> LatencyProfile {
    let mut p = LatencyProfile::default();
    p.sensor_ms.insert(Modality::Radar, 20.0);
    p.sensor_ms.insert(Modality::Gps, 100.0);
    p.sensor_ms.insert(Modality::MmWave, 10.0);
    p
}

fn small_dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        let mut cfg = ScenarioConfig::compact(50);
        cfg.num_beams = 16;
        simulate(&cfg).unwrap()
    })
}

#[test]
fn one_hot_on_label_is_perfect() {
    let labels = [3, 0, 7, 7];
    let posts: Vec<_> = labels.iter().map(|&l| one_hot(8, l)).collect();
    for k in [1, 3, 5, 8] {
        assert_eq!(topk_accuracy(&posts, &labels, k).unwrap(), 1.0);
    }
}

#[test]
fn k_equal_to_beam_count_always_hits() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let posts: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.random()).collect()).collect();
    let labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..6)).collect();
    assert_eq!(topk_accuracy(&posts, &labels, 6).unwrap(), 1.0);
    assert!(topk_accuracy(&posts, &labels, 7).is_err());
    assert!(topk_accuracy(&posts, &labels, 0).is_err());
}

#[test]
fn random_posteriors_hit_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let posts: Vec<Vec<f64>> = (0..n).map(|_| (0..64).map(|_| rng.random()).collect()).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..64)).collect();
    let top1 = topk_accuracy(&posts, &labels, 1).unwrap();
    assert!((top1 - 1.0 / 64.0).abs() < 0.005, "{top1}");
}

#[test]
fn top_k_ties_rank_lower_index_first() {
    let p = [0.25, 0.25, 0.25, 0.25];
    assert!(in_top_k(&p, 0, 1));
    assert!(!in_top_k(&p, 1, 1));
    assert!(in_top_k(&p, 2, 3));
    assert!(!in_top_k(&p, 3, 3));
}

#[test]
fn cross_entropy_of_uniform_is_log_b() {
    let u = posterior(&[0.125; 8]);
    let ce = mean_cross_entropy(&[u.clone(), u], &[0, 5]).unwrap();
    assert!((ce - 8f64.ln()).abs() < 1e-9);
}

#[test]
fn se_report_matches_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise = 0.05;
    let powers: Vec<PowerVector> = (0..30)
        .map(|_| PowerVector::new((0..8).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap())
        .collect();
    let pred: Vec<usize> = (0..30).map(|_| rng.random_range(0..8)).collect();
    let r = se_report(&pred, &powers, noise).unwrap();
    let (mut sp, mut so, mut gap, mut gr) = (0.0, 0.0, 0.0, 0.0);
    for (p, &j) in powers.iter().zip(&pred) {
        let v = p.as_slice();
        let best = v.iter().cloned().fold(f64::MIN, f64::max);
        sp += (1.0 + v[j] / noise).log2();
        so += (1.0 + best / noise).log2();
        gap += 10.0 * (best.max(1e-12) / v[j].max(1e-12)).log10();
        gr += v[j].max(1e-12) / best.max(1e-12);
    }
    let n = 30.0;
    assert!((r.se_pred - sp / n).abs() < 1e-9);
    assert!((r.se_opt - so / n).abs() < 1e-9);
    assert!((r.mean_rate_loss - (so - sp) / n).abs() < 1e-9);
    assert!((r.mean_snr_gap_db - gap / n).abs() < 1e-9);
    assert!((r.gain_ratio - gr / n).abs() < 1e-9);
    assert!(r.se_pred <= r.se_opt + 1e-12);
}

#[test]
fn oracle_choices_have_no_gap() {
    let powers = vec![PowerVector::new(vec![0.1, 0.9, 0.3]).unwrap(); 4];
    let r = se_report(&[1, 1, 1, 1], &powers, 0.01).unwrap();
    assert_eq!(r.mean_snr_gap_db, 0.0);
    assert_eq!(r.mean_rate_loss, 0.0);
    assert_eq!(r.gain_ratio, 1.0);
    assert_eq!(r.se_pred, r.se_opt);
}

#[test]
fn oracle_predictor_scores_perfectly() {
    let ds = small_dataset();
    let profile = full_profile();
    let req = EvalRequest {
        dataset: ds,
        split: Split::Test,
        modalities: ModalitySet::single(Modality::MmWave),
        gps_stats: None,
        profile: &profile,
        batch_size: 4,
    };
    let ev = evaluate_combination(
        &OraclePredictor {
            num_beams: ds.num_beams(),
        },
        &req,
    )
    .unwrap();
    let r = &ev.report;
    assert_eq!(r.top1, 1.0);
    assert_eq!(r.mean_snr_gap_db, 0.0);
    assert_eq!(r.mean_rate_loss, 0.0);
    assert_eq!(r.se_pred, r.se_opt);
    assert_eq!(r.gain_ratio, 1.0);
    assert_eq!(r.num_samples, ds.split().test.len());
    assert_eq!(ev.predictions, ds.labels()[ds.split().test.clone()].to_vec());
}

#[test]
fn every_nonempty_subset_evaluates() {
    let ds = small_dataset();
    let train: Vec<usize> = ds.split().train.clone().collect();
    let stats = ds.fit_gps_stats(&train, [true; 4]).unwrap();
    let model = FusionModel::<f32>::new(ModelConfig {
        embed_dim: 8,
        heads: 2,
        layers: 1,
        num_beams: ds.num_beams(),
        conv_channels: [2, 2, 2],
        pool_size: 2,
        ..ModelConfig::default()
    })
    .unwrap();
    let profile = full_profile();
    let sets = ModalitySet::all_nonempty();
    assert_eq!(sets.len(), 31);
    for set in sets {
        let req = EvalRequest {
            dataset: ds,
            split: Split::Test,
            modalities: set,
            gps_stats: Some(&stats),
            profile: &profile,
            batch_size: 8,
        };
        let ev = evaluate_combination(&model, &req).unwrap_or_else(|e| panic!("{set}: {e}"));
        ev.report.check_invariants().unwrap();
        assert_eq!(ev.report.modalities, set);
        assert!(ev.latency.end_to_end_ms >= ev.latency.sensing_ms);
    }
}

#[test]
fn gps_without_statistics_is_rejected() {
    let ds = small_dataset();
    let profile = full_profile();
    let req = EvalRequest {
        dataset: ds,
        split: Split::Test,
        modalities: ModalitySet::single(Modality::Gps),
        gps_stats: None,
        profile: &profile,
        batch_size: 8,
    };
    assert!(evaluate_combination(&OraclePredictor { num_beams: 16 }, &req).is_err());
}

fn row(slug: &str, score_parts: (f64, f64, f64)) -> ReportRow {
    let set: ModalitySet = slug.parse().unwrap();
    let report = MetricsReport {
        modalities: set,
        split: Split::Test,
        num_samples: 10,
        top1: 0.5,
        top3: 0.7,
        top5: 0.9,
        se_opt: 5.0,
        se_pred: 4.0,
        mean_snr_gap_db: score_parts.1,
        mean_rate_loss: 1.0,
        gain_ratio: 0.8,
        mean_ce: score_parts.0,
        sensing_ms: score_parts.2,
    };
    let latency = LatencyBreakdown {
        modalities: set,
        sensing_ms: score_parts.2,
        inference_ms: 0.0,
        end_to_end_ms: score_parts.2,
    };
    ReportRow::new(
        report,
        latency,
        ScoreWeights {
            lambda_gap: 0.1,
            lambda_tau: 0.01,
        },
    )
}

#[test]
fn ranking_orders_by_score_then_size() {
    let mut rows = vec![
        row("camera,lidar", (1.0, 0.0, 0.0)),
        row("gps", (2.0, 0.0, 0.0)),
        row("radar", (1.0, 0.0, 0.0)),
        row("mmwave", (0.5, 1.0, 10.0)),
        row("camera", (1.0, 0.0, 0.0)),
    ];
    // mmwave: 0.5 + 0.1 + 0.1 = 0.7
    assert!((rows[3].score - 0.7).abs() < 1e-12);
    report::rank(&mut rows);
    let order: Vec<String> = rows.iter().map(|r| r.report.modalities.slug()).collect();
    assert_eq!(order, ["mmwave", "camera", "radar", "camera+lidar", "gps"]);
}

#[test]
fn report_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = crate::trainer::TrainLog::default();
    log.push(1, Split::Val, "top1", 0.25);
    let rows = vec![row("gps", (2.0, 0.0, 0.0)), row("mmwave", (0.5, 1.0, 10.0))];
    let ranked = write_report(rows, &[("mmwave".parse().unwrap(), log)], dir.path()).unwrap();
    assert_eq!(ranked[0].report.modalities.slug(), "mmwave");
    for f in [
        "summary.md",
        "summary.csv",
        "se_comparison.csv",
        "snr_gap.csv",
        "latency_stack.csv",
        "learning_curves.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(1).unwrap().starts_with("1,mmwave,"));
    let curves = std::fs::read_to_string(dir.path().join("learning_curves.csv")).unwrap();
    assert!(curves.contains("mmwave,1,val,top1,0.25"));
}

#[test]
fn latency_defaults_and_missing_entries() {
    let p = LatencyProfile::default();
    let cam = sensing_latency(ModalitySet::single(Modality::Camera), &p).unwrap();
    assert!((cam - 1000.0 / 30.0).abs() < 1e-12);
    let both: ModalitySet = "camera,lidar".parse().unwrap();
    assert_eq!(sensing_latency(both, &p).unwrap(), 50.0);
    let err = sensing_latency(ModalitySet::single(Modality::Radar), &p).unwrap_err();
    assert!(err.to_string().contains("latency.sensor_ms.radar"), "{err}");
    let sum = LatencyProfile {
        combiner: Combiner::Sum,
        ..LatencyProfile::default()
    };
    assert!((sensing_latency(both, &sum).unwrap() - (50.0 + 1000.0 / 30.0)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn top_k_monotone_and_bounded(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 8), 1..20),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = rows.iter().map(|_| rng.random_range(0..8)).collect();
        let mut prev = 0.0;
        for k in 1..=8 {
            let a = topk_accuracy(&rows, &labels, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(a >= prev);
            prev = a;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn se_pred_never_exceeds_se_opt(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 5), 1..12),
        picks in prop::collection::vec(0usize..5, 12),
        noise in 1e-3f64..1.0,
    ) {
        let powers: Vec<PowerVector> = rows.into_iter().map(|r| PowerVector::new(r).unwrap()).collect();
        let pred = &picks[..powers.len()];
        let r = se_report(pred, &powers, noise).unwrap();
        prop_assert!(r.se_pred <= r.se_opt + 1e-12);
        prop_assert!(r.mean_snr_gap_db >= 0.0);
        prop_assert!(r.mean_rate_loss >= -1e-12);
        prop_assert!(r.gain_ratio <= 1.0 + 1e-12);
    }
}

#[test]
fn metrics_csv_has_header_width() {
    let r = row("gps", (1.0, 0.0, 0.0)).report;
    let cols = METRICS_CSV_HEADER.split(',').count();
    assert_eq!(r.csv_row().split(',').count(), cols);
}
