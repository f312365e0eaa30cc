//! Trains the mmWave-only model on a noiseless synthetic set and evaluates it
//! on the held-out split.
//!
//! cargo run --release --example train_mmwave -- [num_samples] [epochs]

use std::time::Instant;

use beamwork::dataset::{simulate, Split};
use beamwork::evaluator::{evaluate_combination, EvalRequest, LatencyProfile, OraclePredictor};
use beamwork::model::ModelConfig;
use beamwork::scenario::ScenarioConfig;
use beamwork::trainer::{train, TrainConfig};
use beamwork::{Modality, ModalitySet};

fn main() -> beamwork::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let n = args.next().unwrap_or(2000);
    let epochs = args.next().unwrap_or(30);

    let mut scenario = ScenarioConfig::compact(n);
    scenario.sweep_noise = false;
    let ds = simulate(&scenario)?;

    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train(&cfg, &ModelConfig::default(), &ds)?;
    println!("trained {epochs} epochs in {:.1} s", start.elapsed().as_secs_f64());
    for (epoch, top1) in out.log.series(Split::Val, "top1") {
        let loss = out.log.value(epoch, Split::Train, "loss").unwrap_or(f64::NAN);
        println!("epoch {epoch:>2}  train loss {loss:.4}  val top1 {top1:.3}");
    }
    println!(
        "selected epoch {} (val top1 {:.3})",
        out.checkpoint.epoch, out.checkpoint.val_top1
    );

    let mut profile = LatencyProfile::default();
    profile.sensor_ms.insert(Modality::MmWave, 0.0);
    let req = EvalRequest {
        dataset: &ds,
        split: Split::Test,
        modalities: ModalitySet::single(Modality::MmWave),
        gps_stats: None,
        profile: &profile,
        batch_size: 256,
    };
    let ev = evaluate_combination(&out.checkpoint.model, &req)?;
    let oracle = evaluate_combination(
        &OraclePredictor {
            num_beams: ds.num_beams(),
        },
        &req,
    )?;
    let r = &ev.report;
    println!(
        "test: top1 {:.3} top3 {:.3} top5 {:.3} gain ratio {:.4} snr gap {:.3} dB (oracle SE {:.3})",
        r.top1, r.top3, r.top5, r.gain_ratio, r.mean_snr_gap_db, oracle.report.se_opt
    );
    Ok(())
}
