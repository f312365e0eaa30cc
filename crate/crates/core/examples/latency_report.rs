//! Sensing plus inference latency for the paper's sensor combinations under
//! both combiners.

use beamwork::evaluator::{latency_report, Combiner, LatencyProfile};
use beamwork::Modality;

fn main() -> beamwork::Result<()> {
    let mut profile = LatencyProfile::default();
    profile.sensor_ms.insert(Modality::Radar, 20.0);
    profile.sensor_ms.insert(Modality::Gps, 100.0);
    profile.sensor_ms.insert(Modality::MmWave, 10.0);
    let inference_ms = 2.5;
    println!("{:<36} {:>8} {:>8}", "modalities", "max", "sum");
    for set in [
        "mmwave",
        "gps,mmwave",
        "lidar,mmwave",
        "camera,mmwave",
        "camera,lidar,radar",
        "all",
    ] {
        let set = set.parse()?;
        let max = latency_report(set, &profile, inference_ms)?;
        let sum = latency_report(
            set,
            &LatencyProfile {
                combiner: Combiner::Sum,
                ..profile.clone()
            },
            inference_ms,
        )?;
        println!(
            "{:<36} {:>8.1} {:>8.1}",
            set.display_name(),
            max.end_to_end_ms,
            sum.end_to_end_ms
        );
    }
    Ok(())
}
