use std::thread;

use super::{Dataset, DatasetMeta, RadarImage, SampleRecord};
use crate::beamcore::{build_dft_codebook, sweep_powers, Codebook};
use crate::error::Result;
use crate::scenario::{generate_scene, scene_to_channel, ScenarioConfig};
use crate::seed::{derive_seed, Stream};
use crate::sensing::{lidar_to_bev, radar_input, radar_maps, synth_modalities};

/// Simulates one sample end to end: scene, beam sweep and all sensor payloads.
pub fn synthesize_record(config: &ScenarioConfig, codebook: &Codebook, index: usize) -> Result<SampleRecord> {
    let scene = generate_scene(config, index)?;
    let channel = scene_to_channel(&scene, config.num_elements)?;
    let sweep_var = if config.sweep_noise { config.noise_var } else { 0.0 };
    let seed = derive_seed(config.global_seed, index as u64, Stream::SweepNoise);
    let power = sweep_powers(&channel, codebook, sweep_var, seed)?;
    let raw = synth_modalities(&scene, config, index)?;
    let s = &config.sensing;
    let mut record = SampleRecord::new(index, &power)?;
    record.bev = Some(lidar_to_bev(&raw.lidar, s.bev_height, s.bev_width, s.bev_fov)?);
    record.radar = Some(RadarImage {
        size: s.radar_map_size,
        data: radar_input(&radar_maps(&raw.radar), s.radar_map_size),
    });
    record.camera = Some(raw.camera);
    record.gps = Some(raw.gps);
    Ok(record)
}

/// Simulates the full configured dataset. Samples are independent, so the
/// work is spread over the available cores; output does not depend on it.
pub fn simulate(config: &ScenarioConfig) -> Result<Dataset> {
    config.validate()?;
    let codebook = build_dft_codebook(config.num_elements, config.num_beams)?;
    let n = config.num_samples;
    let workers = thread::available_parallelism().map_or(1, |p| p.get()).min(n.max(1));
    let chunk = n.div_ceil(workers);
    let parts: Vec<Result<Vec<SampleRecord>>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let codebook = &codebook;
                scope.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n))
                        .map(|i| synthesize_record(config, codebook, i))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    });
    let mut records = Vec::with_capacity(n);
    for p in parts {
        records.extend(p?);
    }
    Dataset::from_records(
        &records,
        &DatasetMeta {
            num_elements: config.num_elements,
            noise_var: config.noise_var,
        },
    )
}
