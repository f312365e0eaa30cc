//! Writes a small synthetic dataset, reopens it and loads a training batch.

use beamwork::dataset::{simulate, Dataset, Purpose};
use beamwork::scenario::ScenarioConfig;
use beamwork::ModalitySet;

fn main() -> beamwork::Result<()> {
    let dir = std::env::temp_dir().join("beamwork_dataset_roundtrip");
    let ds = simulate(&ScenarioConfig::compact(100))?;
    ds.write(&dir)?;
    let back = Dataset::open(&dir)?;
    let m = back.manifest();
    println!(
        "{} samples, {} beams, split {:?}",
        m.num_samples,
        back.num_beams(),
        m.split
    );
    for (name, entry) in &m.modalities {
        println!("  {name:<8} {:?} {:?} -> {}", entry.shape, entry.dtype, entry.file);
    }

    let train: Vec<usize> = back.split().train.clone().collect();
    let stats = back.fit_gps_stats(&train, [true; 4])?;
    let batch = back.load_batch(&train[..8], ModalitySet::FULL, Some(&stats), Purpose::Gradient)?;
    for (modality, t) in &batch.inputs {
        println!("  batch {modality:<7} {:?}", t.dims());
    }
    println!("labels {:?}", batch.labels);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
