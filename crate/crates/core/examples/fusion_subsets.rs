//! Runs one untrained fusion model on every nonempty sensor subset and shows
//! that the posterior stays normalized.

use beamwork::dataset::{simulate, Purpose};
use beamwork::model::{predict_beam, FusionModel, ModelConfig};
use beamwork::scenario::ScenarioConfig;
use beamwork::ModalitySet;

fn main() -> beamwork::Result<()> {
    let ds = simulate(&ScenarioConfig::compact(40))?;
    let train: Vec<usize> = ds.split().train.clone().collect();
    let stats = ds.fit_gps_stats(&train, [true; 4])?;
    let model = FusionModel::<f32>::new(ModelConfig {
        embed_dim: 32,
        ..ModelConfig::default()
    })?;
    let idx = &train[..4];
    for set in ModalitySet::all_nonempty() {
        let batch = ds.load_batch(idx, set, Some(&stats), Purpose::Gradient)?;
        let post = model.predict(&batch.inputs)?;
        let worst = post
            .iter()
            .map(|p| (p.probs().iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        let beams: Vec<usize> = post.iter().map(predict_beam).collect();
        println!("{:<36} max |sum - 1| {worst:.1e}  beams {beams:?}", set.display_name());
    }
    Ok(())
}
