//! Follows the first vehicle pass: position, LoS angle, blockage and the
//! oracle beam it induces.

use beamwork::beamcore::{build_dft_codebook, oracle_beam, sweep_powers};
use beamwork::scenario::{generate_scene, scene_to_channel, ScenarioConfig};

fn main() -> beamwork::Result<()> {
    let cfg = ScenarioConfig::default();
    let codebook = build_dft_codebook(cfg.num_elements, cfg.num_beams)?;
    println!("index      x(m)    y(m)  LoS(deg)  speed  blocked  beam");
    for i in (0..200).step_by(10) {
        let scene = generate_scene(&cfg, i)?;
        let h = scene_to_channel(&scene, cfg.num_elements)?;
        let p = sweep_powers(&h, &codebook, 0.0, 0)?;
        println!(
            "{i:>5}  {:>8.2}  {:>6.2}  {:>8.2}  {:>5.2}  {:>7}  {:>4}",
            scene.position[0],
            scene.position[1],
            scene.los_angle().to_degrees(),
            scene.speed(),
            scene.blocked,
            oracle_beam(&p)?
        );
    }
    Ok(())
}
