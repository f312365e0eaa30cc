//! Synthesizes every sensor payload for one sample and prints what the
//! model-side preprocessing produces.

use beamwork::scenario::{generate_scene, ScenarioConfig};
use beamwork::sensing::{lidar_to_bev, radar_maps, synth_modalities, GpsStats};

fn main() -> beamwork::Result<()> {
    let cfg = ScenarioConfig::default();
    let index = 42;
    let scene = generate_scene(&cfg, index)?;
    let m = synth_modalities(&scene, &cfg, index)?;
    let s = &cfg.sensing;

    let mean: f32 = m.camera.pixels.iter().sum::<f32>() / m.camera.pixels.len() as f32;
    println!(
        "camera: {}x{} RGB, mean intensity {mean:.3}",
        m.camera.height, m.camera.width
    );

    let bev = lidar_to_bev(&m.lidar, s.bev_height, s.bev_width, s.bev_fov)?;
    let occupied = bev.grid.iter().filter(|&&v| v > 0.0).count();
    println!(
        "lidar: {} points -> {}x{} BEV, {occupied} occupied cells",
        m.lidar.len(),
        bev.height,
        bev.width
    );

    let maps = radar_maps(&m.radar);
    let (rr, ra) = maps.range_angle.argmax();
    let (vr, vv) = maps.range_velocity.argmax();
    println!(
        "radar: {}x{}x{} cube, RA peak (range {rr}, angle {ra}), RV peak (range {vr}, doppler {vv})",
        m.radar.antennas, m.radar.samples, m.radar.chirps
    );
    println!(
        "  vehicle range {:.1} m, radial speed {:.2} m/s",
        scene.range(),
        scene.radial_velocity()
    );

    let stats = GpsStats::fit(&[m.gps], s.gps_feature_mask)?;
    println!(
        "gps: lat {:.6} lon {:.6} speed {:.2} quality {} -> {} features",
        m.gps.latitude,
        m.gps.longitude,
        m.gps.speed,
        m.gps.quality,
        stats.normalize(&m.gps).len()
    );
    Ok(())
}
