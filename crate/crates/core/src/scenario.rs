//! Synthetic V2I scene generator.
//!
//! A fixed base station sits at the origin with its array boresight along +y.
//! Vehicles drive along a straight road parallel to the x axis at
//! `y ≈ bs_offset_m`, one pass after another, alternating direction. A wall
//! behind the road gives a specular reflection and a few static scatterers
//! provide weaker one-bounce paths. Each sample may be blocked by a truck
//! parked on the line of sight, which attenuates the LoS path.
//!
//! Everything is a pure function of `(global_seed, index)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamcore::{steering_vector, ComplexVec};
use crate::error::{Error, Result};
use crate::seed::{stream_rng, Stream};
use crate::sensing::SensingConfig;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_samples: usize,
    pub num_elements: usize,
    pub num_beams: usize,
    /// Receiver noise variance σ², used for SNR/rate and for sweep noise.
    pub noise_var: f64,
    /// Add measurement noise to the beam sweep. `false` gives noiseless powers.
    pub sweep_noise: bool,
    /// Perpendicular distance from the base station to the lane centre, m.
    pub bs_offset_m: f64,
    /// Half-length of the observed road segment, m.
    pub road_extent_m: f64,
    pub lane_jitter_m: f64,
    pub position_jitter_m: f64,
    /// `[min, max]` vehicle speed per pass, m/s.
    pub speed_range_mps: [f64; 2],
    pub sample_period_s: f64,
    /// y coordinate of the reflecting wall behind the road, m.
    pub wall_y_m: f64,
    pub num_paths: usize,
    /// Linear amplitude factor per reflection.
    pub path_decay: f64,
    pub blockage_prob: f64,
    /// Linear amplitude factor applied to the LoS path when blocked.
    pub blockage_attenuation: f64,
    pub carrier_hz: f64,
    pub global_seed: u64,
    pub sensing: SensingConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_samples: 2000,
            num_elements: 16,
            num_beams: 64,
            noise_var: 0.01,
            sweep_noise: true,
            bs_offset_m: 10.0,
            road_extent_m: 40.0,
            lane_jitter_m: 0.5,
            position_jitter_m: 0.05,
            speed_range_mps: [5.0, 12.0],
            sample_period_s: 0.02,
            wall_y_m: 25.0,
            num_paths: 3,
            path_decay: 0.5,
            blockage_prob: 0.1,
            blockage_attenuation: 0.05,
            carrier_hz: 60e9,
            global_seed: 0,
            sensing: SensingConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("scenario.{field}"), msg));
        if self.num_samples < 1 {
            return bad("num_samples", "must be >= 1");
        }
        if self.num_elements < 1 {
            return bad("num_elements", "must be >= 1");
        }
        if self.num_beams < 2 {
            return bad("num_beams", "must be >= 2");
        }
        if !(self.noise_var > 0.0) {
            return bad("noise_var", "must be > 0");
        }
        if !(self.bs_offset_m > 0.0) {
            return bad("bs_offset_m", "must be > 0");
        }
        if !(self.road_extent_m > 0.0) {
            return bad("road_extent_m", "must be > 0");
        }
        let [lo, hi] = self.speed_range_mps;
        if !(lo > 0.0 && hi >= lo) {
            return bad("speed_range_mps", "speeds must be > 0 with min <= max");
        }
        if !(self.sample_period_s > 0.0) {
            return bad("sample_period_s", "must be > 0");
        }
        if !(self.wall_y_m > self.bs_offset_m + self.lane_jitter_m + 1.0) {
            return bad("wall_y_m", "wall must lie behind the road");
        }
        if self.num_paths < 1 {
            return bad("num_paths", "must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.blockage_prob) {
            return bad("blockage_prob", "must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.blockage_attenuation) {
            return bad("blockage_attenuation", "must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.path_decay) {
            return bad("path_decay", "must be in [0, 1]");
        }
        if !(self.carrier_hz > 0.0) {
            return bad("carrier_hz", "must be > 0");
        }
        self.sensing.validate()
    }

    /// Reduced sensor resolutions for quick runs; beam geometry unchanged.
    pub fn compact(num_samples: usize) -> Self {
        let mut cfg = Self {
            num_samples,
            ..Self::default()
        };
        let s = &mut cfg.sensing;
        s.camera_height = 16;
        s.camera_width = 16;
        s.bev_height = 16;
        s.bev_width = 16;
        s.radar_samples = 32;
        s.radar_chirps = 8;
        s.radar_map_size = 8;
        cfg
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPath {
    /// Angle of arrival at the base station, radians from boresight.
    pub angle: f64,
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub index: usize,
    /// Vehicle position `(x, y)` in metres, base station at the origin.
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    /// First path is always line of sight.
    pub paths: Vec<PropagationPath>,
    pub blocked: bool,
    /// Centre of the blocking truck, present iff `blocked`.
    pub blocker: Option<[f64; 2]>,
}

impl SceneState {
    /// LoS angle measured from the array boresight (+y).
    pub fn los_angle(&self) -> f64 {
        self.position[0].atan2(self.position[1])
    }

    pub fn range(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    /// Velocity component along the line of sight, positive when receding.
    pub fn radial_velocity(&self) -> f64 {
        let r = self.range();
        if r == 0.0 {
            return 0.0;
        }
        (self.velocity[0] * self.position[0] + self.velocity[1] * self.position[1]) / r
    }
}

struct Pass {
    first_index: usize,
    len: usize,
    speed: f64,
    direction: f64,
    lane_y: f64,
}

fn pass_for(config: &ScenarioConfig, index: usize) -> Pass {
    let mut first = 0;
    let mut p = 0u64;
    loop {
        let mut rng = stream_rng(config.global_seed, p, Stream::Pass);
        let [lo, hi] = config.speed_range_mps;
        let speed = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let lane_y = config.bs_offset_m + config.lane_jitter_m * rng.random_range(-1.0..=1.0);
        let span = 2.0 * config.road_extent_m;
        let len = ((span / (speed * config.sample_period_s)).ceil() as usize).max(2);
        if index < first + len {
            return Pass {
                first_index: first,
                len,
                speed,
                direction: if p.is_multiple_of(2) { 1.0 } else { -1.0 },
                lane_y,
            };
        }
        first += len;
        p += 1;
    }
}

fn static_scatterers(config: &ScenarioConfig) -> Vec<[f64; 2]> {
    let count = config.num_paths.saturating_sub(2);
    (0..count as u64)
        .map(|k| {
            let mut rng = stream_rng(config.global_seed, k, Stream::Clutter);
            let x = rng.random_range(-config.road_extent_m..=config.road_extent_m);
            let y = rng.random_range((config.bs_offset_m + 3.0)..=(config.wall_y_m - 1.0));
            [x, y]
        })
        .collect()
}

fn path_phase(length: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * (length / wavelength).fract())
}

/// Builds the multipath description for a vehicle at `position`.
pub fn scene_paths(config: &ScenarioConfig, position: [f64; 2], blocked: bool) -> Vec<PropagationPath> {
    let lambda = config.wavelength_m();
    let reference = config.bs_offset_m;
    let [x, y] = position;
    let mut paths = Vec::with_capacity(config.num_paths);

    let d = x.hypot(y).max(1e-3);
    let mut los_amp = reference / d;
    if blocked {
        los_amp *= config.blockage_attenuation;
    }
    paths.push(PropagationPath {
        angle: x.atan2(y),
        gain: path_phase(d, lambda) * los_amp,
    });

    if config.num_paths >= 2 {
        // mirror image of the vehicle across the wall
        let image_y = 2.0 * config.wall_y_m - y;
        let d_img = x.hypot(image_y);
        paths.push(PropagationPath {
            angle: x.atan2(image_y),
            gain: -path_phase(d_img, lambda) * (config.path_decay * reference / d_img),
        });
    }

    for s in static_scatterers(config) {
        let len = (x - s[0]).hypot(y - s[1]) + s[0].hypot(s[1]);
        paths.push(PropagationPath {
            angle: s[0].atan2(s[1]),
            gain: path_phase(len, lambda) * (config.path_decay.powi(2) * reference / len),
        });
    }
    paths
}

pub fn generate_scene(config: &ScenarioConfig, index: usize) -> Result<SceneState> {
    if index >= config.num_samples {
        return Err(Error::invalid(format!(
            "scene index {index} out of range (num_samples = {})",
            config.num_samples
        )));
    }
    let pass = pass_for(config, index);
    let step = (index - pass.first_index) as f64;
    let frac = if pass.len > 1 {
        step / (pass.len - 1) as f64
    } else {
        0.0
    };

    let mut rng = stream_rng(config.global_seed, index as u64, Stream::Scene);
    let jitter = config.position_jitter_m;
    let jx = jitter * rng.random_range(-1.0..=1.0);
    let jy = jitter * rng.random_range(-1.0..=1.0);
    let blocked = rng.random::<f64>() < config.blockage_prob;

    let extent = config.road_extent_m;
    let x = pass.direction * (-extent + 2.0 * extent * frac) + jx;
    let y = pass.lane_y + jy;
    let position = [x, y];
    let velocity = [pass.direction * pass.speed, 0.0];

    Ok(SceneState {
        index,
        position,
        velocity,
        paths: scene_paths(config, position, blocked),
        blocked,
        blocker: blocked.then_some([0.5 * x, 0.5 * y]),
    })
}

/// `h = Σ_k g_k · a(θ_k)` over the scene's propagation paths.
pub fn scene_to_channel(scene: &SceneState, num_elements: usize) -> Result<ComplexVec> {
    if num_elements == 0 {
        return Err(Error::invalid("channel needs at least one element"));
    }
    let mut h = ComplexVec::zeros(num_elements);
    for path in &scene.paths {
        let a = steering_vector(num_elements, path.angle)?;
        h.add_scaled(&a, path.gain);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamcore::{build_dft_codebook, oracle_beam, sweep_powers};
    use std::collections::BTreeSet;

    fn single_path_config(n: usize) -> ScenarioConfig {
        ScenarioConfig {
            num_samples: n,
            num_paths: 1,
            blockage_prob: 0.0,
            sweep_noise: false,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig::default();
        for i in [0, 17, 999, 1999] {
            assert_eq!(generate_scene(&cfg, i).unwrap(), generate_scene(&cfg, i).unwrap());
        }
        assert!(generate_scene(&cfg, cfg.num_samples).is_err());
    }

    #[test]
    fn blockage_extremes() {
        let mut cfg = ScenarioConfig {
            num_samples: 200,
            blockage_prob: 0.0,
            ..ScenarioConfig::default()
        };
        assert!((0..200).all(|i| !generate_scene(&cfg, i).unwrap().blocked));
        cfg.blockage_prob = 1.0;
        assert!((0..200).all(|i| generate_scene(&cfg, i).unwrap().blocked));
    }

    #[test]
    fn blocked_scene_attenuates_los() {
        let cfg = ScenarioConfig::default();
        let open = scene_paths(&cfg, [3.0, 10.0], false);
        let shut = scene_paths(&cfg, [3.0, 10.0], true);
        let ratio = shut[0].gain.norm() / open[0].gain.norm();
        assert!((ratio - cfg.blockage_attenuation).abs() < 1e-12);
        // the wall reflection now dominates
        assert!(shut[1].gain.norm() > shut[0].gain.norm());
    }

    #[test]
    fn los_angle_matches_geometry() {
        let cfg = ScenarioConfig::default();
        for i in (0..cfg.num_samples).step_by(97) {
            let s = generate_scene(&cfg, i).unwrap();
            assert!((s.paths[0].angle - s.los_angle()).abs() < 1e-15);
            assert!(s.los_angle().abs() < PI / 2.0);
        }
    }

    #[test]
    fn single_path_channel_is_steering_vector() {
        let scene = SceneState {
            index: 0,
            position: [0.0, 1.0],
            velocity: [0.0, 0.0],
            paths: vec![PropagationPath {
                angle: 0.4,
                gain: Complex64::new(1.0, 0.0),
            }],
            blocked: false,
            blocker: None,
        };
        let h = scene_to_channel(&scene, 16).unwrap();
        assert_eq!(h, steering_vector(16, 0.4).unwrap());
    }

    #[test]
    fn two_symmetric_paths_sum() {
        let g = Complex64::new(0.7, 0.0);
        let scene = SceneState {
            index: 0,
            position: [0.0, 1.0],
            velocity: [0.0, 0.0],
            paths: vec![
                PropagationPath { angle: 0.3, gain: g },
                PropagationPath { angle: -0.3, gain: g },
            ],
            blocked: false,
            blocker: None,
        };
        let h = scene_to_channel(&scene, 8).unwrap();
        let a = steering_vector(8, 0.3).unwrap();
        let b = steering_vector(8, -0.3).unwrap();
        for n in 0..8 {
            let want = g * a.as_slice()[n] + g * b.as_slice()[n];
            assert!((h.as_slice()[n] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_gain_scene_gives_zero_powers() {
        let scene = SceneState {
            index: 0,
            position: [0.0, 1.0],
            velocity: [0.0, 0.0],
            paths: vec![PropagationPath {
                angle: 0.1,
                gain: Complex64::new(0.0, 0.0),
            }],
            blocked: false,
            blocker: None,
        };
        let cb = build_dft_codebook(16, 64).unwrap();
        let p = sweep_powers(&scene_to_channel(&scene, 16).unwrap(), &cb, 0.0, 0).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_picks_beam_nearest_los() {
        let cfg = single_path_config(600);
        let cb = build_dft_codebook(cfg.num_elements, cfg.num_beams).unwrap();
        for i in (0..cfg.num_samples).step_by(7) {
            let s = generate_scene(&cfg, i).unwrap();
            let h = scene_to_channel(&s, cfg.num_elements).unwrap();
            let p = sweep_powers(&h, &cb, 0.0, 0).unwrap();
            // nearest beam in spatial frequency (sin θ / 2), circular distance
            let target = s.los_angle().sin() / 2.0;
            let nearest = (0..cfg.num_beams)
                .min_by(|&a, &b| {
                    let da = circ_dist(a as f64 / cfg.num_beams as f64, target);
                    let db = circ_dist(b as f64 / cfg.num_beams as f64, target);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(oracle_beam(&p).unwrap(), nearest, "sample {i}");
        }
    }

    fn circ_dist(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d)
    }

    #[test]
    fn swept_sector_has_no_dead_labels() {
        let cfg = single_path_config(1500);
        let cb = build_dft_codebook(cfg.num_elements, cfg.num_beams).unwrap();
        let labels: BTreeSet<usize> = (0..cfg.num_samples)
            .map(|i| {
                let s = generate_scene(&cfg, i).unwrap();
                let h = scene_to_channel(&s, cfg.num_elements).unwrap();
                oracle_beam(&sweep_powers(&h, &cb, 0.0, 0).unwrap()).unwrap()
            })
            .collect();
        let missing: Vec<usize> = (0..cfg.num_beams).filter(|b| !labels.contains(b)).collect();
        // the beams that never win must form one contiguous (circular) gap
        assert!(crate::dataset::is_circular_band(&missing, cfg.num_beams), "{missing:?}");
        assert!(labels.len() > cfg.num_beams / 2);
    }
}
