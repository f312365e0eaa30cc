use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ScenarioConfig, SceneState};
use crate::seed::{stream_rng, Stream};

const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const GPS_FIELDS: [&str; 4] = ["latitude", "longitude", "speed", "quality"];

/// Quality indicator values: 4 = RTK fixed, 5 = RTK float.
pub const QUALITY_FIXED: f64 = 4.0;
pub const QUALITY_FLOAT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFeatures {
    pub latitude: f64,
    pub longitude: f64,
    pub speed: f64,
    pub quality: f64,
}

impl GpsFeatures {
    pub fn new(latitude: f64, longitude: f64, speed: f64, quality: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude)
            || !(-180.0..=180.0).contains(&longitude)
            || !(speed >= 0.0)
            || !quality.is_finite()
        {
            return Err(Error::invalid(format!(
                "GPS fix out of range: lat {latitude}, lon {longitude}, speed {speed}, quality {quality}"
            )));
        }
        Ok(Self {
            latitude,
            longitude,
            speed,
            quality,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.latitude, self.longitude, self.speed, self.quality]
    }
}

/// Local equirectangular projection around `anchor = [lat, lon]`: x east, y north, metres.
pub fn local_to_gps(anchor: [f64; 2], x: f64, y: f64) -> (f64, f64) {
    let lat0 = anchor[0].to_radians();
    let lat = anchor[0] + (y / EARTH_RADIUS_M).to_degrees();
    let lon = anchor[1] + (x / (EARTH_RADIUS_M * lat0.cos())).to_degrees();
    (lat, lon)
}

pub fn gps_to_local(anchor: [f64; 2], lat: f64, lon: f64) -> (f64, f64) {
    let lat0 = anchor[0].to_radians();
    let y = (lat - anchor[0]).to_radians() * EARTH_RADIUS_M;
    let x = (lon - anchor[1]).to_radians() * EARTH_RADIUS_M * lat0.cos();
    (x, y)
}

pub fn synth_gps(scene: &SceneState, config: &ScenarioConfig, index: usize) -> GpsFeatures {
    let s = &config.sensing;
    let mut rng = stream_rng(config.global_seed, index as u64, Stream::Gps);
    let float_fix = rng.random::<f64>() < 0.1;
    let std = if float_fix {
        3.0 * s.gps_noise_std_m
    } else {
        s.gps_noise_std_m
    };
    let (mut x, mut y) = (scene.position[0], scene.position[1]);
    let mut speed = scene.speed();
    if std > 0.0 {
        let n = Normal::new(0.0, std).expect("finite std");
        x += n.sample(&mut rng);
        y += n.sample(&mut rng);
    }
    if s.gps_speed_noise_std > 0.0 {
        let n = Normal::new(0.0, s.gps_speed_noise_std).expect("finite std");
        speed = (speed + n.sample(&mut rng)).max(0.0);
    }
    let (latitude, longitude) = local_to_gps(s.gps_anchor, x, y);
    GpsFeatures {
        latitude,
        longitude,
        speed,
        quality: if float_fix { QUALITY_FLOAT } else { QUALITY_FIXED },
    }
}

/// Per-field standardization statistics, fitted on training samples only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsStats {
    pub mean: [f64; 4],
    pub std: [f64; 4],
    pub mask: [bool; 4],
}

impl GpsStats {
    pub fn fit(samples: &[GpsFeatures], mask: [bool; 4]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("GPS statistics need at least one sample"));
        }
        let n = samples.len() as f64;
        let mut mean = [0.0; 4];
        for g in samples {
            for (m, v) in mean.iter_mut().zip(g.as_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 4];
        for g in samples {
            for (k, v) in g.as_array().iter().enumerate() {
                var[k] += (v - mean[k]).powi(2);
            }
        }
        let std = var.map(|v| (v / n).sqrt());
        Ok(Self { mean, std, mask })
    }

    pub fn width(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(value − mean) / std` for each enabled field; 0 when `std < 1e-12`.
    pub fn normalize(&self, g: &GpsFeatures) -> Vec<f64> {
        g.as_array()
            .iter()
            .enumerate()
            .filter(|(k, _)| self.mask[*k])
            .map(|(k, v)| {
                if self.std[k] < 1e-12 {
                    0.0
                } else {
                    (v - self.mean[k]) / self.std[k]
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scene;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_fix_recovers_position() {
        let mut cfg = ScenarioConfig::default();
        cfg.sensing.gps_noise_std_m = 0.0;
        cfg.sensing.gps_speed_noise_std = 0.0;
        for i in [0, 33, 401] {
            let scene = generate_scene(&cfg, i).unwrap();
            let g = synth_gps(&scene, &cfg, i);
            let (x, y) = gps_to_local(cfg.sensing.gps_anchor, g.latitude, g.longitude);
            assert!((x - scene.position[0]).abs() < 1e-6);
            assert!((y - scene.position[1]).abs() < 1e-6);
            assert!((g.speed - scene.speed()).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_input_normalizes_to_zero() {
        let samples = vec![
            GpsFeatures::new(10.0, 20.0, 3.0, 4.0).unwrap(),
            GpsFeatures::new(12.0, 22.0, 5.0, 4.0).unwrap(),
        ];
        let stats = GpsStats::fit(&samples, [true; 4]).unwrap();
        let mid = GpsFeatures::new(11.0, 21.0, 4.0, 4.0).unwrap();
        assert_eq!(stats.normalize(&mid), vec![0.0; 4]);
        // quality is constant in the training set
        let other = GpsFeatures::new(11.0, 21.0, 4.0, 5.0).unwrap();
        assert_eq!(stats.normalize(&other)[3], 0.0);
    }

    #[test]
    fn mask_drops_fields() {
        let samples = vec![GpsFeatures::new(1.0, 2.0, 3.0, 4.0).unwrap(); 3];
        let stats = GpsStats::fit(&samples, [true, true, false, false]).unwrap();
        assert_eq!(stats.width(), 2);
        assert_eq!(stats.normalize(&samples[0]).len(), 2);
    }

    #[test]
    fn standardized_training_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<GpsFeatures> = (0..500)
            .map(|_| {
                GpsFeatures::new(
                    37.0 + rng.random::<f64>() * 1e-3,
                    127.0 + rng.random::<f64>() * 1e-3,
                    rng.random::<f64>() * 15.0,
                    if rng.random::<bool>() { 4.0 } else { 5.0 },
                )
                .unwrap()
            })
            .collect();
        let stats = GpsStats::fit(&samples, [true; 4]).unwrap();
        let rows: Vec<Vec<f64>> = samples.iter().map(|g| stats.normalize(g)).collect();
        for k in 0..4 {
            let m = rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
            let v = rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / rows.len() as f64;
            assert!(m.abs() < 1e-6, "field {k} mean {m}");
            assert!((v.sqrt() - 1.0).abs() < 1e-6, "field {k} std {}", v.sqrt());
        }
    }

    #[test]
    fn rejects_out_of_range_fix() {
        assert!(GpsFeatures::new(91.0, 0.0, 0.0, 4.0).is_err());
        assert!(GpsFeatures::new(0.0, 0.0, -1.0, 4.0).is_err());
    }
}
