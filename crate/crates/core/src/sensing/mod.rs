//! Sensor payloads for one synchronized timestamp.
//!
//! The synthesizers render stand-ins for the camera, LiDAR, FMCW radar and GPS
//! that stay geometrically consistent with a [`SceneState`]; the preprocessing
//! functions ([`lidar_to_bev`], [`radar_maps`], [`GpsStats::normalize`]) are the
//! same ones applied to converted real recordings.

mod camera;
mod gps;
mod lidar;
mod radar;

use serde::{Deserialize, Serialize};

pub use camera::{render_camera, CameraFrame};
pub use gps::{gps_to_local, local_to_gps, synth_gps, GpsFeatures, GpsStats, GPS_FIELDS};
pub use lidar::{lidar_to_bev, synth_point_cloud, BevRaster, Fov, PointCloud};
pub use radar::{radar_input, radar_maps, radar_spectra, resize_bilinear, synth_radar, Map2, RadarCube, RadarMaps};

use crate::error::{Error, Result};
use crate::scenario::{ScenarioConfig, SceneState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub camera_height: usize,
    pub camera_width: usize,
    pub camera_fov_deg: f64,
    pub camera_mount_height_m: f64,
    pub camera_noise: f64,
    pub lidar_range_m: f64,
    pub bev_height: usize,
    pub bev_width: usize,
    pub bev_fov: Fov,
    pub radar_antennas: usize,
    pub radar_samples: usize,
    pub radar_chirps: usize,
    pub radar_max_range_m: f64,
    pub radar_max_speed_mps: f64,
    pub radar_noise_std: f64,
    /// Side length of the square RA/RV maps fed to the radar encoder.
    pub radar_map_size: usize,
    pub gps_noise_std_m: f64,
    pub gps_speed_noise_std: f64,
    /// Geodetic anchor of the base station, degrees.
    pub gps_anchor: [f64; 2],
    /// Which of latitude, longitude, speed, quality enter the GPS feature vector.
    pub gps_feature_mask: [bool; 4],
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            camera_height: 64,
            camera_width: 64,
            camera_fov_deg: 120.0,
            camera_mount_height_m: 5.0,
            camera_noise: 0.02,
            lidar_range_m: 100.0,
            bev_height: 48,
            bev_width: 48,
            bev_fov: Fov {
                x_min: -50.0,
                x_max: 50.0,
                y_min: 0.0,
                y_max: 30.0,
            },
            radar_antennas: 4,
            radar_samples: 64,
            radar_chirps: 16,
            radar_max_range_m: 64.0,
            radar_max_speed_mps: 16.0,
            radar_noise_std: 0.05,
            radar_map_size: 32,
            gps_noise_std_m: 0.5,
            gps_speed_noise_std: 0.1,
            gps_anchor: [37.5585, 127.0450],
            gps_feature_mask: [true; 4],
        }
    }
}

impl SensingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("scenario.sensing.{field}"), msg));
        if self.camera_height == 0 || self.camera_width == 0 {
            return bad("camera_height", "camera dimensions must be positive");
        }
        if !(self.camera_fov_deg > 0.0 && self.camera_fov_deg < 180.0) {
            return bad("camera_fov_deg", "must be in (0, 180)");
        }
        if self.bev_height == 0 || self.bev_width == 0 {
            return bad("bev_height", "BEV grid dimensions must be positive");
        }
        if self.bev_fov.validate().is_err() {
            return bad("bev_fov", "field of view is degenerate");
        }
        if self.radar_antennas == 0 || self.radar_samples == 0 || self.radar_chirps == 0 {
            return bad("radar_antennas", "radar cube dimensions must be positive");
        }
        if !(self.radar_max_range_m > 0.0 && self.radar_max_speed_mps > 0.0) {
            return bad("radar_max_range_m", "radar range and speed limits must be > 0");
        }
        if self.radar_map_size == 0 {
            return bad("radar_map_size", "must be positive");
        }
        if self.gps_noise_std_m < 0.0 || self.gps_speed_noise_std < 0.0 {
            return bad("gps_noise_std_m", "noise must be >= 0");
        }
        if !self.gps_feature_mask.iter().any(|&m| m) {
            return bad("gps_feature_mask", "at least one GPS field must be enabled");
        }
        Ok(())
    }

    pub fn gps_feature_count(&self) -> usize {
        self.gps_feature_mask.iter().filter(|&&m| m).count()
    }
}

/// Raw payloads for one timestamp, before model-side preprocessing.
#[derive(Debug, Clone)]
pub struct Modalities {
    pub camera: CameraFrame,
    pub lidar: PointCloud,
    pub radar: RadarCube,
    pub gps: GpsFeatures,
}

pub fn synth_modalities(scene: &SceneState, config: &ScenarioConfig, index: usize) -> Result<Modalities> {
    Ok(Modalities {
        camera: render_camera(scene, config, index),
        lidar: synth_point_cloud(scene, config, index),
        radar: synth_radar(scene, config, index),
        gps: synth_gps(scene, config, index),
    })
}
