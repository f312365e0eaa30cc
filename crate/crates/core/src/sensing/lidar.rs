use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{ScenarioConfig, SceneState};
use crate::seed::{stream_rng, Stream};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    /// `(x, y, z)` in metres, sensor at the origin.
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Axis-aligned ground-plane window, metres. Minimum bounds are inclusive,
/// maximum bounds exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fov {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Fov {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate BEV field of view {self:?}")))
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Bird's-eye-view occupancy, `height × width`, rows along y and columns along x.
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    pub height: usize,
    pub width: usize,
    pub fov: Fov,
    pub grid: Vec<f32>,
}

/// Bins in-FOV points into a `grid_h × grid_w` count map, then divides by the
/// largest count. An empty window stays all-zero.
pub fn lidar_to_bev(cloud: &PointCloud, grid_h: usize, grid_w: usize, fov: Fov) -> Result<BevRaster> {
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::invalid("BEV grid dimensions must be positive"));
    }
    fov.validate()?;
    let counts = bev_counts(cloud, grid_h, grid_w, &fov);
    let max = counts.iter().copied().max().unwrap_or(0);
    let grid = if max == 0 {
        vec![0.0; grid_h * grid_w]
    } else {
        counts.iter().map(|&c| c as f32 / max as f32).collect()
    };
    Ok(BevRaster {
        height: grid_h,
        width: grid_w,
        fov,
        grid,
    })
}

pub(crate) fn bev_counts(cloud: &PointCloud, grid_h: usize, grid_w: usize, fov: &Fov) -> Vec<u32> {
    let mut counts = vec![0u32; grid_h * grid_w];
    let sx = grid_w as f64 / (fov.x_max - fov.x_min);
    let sy = grid_h as f64 / (fov.y_max - fov.y_min);
    for &[x, y, _] in &cloud.points {
        if !fov.contains(x, y) {
            continue;
        }
        let col = (((x - fov.x_min) * sx) as usize).min(grid_w - 1);
        let row = (((y - fov.y_min) * sy) as usize).min(grid_h - 1);
        counts[row * grid_w + col] += 1;
    }
    counts
}

fn box_face_points(center: [f64; 2], length: f64, width: f64, height: f64, out: &mut Vec<[f64; 3]>) {
    // face toward the sensor plus the roof
    let near_y = center[1] - width / 2.0;
    let nx = (length / 0.3).ceil() as usize;
    let nz = (height / 0.3).ceil() as usize;
    for i in 0..=nx {
        let x = center[0] - length / 2.0 + length * i as f64 / nx as f64;
        for k in 0..=nz {
            out.push([x, near_y, height * k as f64 / nz as f64]);
        }
        let nw = (width / 0.5).ceil() as usize;
        for j in 1..=nw {
            out.push([x, near_y + width * j as f64 / nw as f64, height]);
        }
    }
}

fn static_clutter(config: &ScenarioConfig) -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    let span = config.road_extent_m + 20.0;
    let mut x = -span;
    while x <= span {
        for z in [0.5, 1.5, 2.5] {
            pts.push([x, config.wall_y_m, z]);
        }
        x += 1.0;
    }
    for px in [-20.0, 20.0] {
        for k in 0..8 {
            pts.push([px, config.bs_offset_m - 4.0, 0.5 * k as f64]);
        }
    }
    pts
}

/// Static wall and roadside poles, plus the vehicle body when it is in range
/// and not hidden behind the blocking truck.
pub fn synth_point_cloud(scene: &SceneState, config: &ScenarioConfig, index: usize) -> PointCloud {
    let range = config.sensing.lidar_range_m;
    let mut rng = stream_rng(config.global_seed, index as u64, Stream::Lidar);
    let mut points = static_clutter(config);

    let mut body = Vec::new();
    if scene.blocked {
        if let Some(b) = scene.blocker {
            box_face_points(b, 8.0, 2.5, 3.5, &mut body);
        }
    } else {
        box_face_points(scene.position, 4.5, 1.8, 1.5, &mut body);
    }
    for p in body {
        points.push([
            p[0] + 0.02 * rng.random_range(-1.0..=1.0),
            p[1] + 0.02 * rng.random_range(-1.0..=1.0),
            p[2],
        ]);
    }
    points.retain(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= range);
    PointCloud { points }
}
