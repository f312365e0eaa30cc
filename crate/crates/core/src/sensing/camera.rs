use rand::Rng;

use crate::scenario::{ScenarioConfig, SceneState};
use crate::seed::{stream_rng, Stream};

/// RGB frame, `height × width × 3`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl CameraFrame {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width * 3],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let o = (row * self.width + col) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    fn fill_rect(&mut self, rows: (f64, f64), cols: (f64, f64), rgb: [f32; 3]) {
        let r0 = rows.0.floor().max(0.0) as usize;
        let r1 = (rows.1.ceil().max(0.0) as usize).min(self.height);
        let c0 = cols.0.floor().max(0.0) as usize;
        let c1 = (cols.1.ceil().max(0.0) as usize).min(self.width);
        for r in r0..r1 {
            for c in c0..c1 {
                let o = (r * self.width + c) * 3;
                self.pixels[o..o + 3].copy_from_slice(&rgb);
            }
        }
    }
}

const SKY: [f32; 3] = [0.55, 0.70, 0.90];
const GROUND: [f32; 3] = [0.35, 0.45, 0.30];
const ROAD: [f32; 3] = [0.40, 0.40, 0.42];
const VEHICLE: [f32; 3] = [0.85, 0.15, 0.10];
const TRUCK: [f32; 3] = [0.12, 0.12, 0.14];

struct Projector {
    half_w: f64,
    half_h: f64,
    focal: f64,
    mount: f64,
    half_fov: f64,
}

impl Projector {
    fn new(frame: &CameraFrame, fov_deg: f64, mount: f64) -> Self {
        let half_fov = fov_deg.to_radians() / 2.0;
        let half_w = frame.width as f64 / 2.0;
        Self {
            half_w,
            half_h: frame.height as f64 / 2.0,
            focal: half_w / half_fov.tan(),
            mount,
            half_fov,
        }
    }

    /// Pinhole projection of a ground-plane point at lateral `x`, depth `y`.
    fn column(&self, x: f64, y: f64) -> f64 {
        self.half_w + self.focal * x / y
    }

    fn row(&self, y: f64, height_above_ground: f64) -> f64 {
        self.half_h + self.focal * (self.mount - height_above_ground) / y
    }

    fn sees(&self, x: f64, y: f64) -> bool {
        y > 0.0 && x.atan2(y).abs() < self.half_fov
    }

    fn draw_box(&self, frame: &mut CameraFrame, center: [f64; 2], len: f64, h: f64, rgb: [f32; 3]) {
        let [x, y] = center;
        let c0 = self.column(x - len / 2.0, y);
        let c1 = self.column(x + len / 2.0, y);
        let r_top = self.row(y, h);
        let r_bot = self.row(y, 0.0);
        frame.fill_rect((r_top, r_bot), (c0, c1), rgb);
    }
}

/// Renders a low-resolution proxy frame: sky, ground, the road band, the
/// vehicle (if visible) and the blocking truck (if any).
pub fn render_camera(scene: &SceneState, config: &ScenarioConfig, index: usize) -> CameraFrame {
    let s = &config.sensing;
    let mut frame = CameraFrame::new(s.camera_height, s.camera_width);
    let proj = Projector::new(&frame, s.camera_fov_deg, s.camera_mount_height_m);

    let horizon = proj.half_h;
    frame.fill_rect((0.0, horizon), (0.0, frame.width as f64), SKY);
    frame.fill_rect((horizon, frame.height as f64), (0.0, frame.width as f64), GROUND);
    let near = proj.row(config.bs_offset_m - 2.0, 0.0);
    let far = proj.row(config.bs_offset_m + 2.0, 0.0);
    frame.fill_rect((far, near), (0.0, frame.width as f64), ROAD);

    let [x, y] = scene.position;
    if !scene.blocked && proj.sees(x, y) {
        proj.draw_box(&mut frame, scene.position, 4.5, 1.5, VEHICLE);
    }
    if let Some(b) = scene.blocker {
        if proj.sees(b[0], b[1]) {
            proj.draw_box(&mut frame, b, 8.0, 3.5, TRUCK);
        }
    }

    if s.camera_noise > 0.0 {
        let mut rng = stream_rng(config.global_seed, index as u64, Stream::Camera);
        let amp = s.camera_noise as f32;
        for v in &mut frame.pixels {
            *v = (*v + amp * rng.random_range(-1.0f32..=1.0)).clamp(0.0, 1.0);
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scene;

    fn count_color(frame: &CameraFrame, rgb: [f32; 3]) -> usize {
        (0..frame.height)
            .flat_map(|r| (0..frame.width).map(move |c| (r, c)))
            .filter(|&(r, c)| {
                let p = frame.pixel(r, c);
                (0..3).all(|k| (p[k] - rgb[k]).abs() < 1e-6)
            })
            .count()
    }

    fn quiet_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.sensing.camera_noise = 0.0;
        cfg
    }

    #[test]
    fn vehicle_visible_iff_unblocked_in_view() {
        let mut cfg = quiet_config();
        cfg.blockage_prob = 0.0;
        let mut scene = generate_scene(&cfg, 0).unwrap();
        scene.position = [0.0, 10.0];
        let f = render_camera(&scene, &cfg, 0);
        assert!(count_color(&f, VEHICLE) > 0);

        // outside a 120° field of view
        scene.position = [40.0, 10.0];
        let f = render_camera(&scene, &cfg, 0);
        assert_eq!(count_color(&f, VEHICLE), 0);

        scene.position = [0.0, 10.0];
        scene.blocked = true;
        scene.blocker = Some([0.0, 5.0]);
        let f = render_camera(&scene, &cfg, 0);
        assert_eq!(count_color(&f, VEHICLE), 0);
        assert!(count_color(&f, TRUCK) > 0);
    }

    #[test]
    fn values_in_unit_range_and_deterministic() {
        let cfg = ScenarioConfig::default();
        let scene = generate_scene(&cfg, 5).unwrap();
        let a = render_camera(&scene, &cfg, 5);
        let b = render_camera(&scene, &cfg, 5);
        assert_eq!(a, b);
        assert_eq!(a.pixels.len(), 64 * 64 * 3);
        assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn vehicle_column_tracks_angle() {
        let cfg = quiet_config();
        let mut scene = generate_scene(&cfg, 0).unwrap();
        scene.blocked = false;
        scene.blocker = None;
        let mut centroid = |x: f64| {
            scene.position = [x, 10.0];
            let f = render_camera(&scene, &cfg, 0);
            let cols: Vec<usize> = (0..f.height)
                .flat_map(|r| (0..f.width).map(move |c| (r, c)))
                .filter(|&(r, c)| f.pixel(r, c) == VEHICLE)
                .map(|(_, c)| c)
                .collect();
            cols.iter().sum::<usize>() as f64 / cols.len() as f64
        };
        assert!(centroid(-5.0) < centroid(0.0));
        assert!(centroid(0.0) < centroid(5.0));
    }
}
