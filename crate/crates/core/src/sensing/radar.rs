use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::scenario::{ScenarioConfig, SceneState};
use crate::seed::{derive_seed, Stream};

/// Raw FMCW frame, `antennas × samples × chirps`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    pub antennas: usize,
    pub samples: usize,
    pub chirps: usize,
    pub data: Vec<Complex64>,
}

impl RadarCube {
    pub fn zeros(antennas: usize, samples: usize, chirps: usize) -> Self {
        Self {
            antennas,
            samples,
            chirps,
            data: vec![Complex64::new(0.0, 0.0); antennas * samples * chirps],
        }
    }

    pub fn from_fn(
        antennas: usize,
        samples: usize,
        chirps: usize,
        f: impl Fn(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Vec::with_capacity(antennas * samples * chirps);
        for a in 0..antennas {
            for s in 0..samples {
                for c in 0..chirps {
                    data.push(f(a, s, c));
                }
            }
        }
        Self {
            antennas,
            samples,
            chirps,
            data,
        }
    }

    #[inline]
    pub fn at(&self, a: usize, s: usize, c: usize) -> Complex64 {
        self.data[(a * self.samples + s) * self.chirps + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Map2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Map2 {
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let i = crate::beamcore::argmax_lowest(&self.data).unwrap_or(0);
        (i / self.cols, i % self.cols)
    }
}

/// Range-angle (`samples × antennas`) and range-velocity (`samples × chirps`)
/// magnitude maps. Bins are in natural DFT order (zero frequency first).
#[derive(Debug, Clone, PartialEq)]
pub struct RadarMaps {
    pub range_angle: Map2,
    pub range_velocity: Map2,
}

fn fft_inplace(planner: &mut FftPlanner<f64>, buf: &mut [Complex64]) {
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// Magnitudes of the two 2D DFTs, before any compression or normalization.
///
/// RV: DFT over (samples, chirps) per antenna, magnitudes averaged over
/// antennas. RA: DFT over (samples, antennas) per chirp, magnitudes averaged
/// over chirps.
pub fn radar_spectra(cube: &RadarCube) -> RadarMaps {
    let (na, ns, nc) = (cube.antennas, cube.samples, cube.chirps);
    let mut planner = FftPlanner::<f64>::new();

    let mut rv = vec![0.0; ns * nc];
    let mut plane = vec![Complex64::new(0.0, 0.0); ns * nc];
    let mut column = vec![Complex64::new(0.0, 0.0); ns];
    for a in 0..na {
        for s in 0..ns {
            for c in 0..nc {
                plane[s * nc + c] = cube.at(a, s, c);
            }
            fft_inplace(&mut planner, &mut plane[s * nc..(s + 1) * nc]);
        }
        for c in 0..nc {
            for s in 0..ns {
                column[s] = plane[s * nc + c];
            }
            fft_inplace(&mut planner, &mut column);
            for s in 0..ns {
                rv[s * nc + c] += column[s].norm() / na as f64;
            }
        }
    }

    let mut ra = vec![0.0; ns * na];
    let mut plane = vec![Complex64::new(0.0, 0.0); ns * na];
    for c in 0..nc {
        for s in 0..ns {
            for a in 0..na {
                plane[s * na + a] = cube.at(a, s, c);
            }
            fft_inplace(&mut planner, &mut plane[s * na..(s + 1) * na]);
        }
        for a in 0..na {
            for s in 0..ns {
                column[s] = plane[s * na + a];
            }
            fft_inplace(&mut planner, &mut column);
            for s in 0..ns {
                ra[s * na + a] += column[s].norm() / nc as f64;
            }
        }
    }

    RadarMaps {
        range_angle: Map2 {
            rows: ns,
            cols: na,
            data: ra,
        },
        range_velocity: Map2 {
            rows: ns,
            cols: nc,
            data: rv,
        },
    }
}

/// `ln(1 + x)` compression followed by min-max scaling to `[0, 1]`.
/// A flat map becomes all zeros.
pub(crate) fn compress_normalize(map: &Map2) -> Map2 {
    let logged: Vec<f64> = map.data.iter().map(|v| v.ln_1p()).collect();
    let lo = logged.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logged.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = if span > 0.0 {
        logged.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; logged.len()]
    };
    Map2 {
        rows: map.rows,
        cols: map.cols,
        data,
    }
}

/// RA/RV feature maps: 2D DFT magnitudes, log-compressed and min-max normalized.
pub fn radar_maps(cube: &RadarCube) -> RadarMaps {
    let raw = radar_spectra(cube);
    RadarMaps {
        range_angle: compress_normalize(&raw.range_angle),
        range_velocity: compress_normalize(&raw.range_velocity),
    }
}

/// Bilinear resampling with pixel-centre alignment.
pub fn resize_bilinear(map: &Map2, rows: usize, cols: usize) -> Map2 {
    let mut data = Vec::with_capacity(rows * cols);
    let sr = map.rows as f64 / rows as f64;
    let sc = map.cols as f64 / cols as f64;
    for r in 0..rows {
        let y = ((r as f64 + 0.5) * sr - 0.5).clamp(0.0, (map.rows - 1) as f64);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(map.rows - 1);
        let fy = y - y0 as f64;
        for c in 0..cols {
            let x = ((c as f64 + 0.5) * sc - 0.5).clamp(0.0, (map.cols - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(map.cols - 1);
            let fx = x - x0 as f64;
            let top = map.at(y0, x0) * (1.0 - fx) + map.at(y0, x1) * fx;
            let bot = map.at(y1, x0) * (1.0 - fx) + map.at(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Map2 { rows, cols, data }
}

/// Two-channel encoder input `[RA, RV]`, each resized to `size × size`.
pub fn radar_input(maps: &RadarMaps, size: usize) -> Vec<f32> {
    let ra = resize_bilinear(&maps.range_angle, size, size);
    let rv = resize_bilinear(&maps.range_velocity, size, size);
    ra.data.iter().chain(&rv.data).map(|&v| v as f32).collect()
}

struct Target {
    range: f64,
    radial_velocity: f64,
    angle: f64,
    amplitude: f64,
}

/// Beat-signal cube: one complex exponential per target whose sample, chirp
/// and antenna frequencies encode range, radial velocity and angle, plus
/// circular Gaussian noise.
pub fn synth_radar(scene: &SceneState, config: &ScenarioConfig, index: usize) -> RadarCube {
    let s = &config.sensing;
    let (na, ns, nc) = (s.radar_antennas, s.radar_samples, s.radar_chirps);
    let range_res = s.radar_max_range_m / ns as f64;
    let vel_res = 2.0 * s.radar_max_speed_mps / nc as f64;

    let mut targets = vec![Target {
        range: scene.range(),
        radial_velocity: scene.radial_velocity(),
        angle: scene.los_angle(),
        amplitude: if scene.blocked {
            config.blockage_attenuation
        } else {
            1.0
        },
    }];
    if let Some(b) = scene.blocker {
        targets.push(Target {
            range: b[0].hypot(b[1]),
            radial_velocity: 0.0,
            angle: b[0].atan2(b[1]),
            amplitude: 1.0,
        });
    }
    targets.push(Target {
        range: config.wall_y_m,
        radial_velocity: 0.0,
        angle: 0.0,
        amplitude: 0.3,
    });

    let mut cube = RadarCube::zeros(na, ns, nc);
    for t in &targets {
        let fr = t.range / range_res / ns as f64;
        let fd = t.radial_velocity / vel_res / nc as f64;
        let fa = t.angle.sin() / 2.0;
        for a in 0..na {
            for smp in 0..ns {
                for c in 0..nc {
                    let phase = 2.0 * PI * (fr * smp as f64 + fd * c as f64 + fa * a as f64);
                    cube.data[(a * ns + smp) * nc + c] += Complex64::from_polar(t.amplitude, phase);
                }
            }
        }
    }

    if s.radar_noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.global_seed, index as u64, Stream::Radar));
        let normal = Normal::new(0.0, s.radar_noise_std / 2f64.sqrt()).expect("finite std");
        for v in &mut cube.data {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    cube
}
