//! Codebook receiver math: steering vectors, the DFT combining codebook,
//! per-beam power sweeps and the pointwise SNR / rate / gap formulas.
//!
//! The receive model is `y = h·x + n` with `x = 1`, combined by each beam as
//! `z_i = w_iᴴ y`, measured as `p_i = |z_i|²`. SNR and rate of a beam are
//! `p_i / σ²` and `log2(1 + p_i / σ²)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear power floor applied before any logarithm or ratio.
pub const POWER_FLOOR: f64 = 1e-12;

/// Index into a beam codebook.
pub type BeamIndex = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec(Vec<Complex64>);

impl ComplexVec {
    pub fn new(elements: Vec<Complex64>) -> Result<Self> {
        if elements.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("complex vector has non-finite entries"));
        }
        Ok(Self(elements))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian inner product `selfᴴ · other`.
    pub fn inner(&self, other: &ComplexVec) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, factor: Complex64) -> ComplexVec {
        ComplexVec(self.0.iter().map(|c| c * factor).collect())
    }

    pub(crate) fn add_scaled(&mut self, other: &ComplexVec, factor: Complex64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b * factor;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Codebook {
    num_elements: usize,
    beams: Vec<ComplexVec>,
}

impl Codebook {
    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn num_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn beam(&self, index: BeamIndex) -> &ComplexVec {
        &self.beams[index]
    }

    pub fn beams(&self) -> &[ComplexVec] {
        &self.beams
    }

    /// Angle (radians) in `[-π/2, π/2]` at which beam `index` has its main lobe.
    pub fn beam_angle(&self, index: BeamIndex) -> f64 {
        let b = self.beams.len() as f64;
        // spatial frequency i/B cycles per element, wrapped into [-1/2, 1/2)
        let mut freq = index as f64 / b;
        if freq >= 0.5 {
            freq -= 1.0;
        }
        (2.0 * freq).clamp(-1.0, 1.0).asin()
    }
}

/// Oversampled DFT codebook: beam `i`, element `n` is `exp(j·2π·n·i/B) / √N`.
pub fn build_dft_codebook(num_elements: usize, num_beams: usize) -> Result<Codebook> {
    if num_elements == 0 || num_beams == 0 {
        return Err(Error::invalid(format!(
            "codebook sizes must be positive (num_elements={num_elements}, num_beams={num_beams})"
        )));
    }
    let scale = 1.0 / (num_elements as f64).sqrt();
    let beams = (0..num_beams)
        .map(|i| {
            ComplexVec(
                (0..num_elements)
                    .map(|n| {
                        let phase = 2.0 * PI * (n * i) as f64 / num_beams as f64;
                        Complex64::from_polar(scale, phase)
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(Codebook { num_elements, beams })
}

/// Half-wavelength ULA response, element `n` is `exp(j·π·n·sin θ)`.
pub fn steering_vector(num_elements: usize, angle: f64) -> Result<ComplexVec> {
    if num_elements == 0 {
        return Err(Error::invalid("steering vector needs at least one element"));
    }
    if !angle.is_finite() || angle.abs() > PI / 2.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "steering angle {angle} rad outside [-π/2, π/2]"
        )));
    }
    let s = angle.sin();
    Ok(ComplexVec(
        (0..num_elements)
            .map(|n| Complex64::from_polar(1.0, PI * n as f64 * s))
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if let Some(bad) = powers.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!(
                "power vector entries must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self(powers))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Sweeps every codebook beam over `y = h + n` and returns `|w_iᴴ y|²`.
///
/// `noise_var` is the per-element variance of circular complex Gaussian noise;
/// zero gives the deterministic noiseless sweep.
pub fn sweep_powers(channel: &ComplexVec, codebook: &Codebook, noise_var: f64, rng_seed: u64) -> Result<PowerVector> {
    if channel.len() != codebook.num_elements {
        return Err(Error::invalid(format!(
            "channel length {} does not match codebook array size {}",
            channel.len(),
            codebook.num_elements
        )));
    }
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance {noise_var} must be >= 0")));
    }
    let observed = if noise_var > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let normal = Normal::new(0.0, (noise_var / 2.0).sqrt()).map_err(|e| Error::NumericDomain(e.to_string()))?;
        ComplexVec(
            channel
                .0
                .iter()
                .map(|h| h + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
                .collect(),
        )
    } else {
        channel.clone()
    };
    Ok(PowerVector(
        codebook.beams.iter().map(|w| w.inner(&observed).norm_sqr()).collect(),
    ))
}

/// Index of the largest value, lowest index on ties. `None` for an empty slice.
pub fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn oracle_beam(p: &PowerVector) -> Result<BeamIndex> {
    argmax_lowest(&p.0).ok_or_else(|| Error::invalid("oracle beam of an empty power vector"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub snr: f64,
    pub rate: f64,
}

pub fn link_metrics(power: f64, noise_var: f64) -> Result<LinkMetrics> {
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance {noise_var} must be > 0")));
    }
    if !(power >= 0.0) || !power.is_finite() {
        return Err(Error::invalid(format!("power {power} must be finite and >= 0")));
    }
    let snr = power / noise_var;
    Ok(LinkMetrics {
        snr,
        rate: (1.0 + snr).log2(),
    })
}

fn floored(p: f64, what: &str) -> Result<f64> {
    if p.is_nan() || p < 0.0 {
        return Err(Error::NumericDomain(format!("{what} power {p} is not a valid power")));
    }
    Ok(p.max(POWER_FLOOR))
}

/// `10·log10(p_opt / p_pred)` in dB, both powers floored at [`POWER_FLOOR`].
pub fn snr_gap_db(p_opt: f64, p_pred: f64) -> Result<f64> {
    let opt = floored(p_opt, "oracle")?;
    let pred = floored(p_pred, "predicted")?;
    Ok(10.0 * (opt / pred).log10())
}

pub fn rate_loss(p_opt: f64, p_pred: f64, noise_var: f64) -> Result<f64> {
    Ok(link_metrics(p_opt, noise_var)?.rate - link_metrics(p_pred, noise_var)?.rate)
}
