use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::{Modality, ModalitySet};

/// How per-sensor capture delays combine into one sensing delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    /// Sensors capture in parallel.
    #[default]
    Max,
    /// Sensors capture one after another.
    Sum,
}

/// Per-modality sensor latencies in milliseconds.
///
/// Only camera (one frame at 30 fps) and LiDAR (20 Hz) have defaults; every
/// other active modality must be configured explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyProfile {
    pub sensor_ms: BTreeMap<Modality, f64>,
    pub combiner: Combiner,
    /// Fixed inference latency in place of the measured forward time.
    pub inference_ms: Option<f64>,
}

impl Default for LatencyProfile {
    fn default() -> Self {
        Self {
            sensor_ms: BTreeMap::from([(Modality::Camera, 1000.0 / 30.0), (Modality::Lidar, 50.0)]),
            combiner: Combiner::Max,
            inference_ms: None,
        }
    }
}

impl LatencyProfile {
    pub fn validate(&self) -> Result<()> {
        for (m, v) in &self.sensor_ms {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::config(
                    format!("latency.sensor_ms.{m}"),
                    "must be a finite value >= 0",
                ));
            }
        }
        if let Some(v) = self.inference_ms {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config("latency.inference_ms", "must be a finite value >= 0"));
            }
        }
        Ok(())
    }
}

/// End-to-end latency split into its sensing and inference parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub modalities: ModalitySet,
    pub sensing_ms: f64,
    pub inference_ms: f64,
    pub end_to_end_ms: f64,
}

/// Sensing delay for `active`, before any inference time is added.
pub fn sensing_latency(active: ModalitySet, profile: &LatencyProfile) -> Result<f64> {
    if active.is_empty() {
        return Err(Error::invalid("latency of an empty modality set"));
    }
    let mut values = Vec::with_capacity(active.len());
    for m in active.iter() {
        let v = *profile.sensor_ms.get(&m).ok_or_else(|| {
            Error::config(
                format!("latency.sensor_ms.{m}"),
                format!("no sensor latency configured for {m}"),
            )
        })?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::config(
                format!("latency.sensor_ms.{m}"),
                "must be a finite value >= 0",
            ));
        }
        values.push(v);
    }
    Ok(match profile.combiner {
        Combiner::Max => values.into_iter().fold(0.0, f64::max),
        Combiner::Sum => values.into_iter().sum(),
    })
}

pub fn latency_report(active: ModalitySet, profile: &LatencyProfile, inference_ms: f64) -> Result<LatencyBreakdown> {
    if !(inference_ms.is_finite() && inference_ms >= 0.0) {
        return Err(Error::invalid(format!("inference latency {inference_ms} must be >= 0")));
    }
    let sensing_ms = sensing_latency(active, profile)?;
    Ok(LatencyBreakdown {
        modalities: active,
        sensing_ms,
        inference_ms,
        end_to_end_ms: sensing_ms + inference_ms,
    })
}
