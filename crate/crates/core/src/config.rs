//! Run configuration: one JSON file covering every stage.
//!
//! Every section is optional and falls back to its defaults. Unknown fields
//! are rejected, and parse errors report the JSON path of the offending
//! field.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{sensing_latency, LatencyProfile, ScoreWeights};
use crate::modality::ModalitySet;
use crate::model::ModelConfig;
use crate::scenario::ScenarioConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { batch_size: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub latency: LatencyProfile,
    pub eval: EvalConfig,
    /// Modality sets trained and evaluated when no `--modalities` is given.
    pub sweep: Vec<ModalitySet>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            latency: LatencyProfile::default(),
            eval: EvalConfig::default(),
            sweep: vec!["mmwave".parse().expect("valid modality")],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().to_string())
        })?;
        cfg.train.gps_feature_mask = cfg.scenario.sensing.gps_feature_mask;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Overrides every seed-bearing field.
    pub fn set_seed(&mut self, seed: u64) {
        self.scenario.global_seed = seed;
        self.train.seed = seed;
    }

    pub fn score_weights(&self) -> ScoreWeights {
        ScoreWeights {
            lambda_gap: self.train.lambda_gap,
            lambda_tau: self.train.lambda_tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.latency.validate()?;
        if self.eval.batch_size == 0 {
            return Err(Error::config("eval.batch_size", "must be >= 1"));
        }
        if self.model.num_beams != self.scenario.num_beams {
            return Err(Error::config(
                "model.num_beams",
                format!(
                    "{} differs from scenario.num_beams = {}",
                    self.model.num_beams, self.scenario.num_beams
                ),
            ));
        }
        let gps = self.scenario.sensing.gps_feature_count();
        if self.model.gps_width != gps {
            return Err(Error::config(
                "model.gps_width",
                format!(
                    "{} differs from the {gps} fields enabled in scenario.sensing.gps_feature_mask",
                    self.model.gps_width
                ),
            ));
        }
        if let Some(i) = self.sweep.iter().position(|s| s.is_empty()) {
            return Err(Error::config(format!("sweep[{i}]"), "empty modality set"));
        }
        Ok(())
    }

    /// Checks that every set in `sets` has a configured sensor latency.
    pub fn check_latency(&self, sets: &[ModalitySet]) -> Result<()> {
        sets.iter()
            .try_for_each(|s| sensing_latency(*s, &self.latency).map(|_| ()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field_path() {
        let err = RunConfig::from_json(r#"{"model": {"heads": "four"}}"#).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "model.heads"),
            "{err}"
        );
        let err = RunConfig::from_json(r#"{"scenario": {"sensing": {"bogus": 1}}}"#).unwrap_err();
        assert!(err.to_string().contains("scenario.sensing"), "{err}");
        let err = RunConfig::from_json(r#"{"sweep": ["mmwave", "sonar"]}"#).unwrap_err();
        assert!(err.to_string().contains("sweep[1]"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn cross_section_consistency() {
        let err = RunConfig::from_json(r#"{"model": {"num_beams": 32}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "model.num_beams"));
        let err =
            RunConfig::from_json(r#"{"scenario": {"sensing": {"gps_feature_mask": [true, true, false, false]}}}"#)
                .unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "model.gps_width"));
        let ok = RunConfig::from_json(
            r#"{"scenario": {"sensing": {"gps_feature_mask": [true, true, false, false]}}, "model": {"gps_width": 2}}"#,
        )
        .unwrap();
        assert_eq!(ok.train.gps_feature_mask, [true, true, false, false]);
    }

    #[test]
    fn latency_must_cover_swept_sets() {
        let cfg = RunConfig::default();
        let err = cfg.check_latency(&cfg.sweep).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "latency.sensor_ms.mmwave"));
    }

    #[test]
    fn shipped_config_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/desk.json");
        let cfg = RunConfig::load(&path).unwrap();
        cfg.check_latency(&ModalitySet::all_nonempty()).unwrap();
    }
}
