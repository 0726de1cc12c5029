//! Pipeline configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::DetectionConfig;
use crate::error::{Error, Result};
use crate::fsm::FsmConfig;
use crate::microdoppler::RoiSpec;
use crate::params::{derive, DerivedParams, SystemConfig};
use crate::track::KalmanConfig;

/// Every tunable of the processing chain. Missing keys take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub system: SystemConfig,
    pub detection: DetectionConfig,
    pub tracking: KalmanConfig,
    pub microdoppler: RoiSpec,
    pub classifier: FsmConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<DerivedParams> {
        let params = derive(&self.system)?;
        self.detection.scope(&params)?;
        if !(self.detection.lower_db < self.detection.upper_db) {
            return Err(Error::Config(format!(
                "detection.lower_db ({}) must be below detection.upper_db ({})",
                self.detection.lower_db, self.detection.upper_db
            )));
        }
        if !(self.tracking.sigma_a >= 0.0 && self.tracking.init_sigma_bins > 0.0) {
            return Err(Error::Config(
                "tracking noise parameters must be positive".into(),
            ));
        }
        self.microdoppler.validate()?;
        self.classifier.validate()?;
        Ok(params)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(
            PipelineConfig::from_json("{}").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = PipelineConfig::default();
        c.detection.upper_db = 18.0;
        c.tracking.range_sigma_m = Some(0.05);
        assert_eq!(PipelineConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let err = PipelineConfig::from_json(r#"{"detection": {"upper": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("detection"), "{err}");
        let err = PipelineConfig::from_json(r#"{"system": {"zc_root": 4}}"#).unwrap_err();
        assert!(err.is_config());
        assert!(
            PipelineConfig::from_json(r#"{"detection": {"upper_db": 5, "lower_db": 6}}"#).is_err()
        );
    }
}
