//! The single JSON document that configures every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::GenConfig;
use crate::detect::ClassifierConfig;
use crate::error::{Error, Result};
use crate::infer::InferenceConfig;
use crate::model::ModelConfig;
use crate::train::{LossWeights, TrainSchedule};

/// Every section is optional; missing keys take their defaults and unknown
/// keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GenConfig,
    /// Detector (anchors included) and branch settings.
    pub model: ModelConfig,
    pub classifier: ClassifierConfig,
    pub weights: LossWeights,
    pub schedule: TrainSchedule,
    /// Confidence and NMS thresholds used at inference time.
    pub inference: InferenceConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field,
                message: format!("{}: {message}", path.display()),
            },
            e => e,
        })
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.model.validate()?;
        self.classifier.validate()?;
        self.weights.validate()?;
        self.schedule.validate()?;
        self.inference.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
