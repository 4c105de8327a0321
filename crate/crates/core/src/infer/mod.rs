//! Extraction heuristics on top of a perception stage.
//!
//! A [`Perception`] turns an image into a [`Percept`]: gated detections with
//! recognized texts, pairwise matching scores and pie boundary angles. The
//! decoders here turn a percept into bar 4-tuples or pie 2-tuples. The same
//! decoders run behind the trained network and behind [`OraclePerception`],
//! which injects ground truth at every neural interface.

mod decode;
mod oracle;
mod result;

pub use decode::{
    assign_greedy, canonical_angles, decode, decode_bar, decode_pie, interpolate_value, parse_tick_value,
    percentages_from_angles, tick_bounds, Calibration,
};
pub use oracle::OraclePerception;
pub use result::{BarTuple, DetectionRecord, ExtractionResult, PieTuple};

use serde::{Deserialize, Serialize};

use crate::corpus::{ChartKind, ObjectClass, RelationKind, RgbImage};
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Detections at or below this confidence are dropped.
    pub confidence_threshold: f64,
    pub nms_iou: f64,
    pub calibration: Calibration,
    /// Upper bound on decoded pie boundaries.
    pub max_angle_steps: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            confidence_threshold: 0.8,
            nms_iou: 0.5,
            calibration: Calibration::NearestPair,
            max_angle_steps: 10,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.confidence_threshold) {
            return Err(Error::config("confidence_threshold", "must lie in [0, 1)"));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::config("nms_iou", "must lie in (0, 1]"));
        }
        if self.max_angle_steps < 2 {
            return Err(Error::config("max_angle_steps", "need at least 2 steps"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: ObjectClass,
    pub bbox: BBox,
    pub confidence: f64,
    pub orientation_deg: f64,
    pub text: Option<String>,
}

/// Matching score between two detections (indices into
/// [`Percept::detections`]). For [`RelationKind::SliceLegendMark`], `a` indexes
/// [`Percept::slice_angles_deg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub a: usize,
    pub b: usize,
    pub kind: RelationKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Percept {
    pub kind: ChartKind,
    pub kind_confidence: f64,
    pub detections: Vec<Detection>,
    pub pair_scores: Vec<PairScore>,
    pub slice_angles_deg: Vec<f64>,
    /// Non-fatal conditions met while perceiving, e.g. a truncated angle sequence.
    pub flags: Vec<String>,
}

pub trait Perception: Sync {
    fn perceive(&self, image: &RgbImage) -> Result<Percept>;
}

/// Classifies, perceives and decodes one image.
pub fn extract(perception: &dyn Perception, image: &RgbImage, cfg: &InferenceConfig) -> Result<ExtractionResult> {
    let percept = perception.perceive(image)?;
    decode(&percept, cfg)
}
