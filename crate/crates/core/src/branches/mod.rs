//! Branches added on top of the detector: oriented text recognition, object
//! matching, and pie boundary-angle decoding.

mod angles;
mod indicator;
mod matching;
mod text;

pub use angles::{angle_decoder_forward, angle_loss, decode_angles, init_angle_decoder, AngleSequence};
pub use indicator::{smooth_indicator, smooth_indicator_grad, SmoothIndicatorParams};
pub use matching::{init_match_head, om_logits, om_loss, om_scores, positional_code, slice_feature, MatchHead};
pub(crate) use text::min_frames;
pub use text::{
    ctc_greedy_decode, encode_text, init_text_branch, orientation_forward, orientation_loss, text_branch_loss, text_logits,
    TextCrop, ALPHABET, BLANK, N_SYMBOLS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchConfig {
    /// Feature rows pooled across a text line.
    pub text_rows: usize,
    /// Width of the projected per-column text feature.
    pub text_input: usize,
    pub text_hidden: usize,
    /// Pixels of text length per recognition frame.
    pub text_frame_px: f64,
    /// Line thickness assumed when the box is ambiguous (near 45°).
    pub text_fallback_thickness: f64,
    pub lambda_orientation: f64,
    pub lambda_ctc: f64,
    /// Text proposals per chart added to the ground-truth lines in training.
    pub text_proposals: usize,
    /// Minimum IoU between such a proposal and its text line.
    pub text_proposal_iou: f64,
    pub om_hidden: usize,
    pub indicator: SmoothIndicatorParams,
    pub angle_hidden: usize,
}

impl Default for BranchConfig {
    fn default() -> Self {
        BranchConfig {
            text_rows: 4,
            text_input: 64,
            text_hidden: 64,
            text_frame_px: 2.0,
            text_fallback_thickness: 10.0,
            lambda_orientation: 1.0,
            lambda_ctc: 1.0,
            text_proposals: 8,
            text_proposal_iou: 0.7,
            om_hidden: 256,
            indicator: SmoothIndicatorParams::default(),
            angle_hidden: 64,
        }
    }
}

impl BranchConfig {
    pub fn validate(&self) -> Result<()> {
        self.indicator.validate()?;
        if self.text_rows == 0 || self.text_input == 0 || self.text_hidden == 0 || self.om_hidden == 0 || self.angle_hidden == 0 {
            return Err(Error::config("branches", "layer sizes must be positive"));
        }
        if !(self.text_frame_px > 0.0) || !(self.text_fallback_thickness > 0.0) {
            return Err(Error::config("branches.text_frame_px", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.text_proposal_iou) {
            return Err(Error::config("branches.text_proposal_iou", "must be in [0, 1]"));
        }
        if !(self.lambda_orientation >= 0.0 && self.lambda_ctc >= 0.0) {
            return Err(Error::config("branches.lambda_orientation", "weights must be non-negative"));
        }
        Ok(())
    }
}
