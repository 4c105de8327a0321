//! Compact two-stage detector: a small convolutional backbone, a region
//! proposal network over 35 anchors per cell, bilinear RoI pooling and a
//! fully connected head. Also the chart-type classifier.

mod backbone;
mod classifier;
mod head;
mod rpn;

pub use backbone::{backbone_forward, init_backbone, FeatureMaps};
pub use classifier::{classifier_forward, classify_chart_type, downsample, init_classifier, ClassifierConfig, TypePrediction};
pub use head::{
    detection_loss, head_forward, init_head, postprocess, roi_features, sample_rois, DetLoss, HeadOutput, RawDetection,
    RoiBatch,
};
pub use rpn::{init_rpn, rpn_forward, rpn_loss, rpn_proposals, sample_anchors, AnchorSample, RpnOutput};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParameterStore, Var};
use crate::error::{Error, Result};
use crate::geometry::AnchorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Output channels of each conv stage; every stage halves the resolution.
    pub channels: Vec<usize>,
    pub head_hidden: usize,
    pub roi_size: usize,
    pub anchors: AnchorConfig,
    pub rpn_positive_iou: f64,
    pub rpn_negative_iou: f64,
    /// Anchors sampled per image for the RPN loss, half positive at most.
    pub rpn_batch: usize,
    pub pre_nms_top: usize,
    pub proposal_nms_iou: f64,
    /// Proposals kept after NMS.
    pub post_nms_top: usize,
    pub head_positive_iou: f64,
    /// RoIs sampled per image for the head loss.
    pub head_batch: usize,
    pub head_positive_fraction: f64,
    pub smooth_l1_beta: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            channels: vec![16, 32, 64],
            head_hidden: 256,
            roi_size: 7,
            anchors: AnchorConfig::default(),
            rpn_positive_iou: 0.7,
            rpn_negative_iou: 0.3,
            rpn_batch: 256,
            pre_nms_top: 2000,
            proposal_nms_iou: 0.7,
            post_nms_top: 256,
            head_positive_iou: 0.5,
            head_batch: 96,
            head_positive_fraction: 0.5,
            smooth_l1_beta: 1.0 / 9.0,
        }
    }
}

impl DetectorConfig {
    pub fn stride(&self) -> usize {
        1 << self.channels.len()
    }

    pub fn top_channels(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }

    pub fn roi_dim(&self) -> usize {
        self.top_channels() * self.roi_size * self.roi_size
    }

    pub fn validate(&self) -> Result<()> {
        self.anchors.validate()?;
        if self.channels.len() < 2 || self.channels.contains(&0) {
            return Err(Error::config("detector.channels", "need at least two non-empty stages"));
        }
        if self.anchors.stride != self.stride() {
            return Err(Error::config(
                "detector.anchors.stride",
                format!("must equal the backbone stride {}", self.stride()),
            ));
        }
        if self.roi_size == 0 || self.head_hidden == 0 {
            return Err(Error::config("detector.roi_size", "sizes must be positive"));
        }
        if !(self.rpn_negative_iou <= self.rpn_positive_iou) {
            return Err(Error::config("detector.rpn_negative_iou", "must not exceed rpn_positive_iou"));
        }
        if !(0.0..=1.0).contains(&self.head_positive_fraction) {
            return Err(Error::config("detector.head_positive_fraction", "must lie in [0, 1]"));
        }
        if self.rpn_batch == 0 || self.head_batch == 0 || self.post_nms_top == 0 {
            return Err(Error::config("detector.rpn_batch", "batch sizes must be positive"));
        }
        Ok(())
    }
}

/// Dense layer `x·W + b` with parameters `{prefix}.w` (`in×out`) and `{prefix}.b`.
pub(crate) fn dense(g: &mut Graph, store: &ParameterStore, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    g.linear(x, w, b)
}

/// Same-padded convolution with parameters `{prefix}.w` and `{prefix}.b`.
pub(crate) fn conv(g: &mut Graph, store: &ParameterStore, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    g.conv2d(x, w, b)
}

pub(crate) fn init_dense<R: Rng>(store: &mut ParameterStore, prefix: &str, n_in: usize, n_out: usize, std: Option<f64>, rng: &mut R) -> Result<()> {
    let name = format!("{prefix}.w");
    match std {
        Some(s) => store.init_normal(&name, &[n_in, n_out], s, rng)?,
        None => store.init_he(&name, &[n_in, n_out], n_in, rng)?,
    }
    store.init_const(&format!("{prefix}.b"), &[n_out], 0.0)
}

pub(crate) fn init_conv<R: Rng>(store: &mut ParameterStore, prefix: &str, cin: usize, cout: usize, k: usize, std: Option<f64>, rng: &mut R) -> Result<()> {
    let name = format!("{prefix}.w");
    match std {
        Some(s) => store.init_normal(&name, &[cout, cin, k, k], s, rng)?,
        None => store.init_he(&name, &[cout, cin, k, k], cin * k * k, rng)?,
    }
    store.init_const(&format!("{prefix}.b"), &[cout], 0.0)
}

/// Rearranges a `C×N` sample block into `rows×(N/rows·C)` so each row holds
/// one region's features.
pub(crate) fn regions_as_rows(g: &mut Graph, sampled: Var, rows: usize) -> Result<Var> {
    let (c, n) = crate::autodiff::dims2(g.shape(sampled));
    let t = g.transpose(sampled)?;
    g.reshape(t, &[rows, n / rows.max(1) * c])
}
