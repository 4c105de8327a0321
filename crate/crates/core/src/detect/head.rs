use rand::seq::SliceRandom;
use rand::Rng;

use super::rpn::{AnchorSample, RpnOutput};
use super::{dense, init_dense, regions_as_rows, DetectorConfig};
use crate::autodiff::{softmax, Graph, ParameterStore, Tensor, Var};
use crate::error::Result;
use crate::geometry::{decode_offsets, encode_offsets, iou, nms_indices, roi_grid, BBox};

pub fn init_head<R: Rng>(store: &mut ParameterStore, cfg: &DetectorConfig, n_classes: usize, rng: &mut R) -> Result<()> {
    init_dense(store, "head.fc1", cfg.roi_dim(), cfg.head_hidden, None, rng)?;
    init_dense(store, "head.fc2", cfg.head_hidden, cfg.head_hidden, None, rng)?;
    init_dense(store, "head.cls", cfg.head_hidden, n_classes + 1, Some(0.01), rng)?;
    init_dense(store, "head.reg", cfg.head_hidden, 4, Some(0.001), rng)
}

/// Bilinear `size×size` pooling of every box from a `C×H×W` map, one region
/// per row of the result.
pub fn roi_features(g: &mut Graph, fm: Var, boxes: &[BBox], stride: usize, size: usize) -> Result<Var> {
    let mut points = Vec::with_capacity(boxes.len() * size * size);
    for b in boxes {
        points.extend(roi_grid(b, stride, size, size));
    }
    let s = g.sample(fm, &points, None)?;
    regions_as_rows(g, s, boxes.len())
}

#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    /// Shared hidden features, `R×hidden`.
    pub feats: Var,
    /// `R×(K+1)` logits; column 0 is background.
    pub cls_logits: Var,
    /// `R×4` offsets relative to each region.
    pub offsets: Var,
}

pub fn head_forward(g: &mut Graph, store: &ParameterStore, roi: Var) -> Result<HeadOutput> {
    let h = dense(g, store, "head.fc1", roi)?;
    let h = g.relu(h)?;
    let h = dense(g, store, "head.fc2", h)?;
    let feats = g.relu(h)?;
    let cls_logits = dense(g, store, "head.cls", feats)?;
    let offsets = dense(g, store, "head.reg", feats)?;
    Ok(HeadOutput {
        feats,
        cls_logits,
        offsets,
    })
}

/// Regions sampled for one head loss evaluation; positives first.
#[derive(Debug, Clone, Default)]
pub struct RoiBatch {
    pub boxes: Vec<BBox>,
    /// 0 for background, `1 + class index` otherwise.
    pub labels: Vec<usize>,
    pub targets: Vec<[f64; 4]>,
    /// Ground-truth index of each positive region.
    pub matched: Vec<usize>,
    pub n_positive: usize,
}

/// Samples training regions from proposals plus the ground-truth boxes.
pub fn sample_rois<R: Rng>(proposals: &[BBox], gt: &[BBox], gt_labels: &[usize], cfg: &DetectorConfig, rng: &mut R) -> RoiBatch {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for b in proposals.iter().chain(gt) {
        let best = gt
            .iter()
            .enumerate()
            .map(|(i, t)| (i, iou(b, t)))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
        match best {
            Some((i, v)) if v >= cfg.head_positive_iou => pos.push((*b, i)),
            _ => neg.push(*b),
        }
    }
    pos.shuffle(rng);
    let max_pos = (cfg.head_batch as f64 * cfg.head_positive_fraction).round() as usize;
    pos.truncate(max_pos);
    neg.shuffle(rng);
    neg.truncate(cfg.head_batch - pos.len());
    let mut out = RoiBatch {
        n_positive: pos.len(),
        ..Default::default()
    };
    for (b, i) in pos {
        out.boxes.push(b);
        out.labels.push(1 + gt_labels[i]);
        out.targets.push(encode_offsets(&b, &gt[i]));
        out.matched.push(i);
    }
    for b in neg {
        out.boxes.push(b);
        out.labels.push(0);
        out.targets.push([0.0; 4]);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct DetLoss {
    pub rpn_cls: Var,
    pub rpn_reg: Var,
    pub head_cls: Var,
    pub head_reg: Var,
    pub total: Var,
}

/// Proposal-network and head losses: cross-entropy terms averaged over the
/// sampled anchors and regions, smooth-L1 terms averaged over positives.
pub fn detection_loss(
    g: &mut Graph,
    rpn: &RpnOutput,
    anchors: &AnchorSample,
    head: &HeadOutput,
    rois: &RoiBatch,
    beta: f64,
) -> Result<DetLoss> {
    let (rpn_cls, rpn_reg) = super::rpn::rpn_loss(g, rpn, anchors, beta)?;
    let r = rois.labels.len().max(1) as f64;
    let head_cls = g.cross_entropy(head.cls_logits, &rois.labels, &vec![1.0 / r; rois.labels.len()])?;
    let head_reg = if rois.n_positive == 0 {
        g.constant(Tensor::scalar(0.0))?
    } else {
        let rows: Vec<usize> = (0..rois.n_positive).collect();
        let x = g.gather_rows(head.offsets, &rows)?;
        let t: Vec<f64> = rois.targets[..rois.n_positive].iter().flatten().copied().collect();
        g.smooth_l1(x, &t, &vec![1.0 / rois.n_positive as f64; t.len()], beta)?
    };
    let a = g.add(rpn_cls, rpn_reg)?;
    let b = g.add(head_cls, head_reg)?;
    let total = g.add(a, b)?;
    Ok(DetLoss {
        rpn_cls,
        rpn_reg,
        head_cls,
        head_reg,
        total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDetection {
    /// Index into the chart kind's class list.
    pub class_index: usize,
    pub bbox: BBox,
    /// Objectness times the non-background probability.
    pub confidence: f64,
    /// Full class distribution, background first.
    pub class_dist: Vec<f64>,
}

/// Scores, refines, gates and suppresses head outputs for `proposals`.
/// Suppression runs per class; the result is sorted by confidence.
pub fn postprocess(
    g: &Graph,
    head: &HeadOutput,
    proposals: &[(BBox, f64)],
    width: f64,
    height: f64,
    threshold: f64,
    nms_iou: f64,
) -> Vec<RawDetection> {
    let logits = g.value(head.cls_logits);
    let k = logits.shape[1];
    let offsets = &g.value(head.offsets).data;
    let mut cands = Vec::new();
    for (i, (b, obj)) in proposals.iter().enumerate() {
        let p = softmax(&logits.data[i * k..(i + 1) * k]);
        let (best, _) = p[1..]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        let confidence = obj * (1.0 - p[0]);
        if confidence <= threshold {
            continue;
        }
        let bbox = decode_offsets(b, &offsets[4 * i..4 * i + 4]).clip(width, height);
        if bbox.w < 1.0 || bbox.h < 1.0 {
            continue;
        }
        cands.push(RawDetection {
            class_index: best,
            bbox,
            confidence,
            class_dist: p,
        });
    }
    let mut out = Vec::new();
    for c in 0..k - 1 {
        let same: Vec<&RawDetection> = cands.iter().filter(|d| d.class_index == c).collect();
        let boxes: Vec<BBox> = same.iter().map(|d| d.bbox).collect();
        let scores: Vec<f64> = same.iter().map(|d| d.confidence).collect();
        out.extend(nms_indices(&boxes, &scores, nms_iou).into_iter().map(|i| same[i].clone()));
    }
    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.class_index.cmp(&b.class_index)));
    out
}
