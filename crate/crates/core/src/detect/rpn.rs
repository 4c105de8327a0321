use rand::seq::SliceRandom;
use rand::Rng;

use super::{conv, init_conv, DetectorConfig};
use crate::autodiff::{sigmoid, Graph, ParameterStore, Tensor, Var};
use crate::error::Result;
use crate::geometry::{decode_offsets, generate_anchors, nms_indices, AnchorLabel, AnchorSet, AssignmentSet, BBox};

/// Per-anchor outputs in anchor index order.
#[derive(Debug, Clone)]
pub struct RpnOutput {
    /// `N×1` objectness logits.
    pub obj_logits: Var,
    /// `N×4` offsets relative to each anchor.
    pub offsets: Var,
    pub anchors: AnchorSet,
}

pub fn init_rpn<R: Rng>(store: &mut ParameterStore, cfg: &DetectorConfig, rng: &mut R) -> Result<()> {
    let c = cfg.top_channels();
    let a = cfg.anchors.per_cell();
    init_conv(store, "rpn.conv", c, c, 3, None, rng)?;
    init_conv(store, "rpn.obj", c, a, 1, Some(0.01), rng)?;
    init_conv(store, "rpn.reg", c, 4 * a, 1, Some(0.01), rng)
}

pub fn rpn_forward(g: &mut Graph, store: &ParameterStore, cfg: &DetectorConfig, top: Var) -> Result<RpnOutput> {
    let s = g.shape(top).to_vec();
    let (fm_h, fm_w) = (s[1], s[2]);
    let anchors = generate_anchors(fm_h, fm_w, &cfg.anchors);
    let a = anchors.per_cell;
    let h = conv(g, store, "rpn.conv", top)?;
    let h = g.relu(h)?;
    let obj = conv(g, store, "rpn.obj", h)?;
    let obj = g.reshape(obj, &[a, fm_h * fm_w])?;
    let obj = g.transpose(obj)?;
    let obj_logits = g.reshape(obj, &[fm_h * fm_w * a, 1])?;
    let reg = conv(g, store, "rpn.reg", h)?;
    let reg = g.reshape(reg, &[4 * a, fm_h * fm_w])?;
    let reg = g.transpose(reg)?;
    let offsets = g.reshape(reg, &[fm_h * fm_w * a, 4])?;
    Ok(RpnOutput {
        obj_logits,
        offsets,
        anchors,
    })
}

/// Decoded proposals `(box, objectness)`: the `pre_nms_top` highest-scoring
/// anchors, clipped to the image, suppressed at `proposal_nms_iou` and cut to
/// `post_nms_top`. Ties keep the lower anchor index first.
pub fn rpn_proposals(g: &Graph, out: &RpnOutput, cfg: &DetectorConfig, width: f64, height: f64) -> Vec<(BBox, f64)> {
    let logits = &g.value(out.obj_logits).data;
    let offsets = &g.value(out.offsets).data;
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.truncate(cfg.pre_nms_top);
    let mut boxes = Vec::with_capacity(order.len());
    let mut scores = Vec::with_capacity(order.len());
    for &i in &order {
        let b = decode_offsets(&out.anchors.boxes[i], &offsets[4 * i..4 * i + 4]).clip(width, height);
        if b.w >= 1.0 && b.h >= 1.0 {
            boxes.push(b);
            scores.push(sigmoid(logits[i]));
        }
    }
    nms_indices(&boxes, &scores, cfg.proposal_nms_iou)
        .into_iter()
        .take(cfg.post_nms_top)
        .map(|i| (boxes[i], scores[i]))
        .collect()
}

/// Anchors drawn for one RPN loss evaluation.
#[derive(Debug, Clone, Default)]
pub struct AnchorSample {
    pub indices: Vec<usize>,
    /// 1 for positive, 0 for negative, aligned with `indices`.
    pub labels: Vec<f64>,
    /// Positive anchors with their regression targets.
    pub positives: Vec<(usize, [f64; 4])>,
}

/// Up to `batch` anchors with at most half positive.
pub fn sample_anchors<R: Rng>(assign: &AssignmentSet, batch: usize, rng: &mut R) -> AnchorSample {
    let mut pos: Vec<usize> = assign.positives().map(|(i, _)| i).collect();
    let mut neg: Vec<usize> = assign.negatives().collect();
    pos.shuffle(rng);
    pos.truncate(batch / 2);
    neg.shuffle(rng);
    neg.truncate(batch - pos.len());
    let mut s = AnchorSample::default();
    for &i in &pos {
        s.indices.push(i);
        s.labels.push(1.0);
        s.positives.push((i, assign.targets[i]));
    }
    for &i in &neg {
        debug_assert_eq!(assign.labels[i], AnchorLabel::Negative);
        s.indices.push(i);
        s.labels.push(0.0);
    }
    s
}

/// `(objectness loss, regression loss)`: mean binary cross-entropy over the
/// sampled anchors and mean smooth-L1 over the positives (0 without any).
pub fn rpn_loss(g: &mut Graph, out: &RpnOutput, sample: &AnchorSample, beta: f64) -> Result<(Var, Var)> {
    let n = sample.indices.len().max(1) as f64;
    let logits = g.gather_rows(out.obj_logits, &sample.indices)?;
    let cls = g.bce_logits(logits, &sample.labels, &vec![1.0 / n; sample.indices.len()])?;
    let reg = if sample.positives.is_empty() {
        g.constant(Tensor::scalar(0.0))?
    } else {
        let rows: Vec<usize> = sample.positives.iter().map(|p| p.0).collect();
        let targets: Vec<f64> = sample.positives.iter().flat_map(|p| p.1).collect();
        let x = g.gather_rows(out.offsets, &rows)?;
        let w = 1.0 / rows.len() as f64;
        g.smooth_l1(x, &targets, &vec![w; targets.len()], beta)?
    };
    Ok((cls, reg))
}
