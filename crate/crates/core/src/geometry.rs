//! Detection geometry: boxes, anchors, IoU, anchor assignment, NMS, box
//! mapping between image and feature space, and the sampling grids used for
//! bilinear feature resampling (rotation, RoI pooling, oriented text crops).
//!
//! Feature maps are stored channel-major (`C×H×W`). Sample points are given in
//! cell-index coordinates: the center of cell `(i, j)` is `(i as f64, j as f64)`.
//! Angles are degrees, counter-clockwise positive as seen on screen (image y
//! grows downward).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixels, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let iw = self.x2().min(other.x2()) - self.x.max(other.x);
        let ih = self.y2().min(other.y2()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Clips to `[0, width] × [0, height]`, keeping at least a 1 px extent.
    pub fn clip(&self, width: f64, height: f64) -> BBox {
        let x1 = self.x.clamp(0.0, width - 1.0);
        let y1 = self.y.clamp(0.0, height - 1.0);
        let x2 = self.x2().clamp(x1 + 1.0, width);
        let y2 = self.y2().clamp(y1 + 1.0, height);
        BBox::from_corners(x1, y1, x2, y2)
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.x2() <= self.x2() && other.y2() <= self.y2()
    }
}

/// Intersection over union; symmetric, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorConfig {
    pub aspect_ratios: Vec<f64>,
    pub scales: Vec<f64>,
    /// Image pixels per feature-map cell.
    pub stride: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            aspect_ratios: vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
            scales: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            stride: 8,
        }
    }
}

impl AnchorConfig {
    pub fn per_cell(&self) -> usize {
        self.aspect_ratios.len() * self.scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.aspect_ratios.is_empty() || self.aspect_ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("anchors.aspect_ratios", "must be non-empty and positive"));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config("anchors.scales", "must be non-empty and positive"));
        }
        if self.stride == 0 {
            return Err(Error::config("anchors.stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Anchor shape `(w, h)` for one ratio/scale pair: area `(scale·stride)²`, `h/w = ratio`.
    pub fn anchor_size(&self, ratio: f64, scale: f64) -> (f64, f64) {
        let side = scale * self.stride as f64;
        let w = side / ratio.sqrt();
        let h = side * ratio.sqrt();
        (w, h)
    }
}

/// Anchors tiled over a feature map. Index layout: `(row·fm_w + col)·per_cell + ratio_idx·|scales| + scale_idx`.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    pub fm_h: usize,
    pub fm_w: usize,
    pub per_cell: usize,
    pub boxes: Vec<BBox>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

pub fn generate_anchors(fm_h: usize, fm_w: usize, cfg: &AnchorConfig) -> AnchorSet {
    let stride = cfg.stride as f64;
    let shapes: Vec<(f64, f64)> = cfg
        .aspect_ratios
        .iter()
        .flat_map(|&r| cfg.scales.iter().map(move |&s| (r, s)))
        .map(|(r, s)| cfg.anchor_size(r, s))
        .collect();
    let mut boxes = Vec::with_capacity(fm_h * fm_w * shapes.len());
    for row in 0..fm_h {
        for col in 0..fm_w {
            let cx = (col as f64 + 0.5) * stride;
            let cy = (row as f64 + 0.5) * stride;
            for &(w, h) in &shapes {
                boxes.push(BBox::new(cx - 0.5 * w, cy - 0.5 * h, w, h));
            }
        }
    }
    AnchorSet {
        fm_h,
        fm_w,
        per_cell: shapes.len(),
        boxes,
    }
}

/// Regression target `(Δx/w_a, Δy/h_a, ln(w/w_a), ln(h/h_a))` between centers.
pub fn encode_offsets(anchor: &BBox, target: &BBox) -> [f64; 4] {
    let (ax, ay) = anchor.center();
    let (tx, ty) = target.center();
    [
        (tx - ax) / anchor.w,
        (ty - ay) / anchor.h,
        (target.w / anchor.w).ln(),
        (target.h / anchor.h).ln(),
    ]
}

/// Inverse of [`encode_offsets`]. Log-size deltas are clamped so a wild
/// prediction cannot overflow.
pub fn decode_offsets(anchor: &BBox, d: &[f64]) -> BBox {
    const MAX_LOG: f64 = 4.5;
    let (ax, ay) = anchor.center();
    let cx = ax + d[0] * anchor.w;
    let cy = ay + d[1] * anchor.h;
    let w = anchor.w * d[2].clamp(-MAX_LOG, MAX_LOG).exp();
    let h = anchor.h * d[3].clamp(-MAX_LOG, MAX_LOG).exp();
    BBox::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorLabel {
    Positive(usize),
    Negative,
    Ignore,
}

#[derive(Debug, Clone)]
pub struct AssignmentSet {
    pub labels: Vec<AnchorLabel>,
    /// Regression target per anchor; zeros for non-positives.
    pub targets: Vec<[f64; 4]>,
}

impl AssignmentSet {
    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().enumerate().filter_map(|(i, l)| match l {
            AnchorLabel::Positive(g) => Some((i, *g)),
            _ => None,
        })
    }

    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, AnchorLabel::Negative).then_some(i))
    }
}

/// Labels anchors against ground truth. Positive when the best IoU reaches
/// `pos_thresh`, negative below `neg_thresh`, ignored in between; each ground
/// truth additionally claims its best anchor(s) as positive.
pub fn assign_anchors(
    anchors: &[BBox],
    gt: &[BBox],
    pos_thresh: f64,
    neg_thresh: f64,
) -> Result<AssignmentSet> {
    if pos_thresh < neg_thresh {
        return Err(Error::config(
            "assignment thresholds",
            format!("pos_thresh {pos_thresh} < neg_thresh {neg_thresh}"),
        ));
    }
    let n = anchors.len();
    if gt.is_empty() {
        return Ok(AssignmentSet {
            labels: vec![AnchorLabel::Negative; n],
            targets: vec![[0.0; 4]; n],
        });
    }
    let mut best_gt = vec![(0usize, -1.0f64); n];
    let mut gt_best = vec![0.0f64; gt.len()];
    for (i, a) in anchors.iter().enumerate() {
        for (g, b) in gt.iter().enumerate() {
            let v = iou(a, b);
            if v > best_gt[i].1 {
                best_gt[i] = (g, v);
            }
            if v > gt_best[g] {
                gt_best[g] = v;
            }
        }
    }
    let mut labels: Vec<AnchorLabel> = best_gt
        .iter()
        .map(|&(g, v)| {
            if v >= pos_thresh {
                AnchorLabel::Positive(g)
            } else if v < neg_thresh {
                AnchorLabel::Negative
            } else {
                AnchorLabel::Ignore
            }
        })
        .collect();
    // Fallback: every ground truth keeps its argmax anchor(s), even at low IoU.
    for (g, b) in gt.iter().enumerate() {
        if gt_best[g] <= 0.0 {
            // Disjoint from every anchor: take the anchor with the nearest center.
            let (bx, by) = b.center();
            let nearest = anchors
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let (ax, ay) = a.center();
                    (i, (ax - bx).powi(2) + (ay - by).powi(2))
                })
                .min_by(|p, q| p.1.total_cmp(&q.1))
                .map(|p| p.0);
            if let Some(i) = nearest {
                labels[i] = AnchorLabel::Positive(g);
            }
            continue;
        }
        for (i, a) in anchors.iter().enumerate() {
            if iou(a, b) == gt_best[g] {
                labels[i] = AnchorLabel::Positive(g);
            }
        }
    }
    let targets = labels
        .iter()
        .zip(anchors)
        .map(|(l, a)| match l {
            AnchorLabel::Positive(g) => encode_offsets(a, &gt[*g]),
            _ => [0.0; 4],
        })
        .collect();
    Ok(AssignmentSet { labels, targets })
}

/// Greedy NMS returning kept indices in descending score order. Equal scores
/// keep the lower input index first.
pub fn nms_indices(boxes: &[BBox], scores: &[f64], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut suppressed = vec![false; boxes.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&boxes[i], &boxes[j]) > iou_thresh {
                suppressed[j] = true;
            }
        }
    }
    keep
}

pub fn nms(scored: &[(BBox, f64)], iou_thresh: f64) -> Vec<(BBox, f64)> {
    let boxes: Vec<BBox> = scored.iter().map(|s| s.0).collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
    nms_indices(&boxes, &scores, iou_thresh)
        .into_iter()
        .map(|i| scored[i])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    ImageToFeature,
    FeatureToImage,
}

/// Scales a box between image and feature space. Image→feature floors the
/// near edges and ceils the far ones, so a round trip never shrinks the box.
pub fn map_box(b: &BBox, stride: usize, direction: MapDirection) -> BBox {
    let s = stride.max(1) as f64;
    match direction {
        MapDirection::ImageToFeature => {
            let x1 = (b.x / s).floor();
            let y1 = (b.y / s).floor();
            let x2 = (b.x2() / s).ceil();
            let y2 = (b.y2() / s).ceil();
            BBox::from_corners(x1, y1, x2.max(x1 + 1.0), y2.max(y1 + 1.0))
        }
        MapDirection::FeatureToImage => BBox::new(b.x * s, b.y * s, b.w * s, b.h * s),
    }
}

/// Four bilinear taps `(flat index, weight)` for a sample at `(y, x)` on an
/// `h×w` grid. Taps outside the grid are dropped (zero padding).
#[inline]
pub fn bilinear_taps(h: usize, w: usize, y: f64, x: f64) -> [(usize, f64); 4] {
    let mut taps = [(0usize, 0.0f64); 4];
    if !(y > -1.0 && x > -1.0 && y < h as f64 && x < w as f64) {
        return taps;
    }
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let y0 = y0 as isize;
    let x0 = x0 as isize;
    let corners = [
        (y0, x0, (1.0 - fy) * (1.0 - fx)),
        (y0, x0 + 1, (1.0 - fy) * fx),
        (y0 + 1, x0, fy * (1.0 - fx)),
        (y0 + 1, x0 + 1, fy * fx),
    ];
    for (k, &(yy, xx, wt)) in corners.iter().enumerate() {
        if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
            taps[k] = (yy as usize * w + xx as usize, wt);
        }
    }
    taps
}

/// Samples a `C×H×W` array at `points` (row, col), producing `C×points.len()`.
pub fn bilinear_sample(data: &[f64], c: usize, h: usize, w: usize, points: &[(f64, f64)]) -> Vec<f64> {
    let n = points.len();
    let mut out = vec![0.0; c * n];
    for (p, &(y, x)) in points.iter().enumerate() {
        let taps = bilinear_taps(h, w, y, x);
        for ch in 0..c {
            let plane = &data[ch * h * w..(ch + 1) * h * w];
            out[ch * n + p] = taps.iter().map(|&(i, wt)| wt * plane[i]).sum();
        }
    }
    out
}

/// Source sample points for rotating an `h×w` map by `angle_deg`
/// counter-clockwise about its center. Output cell `k = i·w + j` reads from
/// `grid[k]`.
pub fn rotation_grid(h: usize, w: usize, angle_deg: f64) -> Vec<(f64, f64)> {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mut grid = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            // Screen coordinates: u right, v up.
            let u = j as f64 - cx;
            let v = cy - i as f64;
            let su = u * c + v * s;
            let sv = -u * s + v * c;
            grid.push((cy - sv, cx + su));
        }
    }
    grid
}

/// Rotates a `C×H×W` map counter-clockwise by `angle_deg` with bilinear
/// resampling and zero fill.
pub fn rotate_feature_map(data: &[f64], c: usize, h: usize, w: usize, angle_deg: f64) -> Vec<f64> {
    if angle_deg == 0.0 {
        return data.to_vec();
    }
    bilinear_sample(data, c, h, w, &rotation_grid(h, w, angle_deg))
}

/// Bin-center sample points for pooling `b` (in image pixels) from a map of
/// the given stride into an `out_h×out_w` grid.
pub fn roi_grid(b: &BBox, stride: usize, out_h: usize, out_w: usize) -> Vec<(f64, f64)> {
    let s = stride as f64;
    let (x, y, w, h) = (b.x / s, b.y / s, b.w / s, b.h / s);
    let mut grid = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        for j in 0..out_w {
            let py = y + (i as f64 + 0.5) * h / out_h as f64 - 0.5;
            let px = x + (j as f64 + 0.5) * w / out_w as f64 - 0.5;
            grid.push((py, px));
        }
    }
    grid
}

/// Sample points for reading a line of text of pixel `length × thickness`
/// centered at `center`, written along `angle_deg`. Rows run across the text
/// (top of glyphs first), columns along the reading direction.
pub fn oriented_crop_grid(
    center: (f64, f64),
    length: f64,
    thickness: f64,
    angle_deg: f64,
    stride: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<(f64, f64)> {
    let s = stride as f64;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    // Reading direction and glyph-down direction in image coordinates.
    let dir = (cos, -sin);
    let down = (sin, cos);
    let mut grid = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let across = ((r as f64 + 0.5) / out_h as f64 - 0.5) * thickness;
        for col in 0..out_w {
            let along = ((col as f64 + 0.5) / out_w as f64 - 0.5) * length;
            let px = center.0 + along * dir.0 + across * down.0;
            let py = center.1 + along * dir.1 + across * down.1;
            grid.push((py / s - 0.5, px / s - 0.5));
        }
    }
    grid
}

/// Recovers the text line's `(length, thickness)` from its axis-aligned box
/// and orientation. Near 45° the system is singular and `fallback_thickness`
/// is used.
pub fn text_extent(b: &BBox, angle_deg: f64, fallback_thickness: f64) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (s, c) = (s.abs(), c.abs());
    let det = c * c - s * s;
    if det.abs() > 0.2 {
        let len = (b.w * c - b.h * s) / det;
        let thick = (b.h * c - b.w * s) / det;
        if len > 0.0 && thick > 0.0 {
            return (len, thick);
        }
    }
    let t = fallback_thickness.min(b.w.min(b.h));
    let len = if c >= s { (b.w - t * s) / c } else { (b.h - t * c) / s };
    (len.max(1.0), t.max(1.0))
}
