use crate::geometry::{iou, BBox};
use crate::infer::{BarTuple, ExtractionResult, PieTuple};

/// Error bands reported for tuples and values, as fractions.
pub const BANDS: [f64; 4] = [0.01, 0.05, 0.10, 0.25];

/// A scored detection of one class in chart `image`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub image: usize,
    pub score: f64,
    pub bbox: BBox,
}

/// All-point interpolated average precision for one class.
///
/// Predictions are visited by descending score (ties by input order); each
/// takes the unmatched ground truth of the same image with the highest IoU,
/// counting as a true positive when that IoU is at least `iou_match`. `None`
/// when there is nothing to score.
pub fn average_precision(preds: &[ScoredBox], gts: &[(usize, BBox)], iou_match: f64) -> Option<f64> {
    if gts.is_empty() {
        return if preds.is_empty() { None } else { Some(0.0) };
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    let mut used = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(preds.len());
    for &i in &order {
        let p = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, (img, g)) in gts.iter().enumerate() {
            if *img != p.image || used[j] {
                continue;
            }
            let o = iou(&p.bbox, g);
            if o >= iou_match && best.map_or(true, |(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
        }
        hits.push(best.is_some());
    }
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        recall.push(tp as f64 / gts.len() as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // Monotone envelope, then area under the recall steps.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_r) * p;
        prev_r = *r;
    }
    Some(ap)
}

/// `|pred − gt| / |gt|`. A zero ground truth gives 0 for an exact zero
/// prediction and infinity otherwise, so it never passes a band.
pub fn value_error(pred: f64, gt: f64) -> f64 {
    if gt == 0.0 {
        return if pred == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let e = (pred - gt).abs() / gt.abs();
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

pub fn texts_equal(a: &str, b: &str) -> bool {
    a.trim() == b.trim()
}

fn opt_texts_equal(a: Option<&str>, b: Option<&str>) -> bool {
    texts_equal(a.unwrap_or(""), b.unwrap_or(""))
}

/// A predicted or ground-truth tuple: one numeric field and its text fields.
pub trait Tuple {
    fn value(&self) -> f64;
    /// The label used first when aligning predicted and ground-truth lists.
    fn key(&self) -> &str;
    fn texts_match(&self, gt: &Self) -> bool;
}

impl Tuple for BarTuple {
    fn value(&self) -> f64 {
        self.value
    }

    fn key(&self) -> &str {
        &self.x_tick_label
    }

    fn texts_match(&self, gt: &Self) -> bool {
        texts_equal(&self.x_tick_label, &gt.x_tick_label)
            && texts_equal(&self.lower_tick_label, &gt.lower_tick_label)
            && texts_equal(&self.upper_tick_label, &gt.upper_tick_label)
    }
}

impl Tuple for PieTuple {
    fn value(&self) -> f64 {
        self.percentage
    }

    fn key(&self) -> &str {
        &self.legend
    }

    fn texts_match(&self, gt: &Self) -> bool {
        texts_equal(&self.legend, &gt.legend)
    }
}

/// True iff the value error is strictly below `band` and every text field
/// matches exactly.
pub fn tuple_match<T: Tuple>(pred: &T, gt: &T, band: f64) -> bool {
    value_error(pred.value(), gt.value()) < band && pred.texts_match(gt)
}

/// One-to-one alignment `(pred, gt)`: candidate pairs ordered by label
/// equality, then value error, then indices, and taken greedily.
pub fn align_tuples<T: Tuple>(preds: &[T], gts: &[T]) -> Vec<(usize, usize)> {
    let mut cands = Vec::with_capacity(preds.len() * gts.len());
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let same = texts_equal(p.key(), g.key());
            cands.push((!same, value_error(p.value(), g.value()), i, j));
        }
    }
    cands.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
    let mut pu = vec![false; preds.len()];
    let mut gu = vec![false; gts.len()];
    let mut out = Vec::new();
    for (_, _, i, j) in cands {
        if !pu[i] && !gu[j] {
            pu[i] = true;
            gu[j] = true;
            out.push((i, j));
        }
    }
    out.sort_by_key(|&(_, j)| j);
    out
}

fn all_tuples_within<T: Tuple>(preds: &[T], gts: &[T], band: f64) -> bool {
    preds.len() == gts.len() && {
        let pairs = align_tuples(preds, gts);
        pairs.len() == gts.len() && pairs.iter().all(|&(i, j)| tuple_match(&preds[i], &gts[j], band))
    }
}

/// Every tuple of the chart present and matched within the 1% band.
pub fn tuples_correct(pred: &ExtractionResult, gt: &ExtractionResult) -> bool {
    pred.chart_type == gt.chart_type
        && all_tuples_within(&pred.bars, &gt.bars, BANDS[0])
        && all_tuples_within(&pred.slices, &gt.slices, BANDS[0])
}

/// Whole-chart correctness: title, axis labels for bars, and all tuples
/// within 1%. Missing or extra tuples make the chart wrong.
pub fn chart_correct(pred: &ExtractionResult, gt: &ExtractionResult) -> bool {
    if pred.chart_type != gt.chart_type || !texts_equal(&pred.title, &gt.title) {
        return false;
    }
    let axes = match gt.chart_type {
        crate::corpus::ChartKind::Bar => {
            opt_texts_equal(pred.x_axis_label.as_deref(), gt.x_axis_label.as_deref())
                && opt_texts_equal(pred.y_axis_label.as_deref(), gt.y_axis_label.as_deref())
        }
        crate::corpus::ChartKind::Pie => true,
    };
    axes && tuples_correct(pred, gt)
}
