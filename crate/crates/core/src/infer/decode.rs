use serde::{Deserialize, Serialize};

use super::result::{BarTuple, DetectionRecord, ExtractionResult, PieTuple};
use super::{InferenceConfig, Percept};
use crate::corpus::{ChartKind, ObjectClass, RelationKind};
use crate::error::{Error, Result};

/// How bar tops are mapped to values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Line through the two ticks nearest to the bar top.
    NearestPair,
    /// Least-squares line through every parsed tick.
    LeastSquares,
}

/// Parses a tick label: integers, decimals, `,` thousands separators and a
/// trailing `%`.
pub fn parse_tick_value(text: &str) -> Option<f64> {
    let t = text.trim();
    let t = t.strip_suffix('%').unwrap_or(t).trim();
    if t.is_empty() {
        return None;
    }
    let cleaned: String = t.chars().filter(|&c| c != ',').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Value at pixel row `y` from `(row, value)` tick anchors.
pub fn interpolate_value(y: f64, anchors: &[(f64, f64)], mode: Calibration) -> Result<f64> {
    let insufficient = || Error::Extraction("insufficient axis calibration".into());
    let first = anchors.first().ok_or_else(insufficient)?;
    if anchors.iter().all(|a| a.0 == first.0) {
        return Err(insufficient());
    }
    match mode {
        Calibration::NearestPair => {
            let mut sorted: Vec<(f64, f64)> = anchors.to_vec();
            sorted.sort_by(|a, b| (a.0 - y).abs().total_cmp(&(b.0 - y).abs()).then(a.0.total_cmp(&b.0)));
            let (r1, v1) = sorted[0];
            let &(r2, v2) = sorted.iter().find(|a| a.0 != r1).ok_or_else(insufficient)?;
            Ok(v1 + (y - r1) * (v2 - v1) / (r2 - r1))
        }
        Calibration::LeastSquares => {
            let n = anchors.len() as f64;
            let mr = anchors.iter().map(|a| a.0).sum::<f64>() / n;
            let mv = anchors.iter().map(|a| a.1).sum::<f64>() / n;
            let sxy: f64 = anchors.iter().map(|a| (a.0 - mr) * (a.1 - mv)).sum();
            let sxx: f64 = anchors.iter().map(|a| (a.0 - mr).powi(2)).sum();
            Ok(mv + (y - mr) * sxy / sxx)
        }
    }
}

/// Labels of the tick immediately below (largest tick `≤ value`) and above
/// (smallest tick `> value`); empty when there is none.
pub fn tick_bounds(value: f64, ticks: &[(f64, String)]) -> (String, String) {
    let mut lower: Option<&(f64, String)> = None;
    let mut upper: Option<&(f64, String)> = None;
    for t in ticks {
        if t.0 <= value {
            if lower.is_none_or(|l| t.0 > l.0) {
                lower = Some(t);
            }
        } else if upper.is_none_or(|u| t.0 < u.0) {
            upper = Some(t);
        }
    }
    (
        lower.map(|t| t.1.clone()).unwrap_or_default(),
        upper.map(|t| t.1.clone()).unwrap_or_default(),
    )
}

/// Greedy best-first one-to-one assignment over scored `(a, b, score)`
/// triples. Ties go to the smaller `a`, then the smaller `b`.
pub fn assign_greedy(scores: &[(usize, usize, f64)]) -> Vec<(usize, usize)> {
    let mut order: Vec<&(usize, usize, f64)> = scores.iter().collect();
    order.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut used_a = std::collections::HashSet::new();
    let mut used_b = std::collections::HashSet::new();
    let mut out = Vec::new();
    for &&(a, b, _) in &order {
        if !used_a.contains(&a) && !used_b.contains(&b) {
            used_a.insert(a);
            used_b.insert(b);
            out.push((a, b));
        }
    }
    out
}

/// Angles reduced to `[0, 360)` and sorted counter-clockwise, with the
/// original index of each.
pub fn canonical_angles(angles: &[f64]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = angles
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let r = a.rem_euclid(360.0);
            (i, if r >= 360.0 { 0.0 } else { r })
        })
        .collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v
}

/// Slice percentages from sorted boundary angles. Slice `i` spans from
/// boundary `i` to boundary `i + 1` counter-clockwise; the last closes the
/// circle, so the list sums to 100.
pub fn percentages_from_angles(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![100.0];
    }
    let mut out: Vec<f64> = (0..n - 1)
        .map(|i| (sorted[i + 1] - sorted[i]).rem_euclid(360.0) / 360.0 * 100.0)
        .collect();
    let head: f64 = out.iter().sum();
    out.push(100.0 - head);
    out
}

struct Gated<'a> {
    p: &'a Percept,
    keep: Vec<bool>,
}

impl<'a> Gated<'a> {
    fn new(p: &'a Percept, threshold: f64) -> Self {
        Gated {
            p,
            keep: p.detections.iter().map(|d| d.confidence > threshold).collect(),
        }
    }

    fn of(&self, class: ObjectClass) -> Vec<usize> {
        (0..self.p.detections.len())
            .filter(|&i| self.keep[i] && self.p.detections[i].class == class)
            .collect()
    }

    fn best_text(&self, class: ObjectClass) -> String {
        let mut best: Option<usize> = None;
        for i in self.of(class) {
            if best.is_none_or(|b| self.p.detections[i].confidence > self.p.detections[b].confidence) {
                best = Some(i);
            }
        }
        best.and_then(|i| self.p.detections[i].text.clone()).unwrap_or_default()
    }

    /// Scores of `kind` whose endpoints both survived gating (`a` is exempt
    /// for slice relations).
    fn scores(&self, kind: RelationKind) -> Vec<(usize, usize, f64)> {
        self.p
            .pair_scores
            .iter()
            .filter(|s| s.kind == kind && self.keep.get(s.b) == Some(&true))
            .filter(|s| kind == RelationKind::SliceLegendMark || self.keep.get(s.a) == Some(&true))
            .map(|s| (s.a, s.b, s.score))
            .collect()
    }

    fn text(&self, i: usize) -> String {
        self.p.detections[i].text.clone().unwrap_or_default()
    }

    fn records(&self) -> Vec<DetectionRecord> {
        self.p
            .detections
            .iter()
            .zip(&self.keep)
            .filter(|(_, &k)| k)
            .map(|(d, _)| DetectionRecord {
                class: d.class,
                bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                confidence: d.confidence,
                orientation_deg: d.orientation_deg,
                text: d.text.clone(),
            })
            .collect()
    }

    /// Legend label text per legend-mark detection index.
    fn mark_labels(&self) -> std::collections::HashMap<usize, String> {
        assign_greedy(&self.scores(RelationKind::LegendMarkLabel))
            .into_iter()
            .map(|(m, l)| (m, self.text(l)))
            .collect()
    }
}

pub fn decode(p: &Percept, cfg: &InferenceConfig) -> Result<ExtractionResult> {
    match p.kind {
        ChartKind::Bar => decode_bar(p, cfg),
        ChartKind::Pie => decode_pie(p, cfg),
    }
}

pub fn decode_bar(p: &Percept, cfg: &InferenceConfig) -> Result<ExtractionResult> {
    let g = Gated::new(p, cfg.confidence_threshold);
    let det = &p.detections;

    let line_of: std::collections::HashMap<usize, usize> =
        assign_greedy(&g.scores(RelationKind::YTickLabelLine)).into_iter().collect();
    let mut anchors = Vec::new();
    let mut ticks = Vec::new();
    for l in g.of(ObjectClass::YTickLabel) {
        let text = g.text(l);
        let Some(v) = parse_tick_value(&text) else { continue };
        let row = match line_of.get(&l) {
            Some(&line) => det[line].bbox.center().1,
            None => det[l].bbox.center().1,
        };
        anchors.push((row, v));
        ticks.push((v, text));
    }

    let bars = g.of(ObjectClass::Bar);
    if bars.is_empty() {
        return Err(Error::Extraction("no bars detected".into()));
    }
    let mark_labels = g.mark_labels();
    let x_ticks = g.of(ObjectClass::XTickLabel);
    let mut label_of: std::collections::HashMap<usize, String> = std::collections::HashMap::new();
    if !mark_labels.is_empty() {
        // Grouped chart: one bar per legend mark within each group; groups
        // are the bars sharing the nearest x-tick label.
        let group = |b: usize| {
            let cx = det[b].bbox.center().0;
            x_ticks
                .iter()
                .min_by(|&&i, &&j| {
                    (det[i].bbox.center().0 - cx)
                        .abs()
                        .total_cmp(&(det[j].bbox.center().0 - cx).abs())
                        .then(i.cmp(&j))
                })
                .copied()
        };
        let scores: Vec<(usize, usize, f64)> = g
            .scores(RelationKind::BarLegendMark)
            .into_iter()
            .filter(|s| mark_labels.contains_key(&s.1))
            .collect();
        let mut order = scores.clone();
        order.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
        let mut used = std::collections::HashSet::new();
        for &(b, m, _) in &order {
            if label_of.contains_key(&b) || !used.insert((group(b), m)) {
                continue;
            }
            label_of.insert(b, mark_labels[&m].clone());
        }
        for &b in &bars {
            if label_of.contains_key(&b) {
                continue;
            }
            let best = scores
                .iter()
                .filter(|s| s.0 == b)
                .max_by(|x, y| x.2.total_cmp(&y.2).then(y.1.cmp(&x.1)));
            if let Some(&(_, m, _)) = best {
                label_of.insert(b, mark_labels[&m].clone());
            }
        }
    } else {
        for (b, t) in assign_greedy(&g.scores(RelationKind::BarXTickLabel)) {
            label_of.insert(b, g.text(t));
        }
    }

    let mut ordered = bars.clone();
    ordered.sort_by(|&a, &b| det[a].bbox.x.total_cmp(&det[b].bbox.x).then(a.cmp(&b)));
    let mut tuples = Vec::with_capacity(ordered.len());
    for b in ordered {
        let value = interpolate_value(det[b].bbox.y, &anchors, cfg.calibration)?;
        let (lower_tick_label, upper_tick_label) = tick_bounds(value, &ticks);
        tuples.push(BarTuple {
            x_tick_label: label_of.remove(&b).unwrap_or_default(),
            value,
            lower_tick_label,
            upper_tick_label,
        });
    }
    Ok(ExtractionResult {
        chart_type: ChartKind::Bar,
        chart_type_confidence: p.kind_confidence,
        title: g.best_text(ObjectClass::Title),
        x_axis_label: Some(g.best_text(ObjectClass::XAxisLabel)),
        y_axis_label: Some(g.best_text(ObjectClass::YAxisLabel)),
        bars: tuples,
        slices: Vec::new(),
        detections: g.records(),
        flags: p.flags.clone(),
    })
}

pub fn decode_pie(p: &Percept, cfg: &InferenceConfig) -> Result<ExtractionResult> {
    let g = Gated::new(p, cfg.confidence_threshold);
    if g.of(ObjectClass::Pie).is_empty() {
        return Err(Error::Extraction("no pie detected".into()));
    }
    let canon = canonical_angles(&p.slice_angles_deg);
    if canon.is_empty() {
        return Err(Error::Extraction("no slice boundaries decoded".into()));
    }
    let sorted: Vec<f64> = canon.iter().map(|c| c.1).collect();
    let mut position = vec![0; canon.len()];
    for (k, &(orig, _)) in canon.iter().enumerate() {
        position[orig] = k;
    }
    let mark_labels = g.mark_labels();
    let slice_scores: Vec<(usize, usize, f64)> = g
        .scores(RelationKind::SliceLegendMark)
        .into_iter()
        .filter(|s| s.0 < position.len())
        .map(|(a, b, s)| (position[a], b, s))
        .collect();
    let mut legend = vec![String::new(); sorted.len()];
    for (k, m) in assign_greedy(&slice_scores) {
        legend[k] = mark_labels.get(&m).cloned().unwrap_or_default();
    }
    let slices = percentages_from_angles(&sorted)
        .into_iter()
        .zip(legend)
        .map(|(percentage, legend)| PieTuple { legend, percentage })
        .collect();
    Ok(ExtractionResult {
        chart_type: ChartKind::Pie,
        chart_type_confidence: p.kind_confidence,
        title: g.best_text(ObjectClass::Title),
        x_axis_label: None,
        y_axis_label: None,
        bars: Vec::new(),
        slices,
        detections: g.records(),
        flags: p.flags.clone(),
    })
}
