//! Scoring predicted extractions against ground truth: per-class average
//! precision and chart, element and tuple accuracies at error bands.
//!
//! Charts are aligned by id (the image file stem). Tuple-level rates use the
//! ground-truth tuple count as denominator, so missing tuples count as wrong
//! and extra predicted tuples are ignored.

mod metrics;

pub use metrics::{
    align_tuples, average_precision, chart_correct, texts_equal, tuple_match, tuples_correct, value_error, ScoredBox, Tuple,
    BANDS,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{ChartKind, Dataset, ObjectClass};
use crate::error::{Error, Result};
use crate::infer::ExtractionResult;
use crate::par::{map_slice, Parallelism};

/// IoU needed for a detection to count as a true positive.
pub const AP_IOU: f64 = 0.5;

/// Notes recorded in every report about how ambiguous rows are scored.
pub const INTERPRETATION_NOTES: [&str; 3] = [
    "lower/upper value rows are exact-match accuracy of the lower/upper y-tick labels",
    "a zero ground-truth value matches only an exact zero prediction",
    "text comparison ignores leading and trailing whitespace only",
];

/// Rates at the 1/5/10/25% bands.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bands {
    #[serde(rename = "1%")]
    pub e1: f64,
    #[serde(rename = "5%")]
    pub e5: f64,
    #[serde(rename = "10%")]
    pub e10: f64,
    #[serde(rename = "25%")]
    pub e25: f64,
}

impl Bands {
    pub fn as_array(&self) -> [f64; 4] {
        [self.e1, self.e5, self.e10, self.e25]
    }

    fn from_counts(c: [usize; 4], n: usize) -> Self {
        let r = |k: usize| rate(c[k], n);
        Bands {
            e1: r(0),
            e5: r(1),
            e10: r(2),
            e25: r(3),
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.e1 <= self.e5 && self.e5 <= self.e10 && self.e10 <= self.e25
    }
}

fn rate(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarTable {
    pub charts: usize,
    pub tuples: usize,
    pub all: f64,
    pub title: f64,
    pub x_axis_label: f64,
    pub y_axis_label: f64,
    /// Charts whose tuples are all present and within 1%.
    pub all_tuples_1pct: f64,
    pub tuple: Bands,
    pub x_tick_label: f64,
    pub lower_value: f64,
    pub upper_value: f64,
    pub value: Bands,
    pub ap: IndexMap<String, Option<f64>>,
    pub mean_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieTable {
    pub charts: usize,
    pub tuples: usize,
    pub all: f64,
    pub title: f64,
    pub all_tuples_1pct: f64,
    pub tuple: Bands,
    pub legend: f64,
    pub percent: Bands,
    pub ap: IndexMap<String, Option<f64>>,
    pub mean_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub charts: usize,
    pub predictions: usize,
    /// Ground-truth charts with no prediction; scored as empty.
    pub missing_predictions: usize,
    pub gt_tuples: usize,
    pub predicted_tuples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub counts: ReportCounts,
    pub chart_type_accuracy: f64,
    pub bar: Option<BarTable>,
    pub pie: Option<PieTable>,
    pub notes: Vec<String>,
}

/// Per-chart tallies; summing them is associative.
#[derive(Debug, Clone, Default)]
struct ChartScore {
    type_ok: bool,
    all: bool,
    title: bool,
    x_axis: bool,
    y_axis: bool,
    tuples_ok: bool,
    gt_tuples: usize,
    pred_tuples: usize,
    tuple: [usize; 4],
    label: usize,
    lower: usize,
    upper: usize,
    value: [usize; 4],
}

fn score_chart(pred: Option<&ExtractionResult>, gt: &ExtractionResult) -> ChartScore {
    let mut s = ChartScore {
        gt_tuples: gt.bars.len() + gt.slices.len(),
        ..Default::default()
    };
    let Some(p) = pred else { return s };
    s.pred_tuples = p.bars.len() + p.slices.len();
    s.type_ok = p.chart_type == gt.chart_type;
    s.title = texts_equal(&p.title, &gt.title);
    let opt = |a: &Option<String>, b: &Option<String>| texts_equal(a.as_deref().unwrap_or(""), b.as_deref().unwrap_or(""));
    s.x_axis = opt(&p.x_axis_label, &gt.x_axis_label);
    s.y_axis = opt(&p.y_axis_label, &gt.y_axis_label);
    s.all = chart_correct(p, gt);
    s.tuples_ok = tuples_correct(p, gt);
    if !s.type_ok {
        return s;
    }
    match gt.chart_type {
        ChartKind::Bar => {
            for (i, j) in align_tuples(&p.bars, &gt.bars) {
                let (a, b) = (&p.bars[i], &gt.bars[j]);
                tally(&mut s, a, b);
                s.lower += usize::from(texts_equal(&a.lower_tick_label, &b.lower_tick_label));
                s.upper += usize::from(texts_equal(&a.upper_tick_label, &b.upper_tick_label));
            }
        }
        ChartKind::Pie => {
            for (i, j) in align_tuples(&p.slices, &gt.slices) {
                tally(&mut s, &p.slices[i], &gt.slices[j]);
            }
        }
    }
    s
}

fn tally<T: Tuple>(s: &mut ChartScore, a: &T, b: &T) {
    let e = value_error(a.value(), b.value());
    let texts = a.texts_match(b);
    for (k, &band) in BANDS.iter().enumerate() {
        s.value[k] += usize::from(e < band);
        s.tuple[k] += usize::from(e < band && texts);
    }
    s.label += usize::from(texts_equal(a.key(), b.key()));
}

fn class_ap(kind: ChartKind, charts: &[(Option<&ExtractionResult>, &ExtractionResult)]) -> (IndexMap<String, Option<f64>>, Option<f64>) {
    let mut out = IndexMap::new();
    for &class in kind.classes() {
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for (img, (p, g)) in charts.iter().enumerate() {
            gts.extend(g.detections.iter().filter(|d| d.class == class).map(|d| (img, bbox(d.bbox))));
            if let Some(p) = p {
                preds.extend(p.detections.iter().filter(|d| d.class == class).map(|d| ScoredBox {
                    image: img,
                    score: d.confidence,
                    bbox: bbox(d.bbox),
                }));
            }
        }
        out.insert(class_name(class), average_precision(&preds, &gts, AP_IOU));
    }
    let defined: Vec<f64> = out.values().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (out, mean)
}

fn bbox(b: [f64; 4]) -> crate::geometry::BBox {
    crate::geometry::BBox::new(b[0], b[1], b[2], b[3])
}

pub fn class_name(c: ObjectClass) -> String {
    serde_json::to_value(c).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Scores `preds` against `gts`, both keyed by chart id. A prediction without
/// a ground-truth chart is an input error; a ground-truth chart without a
/// prediction is scored as an empty prediction.
pub fn build_report(
    preds: &BTreeMap<String, ExtractionResult>,
    gts: &BTreeMap<String, ExtractionResult>,
    mode: Parallelism,
) -> Result<EvaluationReport> {
    let unmatched: Vec<&str> = preds.keys().filter(|k| !gts.contains_key(*k)).map(String::as_str).collect();
    if !unmatched.is_empty() {
        return Err(Error::Input(format!("predictions without ground truth: {}", unmatched.join(", "))));
    }
    let pairs: Vec<(Option<&ExtractionResult>, &ExtractionResult)> = gts.iter().map(|(k, g)| (preds.get(k), g)).collect();
    let scores = map_slice(&pairs, mode, |(p, g)| score_chart(*p, g));
    let counts = ReportCounts {
        charts: gts.len(),
        predictions: preds.len(),
        missing_predictions: pairs.iter().filter(|(p, _)| p.is_none()).count(),
        gt_tuples: scores.iter().map(|s| s.gt_tuples).sum(),
        predicted_tuples: scores.iter().map(|s| s.pred_tuples).sum(),
    };
    let chart_type_accuracy = rate(scores.iter().filter(|s| s.type_ok).count(), scores.len());
    let select = |kind: ChartKind| -> (Vec<&ChartScore>, Vec<(Option<&ExtractionResult>, &ExtractionResult)>) {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].1.chart_type == kind).collect();
        (idx.iter().map(|&i| &scores[i]).collect(), idx.iter().map(|&i| pairs[i]).collect())
    };
    let (bs, bp) = select(ChartKind::Bar);
    let bar = (!bs.is_empty()).then(|| {
        let a = Aggregate::of(&bs);
        let (ap, mean_ap) = class_ap(ChartKind::Bar, &bp);
        BarTable {
            charts: bs.len(),
            tuples: a.n,
            all: a.frac(|s| s.all),
            title: a.frac(|s| s.title),
            x_axis_label: a.frac(|s| s.x_axis),
            y_axis_label: a.frac(|s| s.y_axis),
            all_tuples_1pct: a.frac(|s| s.tuples_ok),
            tuple: Bands::from_counts(a.tuple, a.n),
            x_tick_label: rate(a.label, a.n),
            lower_value: rate(a.lower, a.n),
            upper_value: rate(a.upper, a.n),
            value: Bands::from_counts(a.value, a.n),
            ap,
            mean_ap,
        }
    });
    let (ps, pp) = select(ChartKind::Pie);
    let pie = (!ps.is_empty()).then(|| {
        let a = Aggregate::of(&ps);
        let (ap, mean_ap) = class_ap(ChartKind::Pie, &pp);
        PieTable {
            charts: ps.len(),
            tuples: a.n,
            all: a.frac(|s| s.all),
            title: a.frac(|s| s.title),
            all_tuples_1pct: a.frac(|s| s.tuples_ok),
            tuple: Bands::from_counts(a.tuple, a.n),
            legend: rate(a.label, a.n),
            percent: Bands::from_counts(a.value, a.n),
            ap,
            mean_ap,
        }
    });
    Ok(EvaluationReport {
        counts,
        chart_type_accuracy,
        bar,
        pie,
        notes: INTERPRETATION_NOTES.iter().map(|s| s.to_string()).collect(),
    })
}

struct Aggregate<'a> {
    charts: &'a [&'a ChartScore],
    n: usize,
    tuple: [usize; 4],
    value: [usize; 4],
    label: usize,
    lower: usize,
    upper: usize,
}

impl<'a> Aggregate<'a> {
    fn of(charts: &'a [&'a ChartScore]) -> Self {
        let mut a = Aggregate {
            charts,
            n: 0,
            tuple: [0; 4],
            value: [0; 4],
            label: 0,
            lower: 0,
            upper: 0,
        };
        for s in charts {
            a.n += s.gt_tuples;
            for k in 0..4 {
                a.tuple[k] += s.tuple[k];
                a.value[k] += s.value[k];
            }
            a.label += s.label;
            a.lower += s.lower;
            a.upper += s.upper;
        }
        a
    }

    fn frac(&self, f: impl Fn(&ChartScore) -> bool) -> f64 {
        rate(self.charts.iter().filter(|s| f(s)).count(), self.charts.len())
    }
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Band monotonicity for every band row and ALL bounded by title and
    /// all-tuples-within-1% rates.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if let Some(b) = &self.bar {
            for (name, bands) in [("bar tuple", b.tuple), ("bar value", b.value)] {
                if !bands.is_monotone() {
                    return Err(format!("{name} bands not monotone: {:?}", bands.as_array()));
                }
            }
            if b.all > b.title.min(b.all_tuples_1pct).min(b.x_axis_label).min(b.y_axis_label) {
                return Err(format!("bar ALL {} exceeds a conjoined rate", b.all));
            }
        }
        if let Some(p) = &self.pie {
            for (name, bands) in [("pie tuple", p.tuple), ("pie percent", p.percent)] {
                if !bands.is_monotone() {
                    return Err(format!("{name} bands not monotone: {:?}", bands.as_array()));
                }
            }
            if p.all > p.title.min(p.all_tuples_1pct) {
                return Err(format!("pie ALL {} exceeds a conjoined rate", p.all));
            }
        }
        Ok(())
    }

    /// Fixed-width text tables, one per chart kind, rates in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let pct = |v: f64| format!("{:>7.1}", 100.0 * v);
        let opt = |v: Option<f64>| v.map(pct).unwrap_or_else(|| format!("{:>7}", "n/a"));
        let row = |out: &mut String, name: &str, v: String| {
            let _ = writeln!(out, "{name:<22}{v}");
        };
        let _ = writeln!(out, "charts {}  missing predictions {}", self.counts.charts, self.counts.missing_predictions);
        row(&mut out, "Chart type", pct(self.chart_type_accuracy));
        if let Some(b) = &self.bar {
            let _ = writeln!(out, "\nBar charts ({} charts, {} tuples)", b.charts, b.tuples);
            row(&mut out, "ALL", pct(b.all));
            row(&mut out, "Title", pct(b.title));
            row(&mut out, "X-axis label", pct(b.x_axis_label));
            row(&mut out, "Y-axis label", pct(b.y_axis_label));
            for (band, v) in ["1", "5", "10", "25"].iter().zip(b.tuple.as_array()) {
                row(&mut out, &format!("Tuple {band}% err"), pct(v));
            }
            row(&mut out, "X-tick label", pct(b.x_tick_label));
            row(&mut out, "Lower value", pct(b.lower_value));
            row(&mut out, "Upper value", pct(b.upper_value));
            for (band, v) in ["1", "5", "10", "25"].iter().zip(b.value.as_array()) {
                row(&mut out, &format!("Value {band}% err"), pct(v));
            }
            let _ = writeln!(out, "\nBar AP");
            for (c, v) in &b.ap {
                row(&mut out, c, opt(*v));
            }
            row(&mut out, "mean", opt(b.mean_ap));
        }
        if let Some(p) = &self.pie {
            let _ = writeln!(out, "\nPie charts ({} charts, {} tuples)", p.charts, p.tuples);
            row(&mut out, "ALL", pct(p.all));
            row(&mut out, "Title", pct(p.title));
            for (band, v) in ["1", "5", "10", "25"].iter().zip(p.tuple.as_array()) {
                row(&mut out, &format!("Tuple {band}% err"), pct(v));
            }
            row(&mut out, "Legend", pct(p.legend));
            for (band, v) in ["1", "5", "10", "25"].iter().zip(p.percent.as_array()) {
                row(&mut out, &format!("Percent {band}% err"), pct(v));
            }
            let _ = writeln!(out, "\nPie AP");
            for (c, v) in &p.ap {
                row(&mut out, c, opt(*v));
            }
            row(&mut out, "mean", opt(p.mean_ap));
        }
        out
    }
}

/// Chart id of an image path: its file stem.
pub fn chart_id(image: &str) -> String {
    Path::new(image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image.to_string())
}

/// Ground truth for every chart of a generated dataset, keyed by chart id.
pub fn load_ground_truth(dir: &Path) -> Result<BTreeMap<String, ExtractionResult>> {
    let data = Dataset::open(dir)?;
    data.annotations
        .iter()
        .map(|a| Ok((chart_id(&a.image), ExtractionResult::ground_truth(a)?)))
        .collect()
}

/// Every `*.json` file in `dir` as a prediction keyed by file stem.
pub fn load_predictions(dir: &Path) -> Result<BTreeMap<String, ExtractionResult>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let id = chart_id(&path.to_string_lossy());
            out.insert(id, ExtractionResult::load(&path)?);
        }
    }
    Ok(out)
}
