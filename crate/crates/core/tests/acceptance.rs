//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria 1-4, 6 and 7 run on every `cargo test`. The desk-scale learning
//! criterion trains four models and takes hours on one core, so it only runs
//! with `CHARTX_FULL_ACCEPTANCE=1`; its working directory (datasets, models,
//! reports) is `CHARTX_ACCEPTANCE_DIR` or `target/acceptance-desk`, and
//! interrupted training resumes from the snapshots there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chartx::autodiff::{ctc_forward_backward, grad_check, log_softmax, Graph, ParameterStore, Tensor, Var};
use chartx::branches::{
    angle_decoder_forward, angle_loss, init_angle_decoder, om_loss, smooth_indicator,
    text_branch_loss, SmoothIndicatorParams, BLANK, N_SYMBOLS,
};
use chartx::corpus::words::default_words;
use chartx::corpus::{build_dataset, chart_seed, generate_chart, ChartKind, Dataset, GenConfig, KindSelection};
use chartx::detect::{classify_chart_type, detection_loss, AnchorSample, HeadOutput, RoiBatch, RpnOutput};
use chartx::eval::{build_report, chart_id, tuple_match, value_error, EvaluationReport, BANDS};
use chartx::geometry::{generate_anchors, iou, nms_indices, AnchorConfig, BBox};
use chartx::infer::{decode, extract, BarTuple, ExtractionResult, InferenceConfig, OraclePerception, PieTuple};
use chartx::model::{ChartModel, ModelConfig, NeuralPerception, TypeModel, TYPE_MODEL_FILE};
use chartx::par::{map_indexed, Parallelism};
use chartx::train::{
    assemble_loss, history_path, state_path, train_chart_model, train_type_model, write_history, LossWeights, StateOptions,
    TrainSchedule, Trainer,
};

// Tolerances and sizes, pinned.
const ORACLE_CHARTS: u64 = 500;
const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(300);
const BAR_WITHIN_1PCT: f64 = 0.99;
const NMS_INSTANCES: usize = 1000;
const IOU_INSTANCES: usize = 10_000;
const ANCHOR_MAP_SIZES: usize = 20;
const GRAD_EPS: f64 = 1e-3;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_INSTANCES: u64 = 10;
const DET_BETA: f64 = 1.0 / 9.0;
const INDICATOR_TOL: f64 = 1e-12;
const CTC_LOG_TOL: f64 = 1e-9;
const CTC_MAX_T: usize = 6;
const CTC_MAX_TARGET: usize = 3;
const CTC_MAX_ALPHABET: usize = 4;

// Desk-scale learning targets and budget.
const DESK_TRAIN_PER_KIND: usize = 2000;
const DESK_HELDOUT_PER_KIND: usize = 200;
const DESK_OVERFIT_CHARTS: usize = 200;
const DESK_TYPE_ACCURACY: f64 = 0.98;
const DESK_BAR_TUPLE_25: f64 = 0.60;
const DESK_PIE_PERCENT_25: f64 = 0.70;
const DESK_OVERFIT_TUPLE_25: f64 = 0.90;
const DESK_BUDGET: Duration = Duration::from_secs(4 * 3600);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Option<Outcome> {
    Some(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn main() {
    let criteria: [(&str, fn() -> Option<Outcome>); 7] = [
        ("oracle decoding", oracle_decoding),
        ("geometry oracles", geometry_oracles),
        ("gradient checks", gradient_checks),
        ("formula fidelity", formula_fidelity),
        ("desk-scale learning", desk_scale_learning),
        ("determinism", determinism),
        ("report sanity", report_sanity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let line = match f() {
            Some(o) if o.pass => format!("PASS {} {name}: {}", i + 1, o.detail),
            Some(o) => {
                failed += 1;
                format!("FAIL {} {name}: {}", i + 1, o.detail)
            }
            None => format!("SKIP {} {name}: set CHARTX_FULL_ACCEPTANCE=1 to run (hours of training)", i + 1),
        };
        println!("{line} [{:.1}s]", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- criterion 1

/// Oracle reports from criterion 1, reused by the report sanity check.
static ORACLE_REPORTS: std::sync::Mutex<Vec<EvaluationReport>> = std::sync::Mutex::new(Vec::new());

fn oracle_decoding() -> Option<Outcome> {
    let start = Instant::now();
    let cfg = GenConfig::default();
    let words = default_words();
    let inf = InferenceConfig::default();
    let mut detail = Vec::new();
    let mut pass = true;
    for (kind, seed) in [(ChartKind::Bar, 101), (ChartKind::Pie, 202)] {
        let pairs = map_indexed(ORACLE_CHARTS as usize, Parallelism::Parallel, |i| {
            let (_, _, ann) = generate_chart(kind, chart_seed(seed, i as u64), &cfg, &words).expect("chart");
            let pred = decode(&OraclePerception::percept_for(&ann), &inf).expect("decode");
            (format!("c{i:04}"), pred, ExtractionResult::ground_truth(&ann).expect("gt"))
        });
        let (mut good, mut n) = (0usize, 0usize);
        for (_, p, g) in &pairs {
            // Independent pairing: tuples keyed by their ground-truth label and order.
            match kind {
                ChartKind::Bar => {
                    n += g.bars.len();
                    good += g.bars.iter().filter(|gt| bar_found_within(&p.bars, gt, 0.01)).count();
                }
                ChartKind::Pie => {
                    n += g.slices.len();
                    good += g.slices.iter().filter(|gt| slice_found_within(&p.slices, gt, 0.01)).count();
                }
            }
        }
        let frac = good as f64 / n as f64;
        let need = if kind == ChartKind::Bar { BAR_WITHIN_1PCT } else { 1.0 };
        pass &= frac >= need;
        detail.push(format!("{} {good}/{n} within 1% ({:.2}%)", kind.as_str(), 100.0 * frac));
        let preds: BTreeMap<_, _> = pairs.iter().map(|(k, p, _)| (k.clone(), p.clone())).collect();
        let gts: BTreeMap<_, _> = pairs.into_iter().map(|(k, _, g)| (k, g)).collect();
        ORACLE_REPORTS
            .lock()
            .unwrap()
            .push(build_report(&preds, &gts, Parallelism::Parallel).expect("report"));
    }
    let t = start.elapsed();
    pass &= t < ORACLE_TIME_LIMIT;
    detail.push(format!("{ORACLE_CHARTS} charts per kind in {:.1}s", t.as_secs_f64()));
    outcome(pass, detail.join("; "))
}

fn rel_err(p: f64, g: f64) -> f64 {
    (p - g).abs() / g.abs()
}

fn bar_found_within(preds: &[BarTuple], gt: &BarTuple, tol: f64) -> bool {
    preds.iter().any(|p| {
        p.x_tick_label == gt.x_tick_label
            && p.lower_tick_label == gt.lower_tick_label
            && p.upper_tick_label == gt.upper_tick_label
            && rel_err(p.value, gt.value) < tol
    })
}

fn slice_found_within(preds: &[PieTuple], gt: &PieTuple, tol: f64) -> bool {
    preds.iter().any(|p| p.legend == gt.legend && rel_err(p.percentage, gt.percentage) < tol)
}

// ---------------------------------------------------------------- criterion 2

fn int_box(rng: &mut ChaCha8Rng) -> BBox {
    BBox::new(
        rng.gen_range(0..200) as f64,
        rng.gen_range(0..200) as f64,
        rng.gen_range(1..80) as f64,
        rng.gen_range(1..80) as f64,
    )
}

/// Exact IoU of integer boxes as a reduced fraction `(num, den)`.
fn iou_rational(a: &BBox, b: &BBox) -> (i64, i64) {
    let (ax, ay, aw, ah) = (a.x as i64, a.y as i64, a.w as i64, a.h as i64);
    let (bx, by, bw, bh) = (b.x as i64, b.y as i64, b.w as i64, b.h as i64);
    let ix = ((ax + aw).min(bx + bw) - ax.max(bx)).max(0);
    let iy = ((ay + ah).min(by + bh) - ay.max(by)).max(0);
    let inter = ix * iy;
    let union = aw * ah + bw * bh - inter;
    (inter, union)
}

/// O(n²) greedy suppression with the same tie-break as the library
/// (score descending, then index).
fn greedy_nms(boxes: &[BBox], scores: &[f64], thr: f64) -> Vec<usize> {
    let n = boxes.len();
    let mut alive = vec![true; n];
    let mut keep = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if alive[i] && best.map_or(true, |b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { return keep };
        keep.push(b);
        alive[b] = false;
        for i in 0..n {
            if alive[i] {
                let (num, den) = iou_rational(&boxes[b], &boxes[i]);
                // iou > thr, exactly, for thr = 1/2.
                if thr == 0.5 && 2 * num > den {
                    alive[i] = false;
                }
            }
        }
    }
}

fn geometry_oracles() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut nms_bad = 0;
    for _ in 0..NMS_INSTANCES {
        let n = rng.gen_range(0..40);
        let boxes: Vec<BBox> = (0..n).map(|_| int_box(&mut rng)).collect();
        // Coarse scores so ties occur.
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..20) as f64 / 20.0).collect();
        if nms_indices(&boxes, &scores, 0.5) != greedy_nms(&boxes, &scores, 0.5) {
            nms_bad += 1;
        }
    }
    let mut iou_bad = 0;
    for _ in 0..IOU_INSTANCES {
        let (a, b) = (int_box(&mut rng), int_box(&mut rng));
        let (num, den) = iou_rational(&a, &b);
        // The correctly rounded quotient of two exact integers.
        if iou(&a, &b) != num as f64 / den as f64 {
            iou_bad += 1;
        }
    }
    let cfg = AnchorConfig::default();
    let mut anchor_bad = 0;
    for _ in 0..ANCHOR_MAP_SIZES {
        let (m, n) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        if generate_anchors(m, n, &cfg).len() != m * n * 35 {
            anchor_bad += 1;
        }
    }
    outcome(
        nms_bad + iou_bad + anchor_bad == 0 && cfg.per_cell() == 35,
        format!(
            "NMS mismatches {nms_bad}/{NMS_INSTANCES}, IoU mismatches {iou_bad}/{IOU_INSTANCES}, anchor count mismatches {anchor_bad}/{ANCHOR_MAP_SIZES}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()
}

/// Slices `x` into consecutive blocks of the given shapes.
fn blocks(g: &mut Graph, x: Var, shapes: &[Vec<usize>]) -> Vec<Var> {
    let mut at = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let v = g.slice(x, at, n).unwrap();
            at += n;
            g.reshape(v, s).unwrap()
        })
        .collect()
}

/// A random detection-loss instance over a 2×2 feature map.
struct DetCase {
    anchors: chartx::geometry::AnchorSet,
    sample: AnchorSample,
    rois: RoiBatch,
    n_classes: usize,
}

fn det_case(rng: &mut ChaCha8Rng) -> DetCase {
    let anchors = generate_anchors(2, 2, &AnchorConfig::default());
    let n = anchors.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(24);
    let n_pos = rng.gen_range(1..6);
    let sample = AnchorSample {
        labels: (0..idx.len()).map(|k| if k < n_pos { 1.0 } else { 0.0 }).collect(),
        positives: idx[..n_pos].iter().map(|&i| (i, [0.0; 4].map(|_: f64| rng.gen_range(-0.5..0.5)))).collect(),
        indices: idx,
    };
    let n_classes = 10;
    let r = 8;
    let n_positive = rng.gen_range(0..4);
    let rois = RoiBatch {
        boxes: vec![BBox::new(0.0, 0.0, 4.0, 4.0); r],
        labels: (0..r).map(|k| if k < n_positive { rng.gen_range(1..=n_classes) } else { 0 }).collect(),
        targets: (0..r).map(|_| [0.0; 4].map(|_: f64| rng.gen_range(-0.5..0.5))).collect(),
        matched: vec![0; n_positive],
        n_positive,
    };
    DetCase {
        anchors,
        sample,
        rois,
        n_classes,
    }
}

impl DetCase {
    fn shapes(&self) -> Vec<Vec<usize>> {
        let n = self.anchors.len();
        let r = self.rois.labels.len();
        vec![vec![n, 1], vec![n, 4], vec![r, self.n_classes + 1], vec![r, 4]]
    }

    /// Smooth L1 is only once differentiable at |residual| = beta, where a
    /// central difference carries an O(eps) error. Moves regression inputs in
    /// the first block of `x` out of a 3·eps band around those points.
    fn avoid_kinks(&self, x: &mut [f64]) {
        let n = self.anchors.len();
        let roi_base = 5 * n + self.rois.labels.len() * (self.n_classes + 1);
        let rpn = self.sample.positives.iter().flat_map(|&(i, t)| (0..4).map(move |c| (n + 4 * i + c, t[c])));
        let roi = (0..self.rois.n_positive).flat_map(|k| (0..4).map(move |c| (roi_base + 4 * k + c, k, c)));
        let roi: Vec<(usize, f64)> = roi.map(|(at, k, c)| (at, self.rois.targets[k][c])).collect();
        for (at, t) in rpn.chain(roi) {
            if ((x[at] - t).abs() - DET_BETA).abs() < 3.0 * GRAD_EPS {
                x[at] += 6.0 * GRAD_EPS;
            }
        }
    }

    fn loss(&self, g: &mut Graph, v: &[Var]) -> chartx::Result<Var> {
        let rpn = RpnOutput {
            obj_logits: v[0],
            offsets: v[1],
            anchors: self.anchors.clone(),
        };
        let head = HeadOutput {
            feats: v[2],
            cls_logits: v[2],
            offsets: v[3],
        };
        Ok(detection_loss(g, &rpn, &self.sample, &head, &self.rois, DET_BETA)?.total)
    }
}

/// A random text-branch instance: per-line orientation predictions and
/// per-line recognition logits.
struct TextCase {
    angles_deg: Vec<f64>,
    frames: Vec<usize>,
    targets: Vec<Vec<usize>>,
}

fn text_case(rng: &mut ChaCha8Rng) -> TextCase {
    let lines = rng.gen_range(1..4);
    let mut frames = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..lines {
        let len = rng.gen_range(1..5);
        let t: Vec<usize> = (0..len).map(|_| rng.gen_range(0..BLANK)).collect();
        frames.push(2 * len + rng.gen_range(0..3));
        targets.push(t);
    }
    TextCase {
        angles_deg: (0..lines).map(|_| [0.0, 90.0, -45.0][rng.gen_range(0..3)]).collect(),
        frames,
        targets,
    }
}

impl TextCase {
    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut s = vec![vec![self.targets.len(), 1]];
        s.extend(self.frames.iter().map(|&f| vec![f, N_SYMBOLS]));
        s
    }

    fn loss(&self, g: &mut Graph, v: &[Var]) -> chartx::Result<Var> {
        text_branch_loss(g, v[0], &self.angles_deg, &v[1..], &self.targets, 1.0, 1.0)
    }
}

/// A random matching instance: per-pair labels and detection confidences.
/// Confidences straddle the indicator threshold so the gating varies.
struct OmCase {
    pairs: usize,
    gt: Vec<f64>,
    conf_a: Vec<f64>,
    conf_b: Vec<f64>,
}

fn om_case(rng: &mut ChaCha8Rng) -> OmCase {
    let pairs = rng.gen_range(1..4) * rng.gen_range(1..4);
    let conf = |rng: &mut ChaCha8Rng| (0..pairs).map(|_| rng.gen_range(0.3..1.0)).collect();
    OmCase {
        gt: (0..pairs).map(|_| f64::from(rng.gen_bool(0.4))).collect(),
        conf_a: conf(rng),
        conf_b: conf(rng),
        pairs,
    }
}

impl OmCase {
    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.pairs, 1]]
    }

    fn loss(&self, g: &mut Graph, v: &[Var]) -> chartx::Result<Var> {
        om_loss(g, v[0], &self.gt, &self.conf_a, &self.conf_b, SmoothIndicatorParams::default())
    }
}

/// A random pie-angle instance: decoder parameters, pooled feature and
/// ground-truth boundaries.
struct AngCase {
    store: ParameterStore,
    dim: usize,
    steps: usize,
    angles: Vec<f64>,
}

fn ang_case(rng: &mut ChaCha8Rng) -> AngCase {
    let dim = 12;
    let mut store = ParameterStore::new();
    init_angle_decoder(&mut store, dim, 6, rng).unwrap();
    let n = rng.gen_range(2..6);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..360.0)).collect();
    angles.sort_by(f64::total_cmp);
    AngCase {
        store,
        dim,
        steps: n + 1 + rng.gen_range(0..2),
        angles,
    }
}

impl AngCase {
    fn loss_from_feature(&self, g: &mut Graph, feat: Var) -> chartx::Result<Var> {
        let f = g.reshape(feat, &[1, self.dim])?;
        let out = angle_decoder_forward(g, &self.store, f, self.steps)?;
        angle_loss(g, out, &self.angles)
    }
}

fn point(shapes: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    Tensor::vector(normal_vec(rng, n, 1.0))
}

fn gradient_checks() -> Option<Outcome> {
    let weights = LossWeights::default();
    let mut worst: Vec<(&str, f64, usize)> = Vec::new();
    let mut record = |name: &'static str, errs: Vec<f64>| {
        let w = errs.iter().copied().fold(0.0, f64::max);
        worst.push((name, w, errs.len()));
    };
    let run = |seed_base: u64, f: &dyn Fn(&mut ChaCha8Rng) -> f64| -> Vec<f64> {
        (0..GRAD_INSTANCES)
            .map(|i| f(&mut ChaCha8Rng::seed_from_u64(seed_base * 1000 + i)))
            .collect()
    };

    record(
        "L_text",
        run(2, &|rng| {
            let c = text_case(rng);
            let s = c.shapes();
            let p = point(&s, rng);
            grad_check(|g, x| { let v = blocks(g, x, &s); c.loss(g, &v) }, &p, GRAD_EPS).unwrap()
        }),
    );
    record(
        "L_OM",
        run(4, &|rng| {
            let c = om_case(rng);
            let s = c.shapes();
            let p = point(&s, rng);
            grad_check(|g, x| { let v = blocks(g, x, &s); c.loss(g, &v) }, &p, GRAD_EPS).unwrap()
        }),
    );
    record(
        "L_det",
        run(10, &|rng| {
            let c = det_case(rng);
            let s = c.shapes();
            let mut p = point(&s, rng);
            c.avoid_kinks(&mut p.data);
            grad_check(|g, x| { let v = blocks(g, x, &s); c.loss(g, &v) }, &p, GRAD_EPS).unwrap()
        }),
    );
    record(
        "L_ang (through the angle decoder)",
        run(11, &|rng| {
            let c = ang_case(rng);
            let p = Tensor::vector(normal_vec(rng, c.dim, 1.0));
            grad_check(|g, x| c.loss_from_feature(g, x), &p, GRAD_EPS).unwrap()
        }),
    );
    for (name, kind, seed) in [("L_bar", ChartKind::Bar, 6), ("L_pie", ChartKind::Pie, 7)] {
        record(
            name,
            run(seed, &|rng| {
                let d = det_case(rng);
                let t = text_case(rng);
                let o = om_case(rng);
                let a = ang_case(rng);
                let (ds, ts, os) = (d.shapes(), t.shapes(), o.shapes());
                let mut shapes: Vec<Vec<usize>> = ds.iter().chain(&ts).chain(&os).cloned().collect();
                if kind == ChartKind::Pie {
                    shapes.push(vec![a.dim]);
                }
                let mut p = point(&shapes, rng);
                d.avoid_kinks(&mut p.data);
                grad_check(
                    |g, x| {
                        let v = blocks(g, x, &shapes);
                        let (nd, nt, no) = (ds.len(), ts.len(), os.len());
                        let det = d.loss(g, &v[..nd])?;
                        let text = t.loss(g, &v[nd..nd + nt])?;
                        let om = o.loss(g, &v[nd + nt..nd + nt + no])?;
                        let ang = match kind {
                            ChartKind::Pie => Some(a.loss_from_feature(g, v[nd + nt + no])?),
                            ChartKind::Bar => None,
                        };
                        assemble_loss(g, kind, det, Some(text), Some(om), ang, &weights)
                    },
                    &p,
                    GRAD_EPS,
                )
                .unwrap()
            }),
        );
    }
    let pass = worst.iter().all(|&(_, w, n)| w < GRAD_REL_TOL && n >= 10);
    let detail = worst
        .iter()
        .map(|(n, w, k)| format!("{n} max rel err {w:.1e} over {k}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, detail)
}

// ---------------------------------------------------------------- criterion 4

/// Probability of `target` by summing every frame path that collapses to it.
fn ctc_enumerate(logp: &[f64], t_len: usize, k: usize, target: &[usize], blank: usize) -> f64 {
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    loop {
        let mut collapsed = Vec::with_capacity(t_len);
        let mut prev = None;
        for &s in &path {
            if s != blank && Some(s) != prev {
                collapsed.push(s);
            }
            prev = Some(s);
        }
        if collapsed == target {
            total += path.iter().enumerate().map(|(t, &s)| logp[t * k + s]).sum::<f64>().exp();
        }
        let mut i = 0;
        while i < t_len && path[i] == k - 1 {
            path[i] = 0;
            i += 1;
        }
        if i == t_len {
            return total;
        }
        path[i] += 1;
    }
}

fn all_targets(alphabet: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for t in &frontier {
            for s in 0..alphabet {
                let mut u: Vec<usize> = t.clone();
                u.push(s);
                next.push(u);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn formula_fidelity() -> Option<Outcome> {
    let p = SmoothIndicatorParams::default();
    let h_tau = smooth_indicator(p.tau, p);
    let h_75 = smooth_indicator(0.75, SmoothIndicatorParams { tau: 0.5, k: 10.0 });
    let want_75 = 1.0 / (1.0 + (-5.0f64).exp());
    let indicator_ok = (h_tau - 0.5).abs() <= INDICATOR_TOL && (h_75 - want_75).abs() <= INDICATOR_TOL;

    // Every T ≤ 6, target length ≤ 3 and alphabet size ≤ 4 (blank extra).
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut cases, mut worst, mut infeasible_ok) = (0usize, 0.0f64, true);
    for a in 1..=CTC_MAX_ALPHABET {
        let k = a + 1;
        for target in all_targets(a, CTC_MAX_TARGET) {
            for t_len in 1..=CTC_MAX_T {
                let logits = normal_vec(&mut rng, t_len * k, 2.0);
                let logp: Vec<f64> = logits.chunks(k).flat_map(log_softmax).collect();
                let want = ctc_enumerate(&logp, t_len, k, &target, a);
                let got = ctc_forward_backward(&logits, t_len, k, &target, a);
                cases += 1;
                if want == 0.0 {
                    // No alignment fits: the loss must refuse or be infinite.
                    infeasible_ok &= got.map_or(true, |(nll, _)| nll.is_infinite());
                    continue;
                }
                match got {
                    Ok((nll, _)) => worst = worst.max((nll + want.ln()).abs()),
                    Err(_) => worst = f64::INFINITY,
                }
            }
        }
    }
    let ctc_ok = worst <= CTC_LOG_TOL && infeasible_ok;

    // Error-band fixtures computed by hand.
    let bt = |v: f64| BarTuple {
        x_tick_label: "q1".into(),
        value: v,
        lower_tick_label: "100".into(),
        upper_tick_label: "120".into(),
    };
    let pt = |v: f64| PieTuple {
        legend: "apple".into(),
        percentage: v,
    };
    let bands = |p: bool, f: &dyn Fn(f64) -> bool| BANDS.iter().map(|&b| f(b)).collect::<Vec<_>>() == vec![p; 4];
    let fixtures = [
        value_error(110.0, 100.0) == 0.1,
        value_error(90.0, 100.0) == 0.1,
        value_error(26.0, 25.0) == 0.04,
        value_error(0.0, 0.0) == 0.0,
        value_error(0.5, 0.0).is_infinite(),
        // 107 vs 100: within 10% and 25%, not 1% or 5%.
        BANDS.iter().map(|&b| tuple_match(&bt(107.0), &bt(100.0), b)).collect::<Vec<_>>() == [false, false, true, true],
        // 26% vs 25%: error 0.04, within 5%, not 1%.
        BANDS.iter().map(|&b| tuple_match(&pt(26.0), &pt(25.0), b)).collect::<Vec<_>>() == [false, true, true, true],
        // Exactly on a band edge fails it (strict inequality): 125 vs 100.
        !tuple_match(&bt(125.0), &bt(100.0), 0.25),
        bands(true, &|b| tuple_match(&bt(100.0), &bt(100.0), b)),
        // A wrong text field fails every band.
        bands(false, &|b| {
            let mut p = bt(100.0);
            p.lower_tick_label = "80".into();
            tuple_match(&p, &bt(100.0), b)
        }),
    ];
    let fixtures_ok = fixtures.iter().all(|&b| b);
    outcome(
        indicator_ok && ctc_ok && fixtures_ok,
        format!(
            "H(tau)={h_tau}, H(0.75)-1/(1+e^-5)={:.1e}; CTC {cases} cases, max |log diff| {worst:.1e}; band fixtures {}/{}",
            h_75 - want_75,
            fixtures.iter().filter(|&&b| b).count(),
            fixtures.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn tiny_model() -> ModelConfig {
    let mut c = ModelConfig::default();
    c.detector.channels = vec![4, 8, 8];
    c.detector.head_hidden = 16;
    c.detector.rpn_batch = 32;
    c.detector.head_batch = 16;
    c.detector.pre_nms_top = 200;
    c.detector.post_nms_top = 32;
    c.branches.om_hidden = 8;
    c.branches.text_hidden = 8;
    c.branches.text_input = 8;
    c.branches.angle_hidden = 8;
    c
}

fn determinism() -> Option<Outcome> {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = GenConfig::simplified();
    let mut ann = Vec::new();
    for run in 0..2 {
        let d = tmp.path().join(format!("gen{run}"));
        build_dataset(&cfg, KindSelection::Mixed, 16, 9, &d, Parallelism::Parallel).unwrap();
        ann.push(std::fs::read(d.join("annotations.jsonl")).unwrap());
    }
    // A sequential build must agree with the parallel ones too.
    let d = tmp.path().join("gen_seq");
    build_dataset(&cfg, KindSelection::Mixed, 16, 9, &d, Parallelism::Sequential).unwrap();
    ann.push(std::fs::read(d.join("annotations.jsonl")).unwrap());
    let gen_ok = ann[0] == ann[1] && ann[0] == ann[2];

    let data = Dataset::open(&tmp.path().join("gen0")).unwrap();
    let schedule = TrainSchedule {
        stage1_steps: 6,
        stage2_steps: 6,
        seed: 5,
        ..Default::default()
    };
    let mut hist = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("pie{run}.ckpt"));
        train_chart_model(&data, ChartKind::Pie, tiny_model(), schedule.clone(), LossWeights::default(), &out, None, |_| {})
            .unwrap();
        hist.push(std::fs::read(history_path(&out)).unwrap());
    }
    // Interrupt after 8 steps and resume from the saved state.
    let resumed = interrupted_history(&data, &schedule, &tmp.path().join("pie.state"));
    let (a, b) = (String::from_utf8_lossy(&hist[0]), String::from_utf8_lossy(&resumed));
    if a != b {
        for (x, y) in a.lines().zip(b.lines()).filter(|(x, y)| x != y).take(3) {
            eprintln!("uninterrupted: {x}\nresumed:       {y}");
        }
    }
    let train_ok = hist[0] == hist[1] && resumed == hist[0];
    outcome(
        gen_ok && train_ok,
        format!(
            "annotations identical across 2 parallel + 1 sequential runs: {gen_ok}; loss histories identical across reruns and a resumed run: {train_ok}"
        ),
    )
}

/// Trains 8 steps, saves, reloads and finishes; returns the history file.
fn interrupted_history(data: &Dataset, schedule: &TrainSchedule, state: &Path) -> Vec<u8> {
    let mut t = Trainer::new(data, ChartKind::Pie, tiny_model(), schedule.clone(), LossWeights::default()).unwrap();
    for _ in 0..8 {
        t.step().unwrap();
    }
    t.save_state(state).unwrap();
    drop(t);
    let mut t = Trainer::load_state(state, data).unwrap();
    t.run(|_| {}).unwrap();
    let out = state.with_extension("history.csv");
    write_history(&out, &t.history).unwrap();
    std::fs::read(out).unwrap()
}

// ---------------------------------------------------------------- criterion 7

/// Reports produced by the desk-scale run, if it ran.
static DESK_REPORTS: std::sync::Mutex<Vec<EvaluationReport>> = std::sync::Mutex::new(Vec::new());

fn report_sanity() -> Option<Outcome> {
    let mut reports: Vec<EvaluationReport> = ORACLE_REPORTS.lock().unwrap().clone();
    reports.extend(DESK_REPORTS.lock().unwrap().iter().cloned());
    // Degraded predictions: ground truth with seeded value noise, dropped
    // tuples and corrupted texts.
    let cfg = GenConfig::simplified();
    let words = default_words();
    let gts: BTreeMap<String, ExtractionResult> = (0..60)
        .map(|i| {
            let kind = if i % 2 == 0 { ChartKind::Bar } else { ChartKind::Pie };
            let (_, _, ann) = generate_chart(kind, chart_seed(31, i), &cfg, &words).unwrap();
            (format!("c{i:02}"), ExtractionResult::ground_truth(&ann).unwrap())
        })
        .collect();
    for trial in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let noise = [0.0, 0.005, 0.03, 0.08, 0.2, 0.5][trial as usize % 6];
        let mut preds = BTreeMap::new();
        for (k, g) in &gts {
            if rng.gen_bool(0.05) {
                continue;
            }
            let mut p = g.clone();
            for b in &mut p.bars {
                b.value *= 1.0 + rng.gen_range(-noise..=noise);
                if rng.gen_bool(0.05) {
                    b.x_tick_label.push('x');
                }
            }
            for s in &mut p.slices {
                s.percentage *= 1.0 + rng.gen_range(-noise..=noise);
            }
            if rng.gen_bool(0.1) {
                p.title.clear();
            }
            if !p.bars.is_empty() && rng.gen_bool(0.1) {
                p.bars.pop();
            }
            for d in &mut p.detections {
                d.bbox[0] += rng.gen_range(-3.0..3.0);
                d.confidence = rng.gen();
            }
            preds.insert(k.clone(), p);
        }
        reports.push(build_report(&preds, &gts, Parallelism::Parallel).unwrap());
    }
    let bad: Vec<String> = reports.iter().filter_map(|r| r.check_invariants().err()).collect();
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} reports monotone with ALL within its conjoined rates", reports.len())
        } else {
            format!("{} of {} reports violate: {}", bad.len(), reports.len(), bad[0])
        },
    )
}

// ---------------------------------------------------------------- criterion 5

fn desk_config() -> (GenConfig, ModelConfig, TrainSchedule) {
    let schedule = TrainSchedule {
        stage1_steps: 3000,
        stage2_steps: 9000,
        seed: 17,
        classifier_steps: 1500,
        optimizer: chartx::autodiff::AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut model = ModelConfig::default();
    model.branches.lambda_orientation = 10.0;
    (GenConfig::simplified(), model, schedule)
}

fn desk_scale_learning() -> Option<Outcome> {
    if std::env::var("CHARTX_FULL_ACCEPTANCE").ok().as_deref() != Some("1") {
        return None;
    }
    let start = Instant::now();
    let dir = std::env::var_os("CHARTX_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-desk"));
    match run_desk(&dir, start) {
        Ok(o) => Some(o),
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn log(msg: &str) {
    eprintln!("[desk] {msg}");
}

fn ensure_dataset(dir: &Path, gen: &GenConfig, kind: KindSelection, count: usize, seed: u64) -> chartx::Result<Dataset> {
    if !dir.join("manifest.json").exists() {
        log(&format!("generating {count} charts into {}", dir.display()));
        build_dataset(gen, kind, count, seed, dir, Parallelism::Parallel)?;
    }
    Dataset::open(dir)
}

fn train_kind(data: &Dataset, kind: ChartKind, out: &Path, model: &ModelConfig, schedule: &TrainSchedule) -> chartx::Result<()> {
    if out.exists() {
        return Ok(());
    }
    log(&format!("training {} -> {}", kind.as_str(), out.display()));
    let state = StateOptions {
        path: state_path(out),
        every: 250,
        resume: true,
    };
    let t0 = Instant::now();
    train_chart_model(data, kind, model.clone(), schedule.clone(), LossWeights::default(), out, Some(&state), |r| {
        if r.step % 250 == 0 {
            log(&format!(
                "{} step {} stage {} L_det {:.4} total {:.4} ({:.0}s)",
                kind.as_str(),
                r.step,
                r.stage,
                r.l_det,
                r.total,
                t0.elapsed().as_secs_f64()
            ));
        }
    })?;
    Ok(())
}

/// Runs the neural pipeline over `charts` of `data` and scores it.
fn evaluate(perception: &NeuralPerception, data: &Dataset, charts: &[usize], inf: &InferenceConfig) -> chartx::Result<EvaluationReport> {
    let results = map_indexed(charts.len(), Parallelism::Parallel, |k| -> chartx::Result<(String, Option<ExtractionResult>, ExtractionResult)> {
        let i = charts[k];
        let ann = &data.annotations[i];
        let pred = extract(perception, &data.image(i)?, inf).ok();
        Ok((chart_id(&ann.image), pred, ExtractionResult::ground_truth(ann)?))
    });
    let mut preds = BTreeMap::new();
    let mut gts = BTreeMap::new();
    for r in results {
        let (id, p, g) = r?;
        if let Some(p) = p {
            preds.insert(id.clone(), p);
        }
        gts.insert(id, g);
    }
    build_report(&preds, &gts, Parallelism::Parallel)
}

fn run_desk(dir: &Path, start: Instant) -> chartx::Result<Outcome> {
    let (gen, model, schedule) = desk_config();
    std::fs::create_dir_all(dir).map_err(|e| chartx::Error::io(dir, e))?;
    // Mixed corpora give both kinds from one seed stream; counts are exact per kind.
    let train_bar = ensure_dataset(&dir.join("train_bar"), &gen, KindSelection::Bar, DESK_TRAIN_PER_KIND, 1)?;
    let train_pie = ensure_dataset(&dir.join("train_pie"), &gen, KindSelection::Pie, DESK_TRAIN_PER_KIND, 2)?;
    let held_bar = ensure_dataset(&dir.join("held_bar"), &gen, KindSelection::Bar, DESK_HELDOUT_PER_KIND, 3)?;
    let held_pie = ensure_dataset(&dir.join("held_pie"), &gen, KindSelection::Pie, DESK_HELDOUT_PER_KIND, 4)?;
    let train_type = ensure_dataset(&dir.join("train_type"), &gen, KindSelection::Mixed, DESK_TRAIN_PER_KIND, 5)?;
    let models = dir.join("models");
    std::fs::create_dir_all(&models).map_err(|e| chartx::Error::io(&models, e))?;

    let type_path = models.join(TYPE_MODEL_FILE);
    if !type_path.exists() {
        log("training chart-type classifier");
        let o = train_type_model(&train_type, model_classifier(), &schedule, |_, _| {})?;
        o.model.save(&type_path)?;
    }
    train_kind(&train_bar, ChartKind::Bar, &models.join("bar.ckpt"), &model, &schedule)?;
    train_kind(&train_pie, ChartKind::Pie, &models.join("pie.ckpt"), &model, &schedule)?;

    // Overfit run: the first 200 training bar charts, trained on alone.
    let overfit_dir = dir.join("overfit_bar");
    let overfit = ensure_dataset(&overfit_dir, &gen, KindSelection::Bar, DESK_OVERFIT_CHARTS, 1)?;
    let overfit_model = dir.join("overfit").join("bar.ckpt");
    std::fs::create_dir_all(overfit_model.parent().unwrap()).map_err(|e| chartx::Error::io(dir, e))?;
    train_kind(&overfit, ChartKind::Bar, &overfit_model, &model, &schedule)?;

    let inf = InferenceConfig::default();
    log("evaluating");
    let type_model = TypeModel::load(&type_path)?;
    let mut type_ok = 0;
    let mut type_n = 0;
    for (data, kind) in [(&held_bar, ChartKind::Bar), (&held_pie, ChartKind::Pie)] {
        for i in 0..data.len() {
            let p = classify_chart_type(&type_model.store, &type_model.config, &data.image(i)?)?;
            type_ok += usize::from(p.kind == kind);
            type_n += 1;
        }
    }
    let type_acc = type_ok as f64 / type_n as f64;

    let perception = NeuralPerception::load_dir(&models, inf.clone())?;
    let bar_report = evaluate(&perception, &held_bar, &(0..held_bar.len()).collect::<Vec<_>>(), &inf)?;
    let pie_report = evaluate(&perception, &held_pie, &(0..held_pie.len()).collect::<Vec<_>>(), &inf)?;
    let over = NeuralPerception {
        type_model: None,
        bar: Some(ChartModel::load(&overfit_model)?),
        pie: None,
        inference: inf.clone(),
    };
    let over_report = evaluate(&over, &overfit, &(0..overfit.len()).collect::<Vec<_>>(), &inf)?;
    for (name, r) in [("heldout_bar", &bar_report), ("heldout_pie", &pie_report), ("overfit_bar", &over_report)] {
        r.save(&dir.join(format!("{name}.report.json")))?;
        std::fs::write(dir.join(format!("{name}.report.txt")), r.to_table()).map_err(|e| chartx::Error::io(dir, e))?;
    }
    let bar25 = bar_report.bar.as_ref().map_or(0.0, |b| b.tuple.e25);
    let pie25 = pie_report.pie.as_ref().map_or(0.0, |p| p.percent.e25);
    let over25 = over_report.bar.as_ref().map_or(0.0, |b| b.tuple.e25);
    DESK_REPORTS
        .lock()
        .unwrap()
        .extend([bar_report, pie_report, over_report]);
    let elapsed = start.elapsed();
    let pass = type_acc >= DESK_TYPE_ACCURACY
        && bar25 >= DESK_BAR_TUPLE_25
        && pie25 >= DESK_PIE_PERCENT_25
        && over25 >= DESK_OVERFIT_TUPLE_25
        && elapsed <= DESK_BUDGET;
    Ok(Outcome {
        pass,
        detail: format!(
            "type accuracy {:.1}% (need {:.0}%), bar Tuple 25% {:.1}% (need {:.0}%), pie Percent 25% {:.1}% (need {:.0}%), overfit Tuple 25% {:.1}% (need {:.0}%), {:.2} h",
            100.0 * type_acc,
            100.0 * DESK_TYPE_ACCURACY,
            100.0 * bar25,
            100.0 * DESK_BAR_TUPLE_25,
            100.0 * pie25,
            100.0 * DESK_PIE_PERCENT_25,
            100.0 * over25,
            100.0 * DESK_OVERFIT_TUPLE_25,
            elapsed.as_secs_f64() / 3600.0
        ),
    })
}

fn model_classifier() -> chartx::detect::ClassifierConfig {
    chartx::detect::ClassifierConfig::default()
}
