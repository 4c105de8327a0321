//! Full per-kind model: detector plus branches, its training losses, and the
//! neural [`Perception`] used at inference.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{read_arrays, softmax, write_arrays, Dtype, Graph, NamedArrays, ParameterStore, Tensor, Var};
use crate::branches::{
    angle_decoder_forward, angle_loss, ctc_greedy_decode, decode_angles, encode_text, init_angle_decoder, init_match_head,
    init_text_branch, om_logits, om_loss, om_scores, orientation_forward, positional_code, slice_feature, text_branch_loss,
    text_logits, BranchConfig, MatchHead, TextCrop,
};
use crate::corpus::{AnnotationSet, ChartKind, ObjectClass, RgbImage};
use crate::detect::{
    backbone_forward, classify_chart_type, detection_loss, head_forward, init_backbone, init_classifier, init_head,
    init_rpn, postprocess, roi_features, rpn_forward, rpn_proposals, sample_anchors, sample_rois, ClassifierConfig,
    DetLoss, DetectorConfig, FeatureMaps, HeadOutput,
};
use crate::error::{Error, Result};
use crate::geometry::{assign_anchors, iou, roi_grid, BBox};
use crate::infer::{Detection, InferenceConfig, PairScore, Percept, Perception};

/// Parameter name prefixes owned by the branches; frozen in stage 1.
pub const BRANCH_PREFIXES: [&str; 3] = ["text.", "om.", "ang."];

pub const TYPE_MODEL_FILE: &str = "type.ckpt";

pub fn model_file(kind: ChartKind) -> &'static str {
    match kind {
        ChartKind::Bar => "bar.ckpt",
        ChartKind::Pie => "pie.ckpt",
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub detector: DetectorConfig,
    pub branches: BranchConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.branches.validate()
    }
}

/// Unweighted loss components of one training chart. Branch components are
/// absent when branches were not evaluated; `ang` exists for pie models only.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub det: DetLoss,
    pub text: Option<Var>,
    pub om: Option<Var>,
    pub ang: Option<Var>,
}

/// Object views shared by the training and inference branch passes.
struct Objects {
    classes: Vec<ObjectClass>,
    boxes: Vec<BBox>,
}

impl Objects {
    fn indices(&self, class: ObjectClass) -> Vec<usize> {
        (0..self.classes.len()).filter(|&i| self.classes[i] == class).collect()
    }
}

/// One matching head evaluated on all admissible pairs. `pairs` index the
/// object list (or slices for the slice head on the `a` side).
struct MatchBlock {
    head: MatchHead,
    pairs: Vec<(usize, usize)>,
    logits: Var,
}

#[derive(Debug, Clone)]
pub struct ChartModel {
    pub kind: ChartKind,
    pub config: ModelConfig,
    pub store: ParameterStore,
}

impl ChartModel {
    pub fn new(kind: ChartKind, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let det = &config.detector;
        let br = &config.branches;
        init_backbone(&mut store, det, &mut rng)?;
        init_rpn(&mut store, det, &mut rng)?;
        init_head(&mut store, det, kind.classes().len(), &mut rng)?;
        init_text_branch(&mut store, br, det, &mut rng)?;
        let d = det.roi_dim();
        for head in match_heads(kind) {
            let dim = if head.positional() { 4 } else { d };
            init_match_head(&mut store, head, dim, dim, br.om_hidden, &mut rng)?;
        }
        if kind == ChartKind::Pie {
            init_angle_decoder(&mut store, d, br.angle_hidden, &mut rng)?;
        }
        Ok(ChartModel { kind, config, store })
    }

    pub fn meta(&self) -> serde_json::Value {
        json!({ "model": "chart", "kind": self.kind, "config": self.config })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_arrays(path, &store_arrays(&self.store), Dtype::F32, self.meta())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, arrays) = read_arrays(path)?;
        let meta = header.meta;
        if meta["model"] != "chart" {
            return Err(Error::Format(format!("{}: not a chart model checkpoint", path.display())));
        }
        let kind: ChartKind = serde_json::from_value(meta["kind"].clone())?;
        let config: ModelConfig = serde_json::from_value(meta["config"].clone())?;
        let fresh = ChartModel::new(kind, config, 0)?;
        let store = store_from_arrays(arrays, &fresh.store, path)?;
        Ok(ChartModel {
            kind,
            config: fresh.config,
            store,
        })
    }

    fn stride(&self) -> usize {
        self.config.detector.stride()
    }

    fn class_index(&self, class: ObjectClass) -> Result<usize> {
        self.kind
            .class_index(class)
            .ok_or_else(|| Error::Input(format!("{class:?} is not a {} chart class", self.kind.as_str())))
    }

    /// Builds the loss components for one annotated chart; the branch terms
    /// only when `branches` is set. Branches are teacher-forced with
    /// ground-truth boxes, angles and relations.
    pub fn losses<R: Rng>(&self, g: &mut Graph, image: &RgbImage, ann: &AnnotationSet, rng: &mut R, branches: bool) -> Result<LossParts> {
        if ann.kind != self.kind {
            return Err(Error::Input(format!("{} annotation for a {} model", ann.kind.as_str(), self.kind.as_str())));
        }
        let det = &self.config.detector;
        let br = &self.config.branches;
        let (w, h) = (image.width as f64, image.height as f64);
        let gt = Objects {
            classes: ann.objects.iter().map(|o| o.class).collect(),
            boxes: ann.objects.iter().map(|o| o.bbox()).collect(),
        };
        let gt_labels = gt.classes.iter().map(|&c| self.class_index(c)).collect::<Result<Vec<_>>>()?;

        let x = g.constant(image.to_tensor())?;
        let fm = backbone_forward(g, &self.store, det, x)?;
        let rpn = rpn_forward(g, &self.store, det, fm.top)?;
        let assign = assign_anchors(&rpn.anchors.boxes, &gt.boxes, det.rpn_positive_iou, det.rpn_negative_iou)?;
        let anchors = sample_anchors(&assign, det.rpn_batch, rng);
        let proposals: Vec<BBox> = rpn_proposals(g, &rpn, det, w, h).into_iter().map(|p| p.0).collect();
        let rois = sample_rois(&proposals, &gt.boxes, &gt_labels, det, rng);

        // Sampled regions first, then every ground-truth object.
        let r = rois.boxes.len();
        let n_gt = gt.boxes.len();
        let mut all = rois.boxes.clone();
        all.extend_from_slice(&gt.boxes);
        let pooled = roi_features(g, fm.top, &all, self.stride(), det.roi_size)?;
        let head = head_forward(g, &self.store, pooled)?;
        let sampled: Vec<usize> = (0..r).collect();
        let batch_head = HeadOutput {
            feats: g.gather_rows(head.feats, &sampled)?,
            cls_logits: g.gather_rows(head.cls_logits, &sampled)?,
            offsets: g.gather_rows(head.offsets, &sampled)?,
        };
        let det_loss = detection_loss(g, &rpn, &anchors, &batch_head, &rois, det.smooth_l1_beta)?;
        if !branches {
            return Ok(LossParts {
                det: det_loss,
                text: None,
                om: None,
                ang: None,
            });
        }

        let gt_rows: Vec<usize> = (r..r + n_gt).collect();
        let gt_pooled = g.gather_rows(pooled, &gt_rows)?;
        let k = self.kind.classes().len() + 1;
        let logits = &g.value(head.cls_logits).data;
        let conf: Vec<f64> = (0..n_gt)
            .map(|i| softmax(&logits[(r + i) * k..(r + i + 1) * k])[1 + gt_labels[i]])
            .collect();

        // Text recognition on ground-truth text lines plus a few sampled text
        // proposals, cropped at the detected orientation as at inference.
        let readable = |i: usize| {
            let o = &ann.objects[i];
            o.class.is_text() && o.text.as_deref().is_some_and(|t| !t.is_empty())
        };
        let mut lines: Vec<(usize, BBox)> = (0..n_gt).filter(|&i| readable(i)).map(|i| (r + i, gt.boxes[i])).collect();
        let mut extra = 0;
        for (k, &j) in rois.matched.iter().enumerate() {
            let b = rois.boxes[k];
            if extra < br.text_proposals && readable(j) && b != gt.boxes[j] && iou(&b, &gt.boxes[j]) >= br.text_proposal_iou {
                lines.push((k, b));
                extra += 1;
            }
        }
        let row_object = |row: usize| if row >= r { row - r } else { rois.matched[row] };
        let mut targets = Vec::with_capacity(lines.len());
        let mut angles = Vec::with_capacity(lines.len());
        for &(row, _) in &lines {
            let o = &ann.objects[row_object(row)];
            targets.push(encode_text(o.text.as_deref().unwrap_or_default())?);
            angles.push(o.orientation_deg);
        }
        let text = if lines.is_empty() {
            g.constant(Tensor::scalar(0.0))?
        } else {
            let rows: Vec<usize> = lines.iter().map(|l| l.0).collect();
            let f = g.gather_rows(head.feats, &rows)?;
            let orient = orientation_forward(g, &self.store, f)?;
            let crops: Vec<TextCrop> = lines
                .iter()
                .zip(&g.value(orient).data)
                .zip(&targets)
                .map(|((l, &a), target)| TextCrop::new(&l.1, 90.0 * a, br).with_min_frames(crate::branches::min_frames(target)))
                .collect();
            let logits = text_logits(g, &self.store, br, &fm.stages, &crops)?;
            text_branch_loss(g, orient, &angles, &logits, &targets, br.lambda_orientation, br.lambda_ctc)?
        };

        // Object matching and pie angles.
        let (pie_feat, slice_feats) = match self.kind {
            ChartKind::Pie => {
                let angles = ann.slice_boundary_angles_deg.clone().unwrap_or_default();
                match gt.indices(ObjectClass::Pie).first() {
                    Some(&p) => {
                        let (feat, slices) = self.pie_features(g, &fm, &gt.boxes[p], &angles)?;
                        (Some((p, feat)), Some(slices))
                    }
                    None => (None, None),
                }
            }
            ChartKind::Bar => (None, None),
        };
        let blocks = self.match_blocks(g, &gt, gt_pooled, slice_feats, w, h)?;
        let mut om_terms = Vec::new();
        let id_of = |i: usize| ann.objects[i].id;
        for b in &blocks {
            let rel: HashSet<(u32, u32)> = ann.relations_of(b.head.relation()).map(|r| (r.a, r.b)).collect();
            let slice_conf = pie_feat.as_ref().map_or(0.0, |(p, _)| conf[*p]);
            let mut y = Vec::with_capacity(b.pairs.len());
            let mut ca = Vec::with_capacity(b.pairs.len());
            let mut cb = Vec::with_capacity(b.pairs.len());
            for &(a, bi) in &b.pairs {
                let (a_id, a_conf) = if b.head == MatchHead::SliceMark {
                    (a as u32, slice_conf)
                } else {
                    (id_of(a), conf[a])
                };
                y.push(if rel.contains(&(a_id, id_of(bi))) { 1.0 } else { 0.0 });
                ca.push(a_conf);
                cb.push(conf[bi]);
            }
            om_terms.push(om_loss(g, b.logits, &y, &ca, &cb, br.indicator)?);
        }
        let om = if om_terms.is_empty() {
            g.constant(Tensor::scalar(0.0))?
        } else {
            let all = g.concat(&om_terms)?;
            g.sum(all)?
        };

        let ang = match (self.kind, pie_feat) {
            (ChartKind::Pie, Some((_, feat))) => {
                let angles = ann.slice_boundary_angles_deg.clone().unwrap_or_default();
                let out = angle_decoder_forward(g, &self.store, feat, angles.len() + 1)?;
                Some(angle_loss(g, out, &angles)?)
            }
            (ChartKind::Pie, None) => Some(g.constant(Tensor::scalar(0.0))?),
            (ChartKind::Bar, _) => None,
        };
        Ok(LossParts {
            det: det_loss,
            text: Some(text),
            om: Some(om),
            ang,
        })
    }

    /// Pooled pie feature (`1×D`) and one rotated slice feature row per
    /// boundary (`n×D`).
    fn pie_features(&self, g: &mut Graph, fm: &FeatureMaps, pie: &BBox, angles: &[f64]) -> Result<(Var, Var)> {
        let s = self.config.detector.roi_size;
        let c = self.config.detector.top_channels();
        let map = g.sample(fm.top, &roi_grid(pie, self.stride(), s, s), Some(&[c, s, s]))?;
        let feat = slice_feature(g, map, 0.0)?;
        let rows = angles.iter().map(|&a| slice_feature(g, map, a)).collect::<Result<Vec<_>>>()?;
        let slices = if rows.is_empty() {
            g.constant(Tensor::zeros(&[0, c * s * s]))?
        } else {
            let flat = g.concat(&rows)?;
            g.reshape(flat, &[rows.len(), c * s * s])?
        };
        Ok((feat, slices))
    }

    /// Evaluates every matching head on all admissible pairs of `objs`.
    fn match_blocks(&self, g: &mut Graph, objs: &Objects, pooled: Var, slices: Option<Var>, w: f64, h: f64) -> Result<Vec<MatchBlock>> {
        let codes: Vec<f64> = objs.boxes.iter().flat_map(|b| positional_code(b, w, h)).collect();
        let n = objs.boxes.len();
        let pos = g.constant(Tensor::new(vec![n, 4], codes)?)?;
        let mut out = Vec::new();
        for head in match_heads(self.kind) {
            let (ca, cb) = match head {
                MatchHead::BarMark => (ObjectClass::Bar, ObjectClass::LegendMark),
                MatchHead::SliceMark => (ObjectClass::Pie, ObjectClass::LegendMark),
                MatchHead::YTick => (ObjectClass::YTickLabel, ObjectClass::YTickLine),
                MatchHead::Legend => (ObjectClass::LegendMark, ObjectClass::LegendLabel),
                MatchHead::XTick => (ObjectClass::Bar, ObjectClass::XTickLabel),
            };
            let b_idx = objs.indices(cb);
            let (a_src, a_idx) = if head == MatchHead::SliceMark {
                match slices {
                    Some(s) => (s, (0..g.shape(s)[0]).collect()),
                    None => continue,
                }
            } else {
                (if head.positional() { pos } else { pooled }, objs.indices(ca))
            };
            if a_idx.is_empty() || b_idx.is_empty() {
                continue;
            }
            let pairs: Vec<(usize, usize)> = a_idx.iter().flat_map(|&a| b_idx.iter().map(move |&b| (a, b))).collect();
            let b_src = if head.positional() { pos } else { pooled };
            let logits = om_logits(g, &self.store, head, a_src, b_src, &pairs)?;
            out.push(MatchBlock { head, pairs, logits });
        }
        Ok(out)
    }

    /// Runs detection and every branch on an image of this model's kind.
    pub fn perceive(&self, image: &RgbImage, cfg: &InferenceConfig) -> Result<Percept> {
        let det = &self.config.detector;
        let br = &self.config.branches;
        let (w, h) = (image.width as f64, image.height as f64);
        let mut g = Graph::new();
        let x = g.constant(image.to_tensor())?;
        let fm = backbone_forward(&mut g, &self.store, det, x)?;
        let rpn = rpn_forward(&mut g, &self.store, det, fm.top)?;
        let proposals = rpn_proposals(&g, &rpn, det, w, h);
        let boxes: Vec<BBox> = proposals.iter().map(|p| p.0).collect();
        let mut flags = Vec::new();
        let raw = if boxes.is_empty() {
            Vec::new()
        } else {
            let pooled = roi_features(&mut g, fm.top, &boxes, self.stride(), det.roi_size)?;
            let head = head_forward(&mut g, &self.store, pooled)?;
            postprocess(&g, &head, &proposals, w, h, cfg.confidence_threshold, cfg.nms_iou)
        };
        let classes = self.kind.classes();
        let objs = Objects {
            classes: raw.iter().map(|d| classes[d.class_index]).collect(),
            boxes: raw.iter().map(|d| d.bbox).collect(),
        };
        let mut detections: Vec<Detection> = raw
            .iter()
            .zip(&objs.classes)
            .map(|(d, &class)| Detection {
                class,
                bbox: d.bbox,
                confidence: d.confidence,
                orientation_deg: 0.0,
                text: None,
            })
            .collect();
        let mut pair_scores = Vec::new();
        let mut slice_angles = Vec::new();
        if !raw.is_empty() {
            let pooled = roi_features(&mut g, fm.top, &objs.boxes, self.stride(), det.roi_size)?;
            let head = head_forward(&mut g, &self.store, pooled)?;
            let text_idx: Vec<usize> = (0..raw.len()).filter(|&i| objs.classes[i].is_text()).collect();
            if !text_idx.is_empty() {
                let f = g.gather_rows(head.feats, &text_idx)?;
                let orient = orientation_forward(&mut g, &self.store, f)?;
                let angles: Vec<f64> = g.value(orient).data.iter().map(|v| 90.0 * v).collect();
                let crops: Vec<TextCrop> = text_idx
                    .iter()
                    .zip(&angles)
                    .map(|(&i, &a)| TextCrop::new(&objs.boxes[i], a, br))
                    .collect();
                let logits = text_logits(&mut g, &self.store, br, &fm.stages, &crops)?;
                for ((&i, &a), l) in text_idx.iter().zip(&angles).zip(&logits) {
                    detections[i].orientation_deg = a;
                    detections[i].text = Some(ctc_greedy_decode(&g.value(*l).data));
                }
            }
            let mut slices = None;
            if self.kind == ChartKind::Pie {
                // The single most confident pie; detections are sorted by confidence.
                if let Some(p) = objs.indices(ObjectClass::Pie).first().copied() {
                    let (feat, _) = self.pie_features(&mut g, &fm, &objs.boxes[p], &[])?;
                    let out = angle_decoder_forward(&mut g, &self.store, feat, cfg.max_angle_steps.max(1) + 1)?;
                    let mut seq = decode_angles(&g.value(out).data);
                    if seq.truncated || seq.angles_deg.len() > cfg.max_angle_steps {
                        seq.angles_deg.truncate(cfg.max_angle_steps);
                        flags.push(format!("angle decoder gave no stop signal within {} steps", cfg.max_angle_steps));
                    }
                    slice_angles = seq.angles_deg;
                    let (_, s) = self.pie_features(&mut g, &fm, &objs.boxes[p], &slice_angles)?;
                    slices = Some(s);
                }
            }
            for b in self.match_blocks(&mut g, &objs, pooled, slices, w, h)? {
                let kind = b.head.relation();
                for (&(a, bi), score) in b.pairs.iter().zip(om_scores(&g, b.logits)) {
                    pair_scores.push(PairScore { a, b: bi, kind, score });
                }
            }
        }
        Ok(Percept {
            kind: self.kind,
            kind_confidence: 1.0,
            detections,
            pair_scores,
            slice_angles_deg: slice_angles,
            flags,
        })
    }
}

fn match_heads(kind: ChartKind) -> Vec<MatchHead> {
    match kind {
        ChartKind::Bar => vec![MatchHead::BarMark, MatchHead::YTick, MatchHead::Legend, MatchHead::XTick],
        ChartKind::Pie => vec![MatchHead::SliceMark, MatchHead::Legend],
    }
}

pub(crate) fn store_arrays(store: &ParameterStore) -> NamedArrays {
    store.iter().map(|(k, p)| (k.to_string(), p.value.as_ref().clone())).collect()
}

/// Fills a freshly initialized store from loaded arrays, requiring the same
/// names and shapes.
pub(crate) fn store_from_arrays(arrays: NamedArrays, template: &ParameterStore, path: &Path) -> Result<ParameterStore> {
    if arrays.len() != template.len() {
        return Err(Error::Format(format!(
            "{}: {} arrays, expected {}",
            path.display(),
            arrays.len(),
            template.len()
        )));
    }
    let mut store = ParameterStore::new();
    for (name, t) in arrays {
        match template.get(&name) {
            Some(p) if p.shape == t.shape => store.insert(&name, t)?,
            _ => return Err(Error::Format(format!("{}: unexpected array `{name}`", path.display()))),
        }
    }
    Ok(store)
}

/// Chart-type classifier weights.
#[derive(Debug, Clone)]
pub struct TypeModel {
    pub config: ClassifierConfig,
    pub store: ParameterStore,
}

impl TypeModel {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParameterStore::new();
        init_classifier(&mut store, &config, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(TypeModel { config, store })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_arrays(path, &store_arrays(&self.store), Dtype::F32, json!({ "model": "type", "config": self.config }))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, arrays) = read_arrays(path)?;
        if header.meta["model"] != "type" {
            return Err(Error::Format(format!("{}: not a chart-type checkpoint", path.display())));
        }
        let config: ClassifierConfig = serde_json::from_value(header.meta["config"].clone())?;
        let fresh = TypeModel::new(config, 0)?;
        let store = store_from_arrays(arrays, &fresh.store, path)?;
        Ok(TypeModel { config: fresh.config, store })
    }
}

/// Trained networks behind the [`Perception`] interface. The type model picks
/// the chart model; without one, the single available chart model is used.
#[derive(Debug, Clone)]
pub struct NeuralPerception {
    pub type_model: Option<TypeModel>,
    pub bar: Option<ChartModel>,
    pub pie: Option<ChartModel>,
    pub inference: InferenceConfig,
}

impl NeuralPerception {
    /// Loads whichever of `type.ckpt`, `bar.ckpt` and `pie.ckpt` exist.
    pub fn load_dir(dir: &Path, inference: InferenceConfig) -> Result<Self> {
        let opt = |name: &str| dir.join(name).exists().then(|| dir.join(name));
        let type_model = opt(TYPE_MODEL_FILE).map(|p| TypeModel::load(&p)).transpose()?;
        let bar = opt(model_file(ChartKind::Bar)).map(|p| ChartModel::load(&p)).transpose()?;
        let pie = opt(model_file(ChartKind::Pie)).map(|p| ChartModel::load(&p)).transpose()?;
        for (m, kind) in [(&bar, ChartKind::Bar), (&pie, ChartKind::Pie)] {
            if let Some(m) = m {
                if m.kind != kind {
                    return Err(Error::Format(format!("{} holds a {} model", model_file(kind), m.kind.as_str())));
                }
            }
        }
        if bar.is_none() && pie.is_none() {
            return Err(Error::Input(format!("{}: no bar.ckpt or pie.ckpt", dir.display())));
        }
        Ok(NeuralPerception {
            type_model,
            bar,
            pie,
            inference,
        })
    }
}

impl Perception for NeuralPerception {
    fn perceive(&self, image: &RgbImage) -> Result<Percept> {
        let (kind, confidence) = match (&self.type_model, &self.bar, &self.pie) {
            (Some(t), _, _) => {
                let p = classify_chart_type(&t.store, &t.config, image)?;
                (p.kind, p.confidence)
            }
            (None, Some(_), None) => (ChartKind::Bar, 1.0),
            (None, None, Some(_)) => (ChartKind::Pie, 1.0),
            (None, _, _) => return Err(Error::Input("both chart models present but no type model".into())),
        };
        let model = match kind {
            ChartKind::Bar => self.bar.as_ref(),
            ChartKind::Pie => self.pie.as_ref(),
        }
        .ok_or_else(|| Error::Input(format!("image classified as {} but no such model is loaded", kind.as_str())))?;
        let mut p = model.perceive(image, &self.inference)?;
        p.kind_confidence = confidence;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::words::default_words;
    use crate::corpus::{generate_chart, GenConfig};

    fn tiny() -> ModelConfig {
        let mut c = ModelConfig::default();
        c.detector.head_hidden = 32;
        c.branches.om_hidden = 16;
        c.branches.text_hidden = 8;
        c.branches.text_input = 8;
        c.branches.angle_hidden = 8;
        c
    }

    #[test]
    fn losses_are_finite_for_both_kinds() {
        let cfg = GenConfig::simplified();
        for kind in [ChartKind::Bar, ChartKind::Pie] {
            let (_, img, ann) = generate_chart(kind, 3, &cfg, &default_words()).unwrap();
            let model = ChartModel::new(kind, tiny(), 1).unwrap();
            let mut g = Graph::new();
            let parts = model.losses(&mut g, &img, &ann, &mut ChaCha8Rng::seed_from_u64(0), true).unwrap();
            for v in [parts.det.total, parts.text.unwrap(), parts.om.unwrap()] {
                assert!(g.scalar(v).is_finite());
            }
            assert_eq!(parts.ang.is_some(), kind == ChartKind::Pie);
            assert!(g.scalar(parts.text.unwrap()) > 0.0);
            let det_only = model.losses(&mut g, &img, &ann, &mut ChaCha8Rng::seed_from_u64(0), false).unwrap();
            assert!(det_only.text.is_none() && det_only.ang.is_none());
            assert_eq!(g.scalar(det_only.det.total), g.scalar(parts.det.total));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ChartModel::new(ChartKind::Pie, tiny(), 5).unwrap();
        let p = dir.path().join("pie.ckpt");
        m.save(&p).unwrap();
        let back = ChartModel::load(&p).unwrap();
        assert_eq!(back.kind, ChartKind::Pie);
        assert_eq!(back.config, m.config);
        // Checkpoints hold 32-bit values.
        for (name, param) in m.store.iter() {
            let want: Vec<f64> = param.value.data.iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(back.store.get(name).unwrap().data, want);
        }
    }

    #[test]
    fn untrained_model_perceives_without_error() {
        let (_, img, _) = generate_chart(ChartKind::Bar, 9, &GenConfig::simplified(), &default_words()).unwrap();
        let m = ChartModel::new(ChartKind::Bar, tiny(), 2).unwrap();
        let p = m
            .perceive(
                &img,
                &InferenceConfig {
                    confidence_threshold: 0.0,
                    ..Default::default()
                },
            )
            .unwrap();
        assert!(p.detections.iter().all(|d| d.confidence > 0.0));
    }
}
