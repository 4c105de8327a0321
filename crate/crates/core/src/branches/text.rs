use rand::Rng;

use super::BranchConfig;
use crate::autodiff::{Graph, ParameterStore, Tensor, Var};
use crate::corpus::font::CHARSET;
use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::geometry::{oriented_crop_grid, text_extent, BBox};

pub const ALPHABET: &str = CHARSET;
/// Alphabet plus the blank.
pub const N_SYMBOLS: usize = 41;
pub const BLANK: usize = N_SYMBOLS - 1;

pub fn encode_text(s: &str) -> Result<Vec<usize>> {
    s.chars()
        .map(|c| {
            ALPHABET
                .chars()
                .position(|a| a == c)
                .ok_or_else(|| Error::Input(format!("character {c:?} is outside the alphabet")))
        })
        .collect()
}

/// Best-path decoding of `T×N_SYMBOLS` logits: per-frame argmax, merge
/// repeats, drop blanks.
pub fn ctc_greedy_decode(logits: &[f64]) -> String {
    let symbols: Vec<char> = ALPHABET.chars().collect();
    let mut out = String::new();
    let mut prev = BLANK;
    for frame in logits.chunks(N_SYMBOLS) {
        let best = frame
            .iter()
            .enumerate()
            .fold((BLANK, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        if best != prev && best != BLANK {
            out.push(symbols[best]);
        }
        prev = best;
    }
    out
}

/// Frames needed for a CTC alignment of `target`: one per symbol plus a
/// blank between repeats.
pub(crate) fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Geometry of one text line to read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextCrop {
    pub center: (f64, f64),
    pub length: f64,
    pub thickness: f64,
    pub angle_deg: f64,
    pub frames: usize,
}

impl TextCrop {
    pub fn new(b: &BBox, angle_deg: f64, cfg: &BranchConfig) -> Self {
        let (length, thickness) = text_extent(b, angle_deg, cfg.text_fallback_thickness);
        TextCrop {
            center: b.center(),
            length,
            thickness,
            angle_deg,
            frames: ((length / cfg.text_frame_px).ceil() as usize).max(1),
        }
    }

    pub fn with_min_frames(mut self, n: usize) -> Self {
        self.frames = self.frames.max(n);
        self
    }
}

fn lstm_params<R: Rng>(store: &mut ParameterStore, prefix: &str, inputs: &[(&str, usize)], hidden: usize, rng: &mut R) -> Result<()> {
    for (name, n_in) in inputs {
        store.init_glorot(&format!("{prefix}.{name}"), &[*n_in, 4 * hidden], *n_in, 4 * hidden, rng)?;
    }
    store.init_glorot(&format!("{prefix}.wh"), &[hidden, 4 * hidden], hidden, 4 * hidden, rng)?;
    // Forget-gate bias starts at 1.
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden].fill(1.0);
    store.insert(&format!("{prefix}.b"), Tensor::vector(b))
}

pub fn init_text_branch<R: Rng>(store: &mut ParameterStore, cfg: &BranchConfig, det: &DetectorConfig, rng: &mut R) -> Result<()> {
    let h = cfg.text_hidden;
    store.init_normal("text.orient.w", &[det.head_hidden, 1], 0.01, rng)?;
    store.init_const("text.orient.b", &[1], 0.0)?;
    store.init_he("text.proj1.w", &[cfg.text_rows * det.channels[0], cfg.text_input], cfg.text_rows * det.channels[0], rng)?;
    store.init_he("text.proj2.w", &[cfg.text_rows * det.channels[1], cfg.text_input], cfg.text_rows * det.channels[1], rng)?;
    store.init_const("text.proj.b", &[cfg.text_input], 0.0)?;
    for dir in ["f", "b"] {
        lstm_params(store, &format!("text.l1.{dir}"), &[("wx", cfg.text_input)], h, rng)?;
    }
    for dir in ["f", "b"] {
        lstm_params(store, &format!("text.l2.{dir}"), &[("wxf", h), ("wxb", h)], h, rng)?;
    }
    store.init_glorot("text.out.wf", &[h, N_SYMBOLS], h, N_SYMBOLS, rng)?;
    store.init_glorot("text.out.wb", &[h, N_SYMBOLS], h, N_SYMBOLS, rng)?;
    store.init_const("text.out.b", &[N_SYMBOLS], 0.0)
}

/// Predicted orientation in units of 90°, `R×1`, from head features.
pub fn orientation_forward(g: &mut Graph, store: &ParameterStore, feats: Var) -> Result<Var> {
    crate::detect::dense(g, store, "text.orient", feats)
}

/// Mean squared orientation error, angles measured in units of 90°.
pub fn orientation_loss(g: &mut Graph, pred: Var, gt_deg: &[f64]) -> Result<Var> {
    let n = gt_deg.len();
    if g.value(pred).len() != n {
        return Err(Error::shape("orientation_loss", format!("{} predictions, {n} targets", g.value(pred).len())));
    }
    if n == 0 {
        return g.constant(Tensor::scalar(0.0));
    }
    let t = g.constant(Tensor::new(g.shape(pred).to_vec(), gt_deg.iter().map(|a| a / 90.0).collect())?)?;
    let d = g.sub(pred, t)?;
    let sq = g.square(d)?;
    let s = g.sum(sq)?;
    g.scale(s, 1.0 / n as f64)
}

/// Samples every crop from one feature level and lays the result out as one
/// row per frame: `Σframes × (rows·C)`.
fn crop_level(g: &mut Graph, fm: Var, stride: usize, rows: usize, crops: &[TextCrop]) -> Result<Var> {
    let c = g.shape(fm)[0];
    let mut points = Vec::new();
    let mut order = Vec::new();
    for cr in crops {
        let base = points.len();
        points.extend(oriented_crop_grid(cr.center, cr.length, cr.thickness, cr.angle_deg, stride, rows, cr.frames));
        for col in 0..cr.frames {
            for r in 0..rows {
                order.push(base + r * cr.frames + col);
            }
        }
    }
    let s = g.sample(fm, &points, None)?;
    let t = g.transpose(s)?;
    let t = g.gather_rows(t, &order)?;
    g.reshape(t, &[order.len() / rows, rows * c])
}

/// Appends an all-zero row to an `N×C` matrix.
fn pad_row(g: &mut Graph, x: Var) -> Result<Var> {
    let (n, c) = crate::autodiff::dims2(g.shape(x));
    let z = g.constant(Tensor::zeros(&[c]))?;
    let flat = g.concat(&[x, z])?;
    g.reshape(flat, &[n + 1, c])
}

/// Runs one LSTM direction over a padded batch. `gx` holds precomputed input
/// gates for every frame plus a trailing pad row; `steps[t]` selects each
/// sequence's row at step `t`. Returns hidden states as `(T·B)×H`, step-major.
fn run_lstm(g: &mut Graph, gx: Var, wh: Var, steps: &[Vec<usize>], hidden: usize) -> Result<Var> {
    let b = steps.first().map_or(0, Vec::len);
    let mut h = g.constant(Tensor::zeros(&[b, hidden]))?;
    let mut c = g.constant(Tensor::zeros(&[b * hidden]))?;
    let mut outs = Vec::with_capacity(steps.len());
    for idx in steps {
        let xg = g.gather_rows(gx, idx)?;
        let hg = g.matmul(h, wh)?;
        let gates = g.add(xg, hg)?;
        let hc = g.lstm_cell(gates, c)?;
        let hv = g.slice(hc, 0, b * hidden)?;
        h = g.reshape(hv, &[b, hidden])?;
        c = g.slice(hc, b * hidden, b * hidden)?;
        outs.push(h);
    }
    let flat = g.concat(&outs)?;
    g.reshape(flat, &[steps.len() * b, hidden])
}

struct BatchLayout {
    offsets: Vec<usize>,
    frames: Vec<usize>,
    total: usize,
    t_max: usize,
}

impl BatchLayout {
    fn new(crops: &[TextCrop]) -> Self {
        let mut offsets = Vec::with_capacity(crops.len());
        let mut total = 0;
        for c in crops {
            offsets.push(total);
            total += c.frames;
        }
        BatchLayout {
            offsets,
            frames: crops.iter().map(|c| c.frames).collect(),
            total,
            t_max: crops.iter().map(|c| c.frames).max().unwrap_or(0),
        }
    }

    /// Gate-row indices per step; `reverse` walks each sequence backwards.
    fn steps(&self, reverse: bool) -> Vec<Vec<usize>> {
        (0..self.t_max)
            .map(|t| {
                self.offsets
                    .iter()
                    .zip(&self.frames)
                    .map(|(&o, &w)| match (t < w, reverse) {
                        (false, _) => self.total,
                        (true, false) => o + t,
                        (true, true) => o + w - 1 - t,
                    })
                    .collect()
            })
            .collect()
    }

    /// Rows of a step-major output that hold each frame, in frame order.
    fn gather(&self, reverse: bool) -> Vec<usize> {
        let b = self.frames.len();
        let mut rows = Vec::with_capacity(self.total);
        for (i, &w) in self.frames.iter().enumerate() {
            for j in 0..w {
                let t = if reverse { w - 1 - j } else { j };
                rows.push(t * b + i);
            }
        }
        rows
    }
}

fn bilstm_layer(g: &mut Graph, store: &ParameterStore, prefix: &str, inputs: &[(&str, Var)], layout: &BatchLayout, hidden: usize) -> Result<(Var, Var)> {
    let mut outs = Vec::with_capacity(2);
    for (dir, reverse) in [("f", false), ("b", true)] {
        let mut gx = None;
        for (name, x) in inputs {
            let w = g.param(store, &format!("{prefix}.{dir}.{name}"))?;
            let p = g.matmul(*x, w)?;
            gx = Some(match gx {
                None => p,
                Some(acc) => g.add(acc, p)?,
            });
        }
        let b = g.param(store, &format!("{prefix}.{dir}.b"))?;
        let gx = g.add_row_bias(gx.expect("at least one input"), b)?;
        let gx = pad_row(g, gx)?;
        let wh = g.param(store, &format!("{prefix}.{dir}.wh"))?;
        let hs = run_lstm(g, gx, wh, &layout.steps(reverse), hidden)?;
        outs.push(g.gather_rows(hs, &layout.gather(reverse))?);
    }
    Ok((outs[0], outs[1]))
}

/// Per-crop `frames×N_SYMBOLS` logits. `stages` are the first two backbone
/// maps (strides 2 and 4). All crops run through one batched two-layer
/// bidirectional LSTM.
pub fn text_logits(g: &mut Graph, store: &ParameterStore, cfg: &BranchConfig, stages: &[Var], crops: &[TextCrop]) -> Result<Vec<Var>> {
    if crops.is_empty() {
        return Ok(Vec::new());
    }
    if stages.len() < 2 {
        return Err(Error::Input("text recognition needs two feature levels".into()));
    }
    let layout = BatchLayout::new(crops);
    let c1 = crop_level(g, stages[0], 2, cfg.text_rows, crops)?;
    let c2 = crop_level(g, stages[1], 4, cfg.text_rows, crops)?;
    let w1 = g.param(store, "text.proj1.w")?;
    let w2 = g.param(store, "text.proj2.w")?;
    let bp = g.param(store, "text.proj.b")?;
    let p1 = g.matmul(c1, w1)?;
    let p2 = g.matmul(c2, w2)?;
    let x = g.add(p1, p2)?;
    let x = g.add_row_bias(x, bp)?;
    let x = g.relu(x)?;
    let h = cfg.text_hidden;
    let (f1, b1) = bilstm_layer(g, store, "text.l1", &[("wx", x)], &layout, h)?;
    let (f2, b2) = bilstm_layer(g, store, "text.l2", &[("wxf", f1), ("wxb", b1)], &layout, h)?;
    let of = g.param(store, "text.out.wf")?;
    let ob = g.param(store, "text.out.wb")?;
    let bo = g.param(store, "text.out.b")?;
    let lf = g.matmul(f2, of)?;
    let lb = g.matmul(b2, ob)?;
    let logits = g.add(lf, lb)?;
    let logits = g.add_row_bias(logits, bo)?;
    layout
        .offsets
        .iter()
        .zip(&layout.frames)
        .map(|(&o, &w)| {
            let rows: Vec<usize> = (o..o + w).collect();
            g.gather_rows(logits, &rows)
        })
        .collect()
}

/// `L_text = λ_o · L_orientation + λ_C · L_CTC`, with the CTC term averaged
/// over text lines.
pub fn text_branch_loss(
    g: &mut Graph,
    angle_pred: Var,
    angle_gt_deg: &[f64],
    logits: &[Var],
    targets: &[Vec<usize>],
    lambda_o: f64,
    lambda_c: f64,
) -> Result<Var> {
    if logits.len() != targets.len() {
        return Err(Error::Input(format!("{} logit blocks for {} targets", logits.len(), targets.len())));
    }
    let lo = orientation_loss(g, angle_pred, angle_gt_deg)?;
    let mut terms = Vec::with_capacity(logits.len());
    for (l, t) in logits.iter().zip(targets) {
        terms.push(g.ctc_loss(*l, t, BLANK)?);
    }
    let lc = if terms.is_empty() {
        g.constant(Tensor::scalar(0.0))?
    } else {
        let all = g.concat(&terms)?;
        let s = g.sum(all)?;
        g.scale(s, 1.0 / terms.len() as f64)?
    };
    let a = g.scale(lo, lambda_o)?;
    let b = g.scale(lc, lambda_c)?;
    g.add(a, b)
}
