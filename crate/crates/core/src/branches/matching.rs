use rand::Rng;

use super::indicator::{smooth_indicator, SmoothIndicatorParams};
use crate::autodiff::{sigmoid, Graph, ParameterStore, Tensor, Var};
use crate::corpus::RelationKind;
use crate::error::{Error, Result};
use crate::geometry::{rotation_grid, BBox};

/// The matching heads, one parameter set each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchHead {
    /// Bar features against legend-mark features.
    BarMark,
    /// Rotated pie features against legend-mark features.
    SliceMark,
    /// Positions of y-tick labels against y-tick lines.
    YTick,
    /// Positions of legend marks against legend labels.
    Legend,
    /// Positions of bars against x-tick labels.
    XTick,
}

impl MatchHead {
    pub const ALL: [MatchHead; 5] = [MatchHead::BarMark, MatchHead::SliceMark, MatchHead::YTick, MatchHead::Legend, MatchHead::XTick];

    pub fn prefix(self) -> &'static str {
        match self {
            MatchHead::BarMark => "om.bar_mark",
            MatchHead::SliceMark => "om.slice_mark",
            MatchHead::YTick => "om.ytick",
            MatchHead::Legend => "om.legend",
            MatchHead::XTick => "om.xtick",
        }
    }

    pub fn relation(self) -> RelationKind {
        match self {
            MatchHead::BarMark => RelationKind::BarLegendMark,
            MatchHead::SliceMark => RelationKind::SliceLegendMark,
            MatchHead::YTick => RelationKind::YTickLabelLine,
            MatchHead::Legend => RelationKind::LegendMarkLabel,
            MatchHead::XTick => RelationKind::BarXTickLabel,
        }
    }

    /// Whether the head consumes positional codes rather than pooled features.
    pub fn positional(self) -> bool {
        matches!(self, MatchHead::YTick | MatchHead::Legend | MatchHead::XTick)
    }
}

/// Two-layer scorer on the concatenation `[a; b]`. The first layer is stored
/// as separate blocks for `a` and `b` so each side is projected once.
pub fn init_match_head<R: Rng>(store: &mut ParameterStore, head: MatchHead, dim_a: usize, dim_b: usize, hidden: usize, rng: &mut R) -> Result<()> {
    let p = head.prefix();
    let fan_in = dim_a + dim_b;
    store.init_he(&format!("{p}.wa"), &[dim_a, hidden], fan_in, rng)?;
    store.init_he(&format!("{p}.wb"), &[dim_b, hidden], fan_in, rng)?;
    store.init_const(&format!("{p}.b1"), &[hidden], 0.0)?;
    store.init_normal(&format!("{p}.w2"), &[hidden, 1], 0.01, rng)?;
    store.init_const(&format!("{p}.b2"), &[1], 0.0)
}

/// Pre-sigmoid scores `P×1` for `pairs` of rows of `a` (`Na×da`) and `b`
/// (`Nb×db`).
pub fn om_logits(g: &mut Graph, store: &ParameterStore, head: MatchHead, a: Var, b: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let p = head.prefix();
    let wa = g.param(store, &format!("{p}.wa"))?;
    let wb = g.param(store, &format!("{p}.wb"))?;
    for (side, x, w) in [("first", a, wa), ("second", b, wb)] {
        let (dx, dw) = (g.shape(x)[g.shape(x).len() - 1], g.shape(w)[0]);
        if dx != dw {
            return Err(Error::Input(format!(
                "{p}: {side} input has width {dx} but the head expects {dw}; feature and positional inputs cannot be mixed"
            )));
        }
    }
    let pa = g.matmul(a, wa)?;
    let pb = g.matmul(b, wb)?;
    let ia: Vec<usize> = pairs.iter().map(|x| x.0).collect();
    let ib: Vec<usize> = pairs.iter().map(|x| x.1).collect();
    let ga = g.gather_rows(pa, &ia)?;
    let gb = g.gather_rows(pb, &ib)?;
    let h = g.add(ga, gb)?;
    let b1 = g.param(store, &format!("{p}.b1"))?;
    let h = g.add_row_bias(h, b1)?;
    let h = g.relu(h)?;
    let w2 = g.param(store, &format!("{p}.w2"))?;
    let b2 = g.param(store, &format!("{p}.b2"))?;
    g.linear(h, w2, b2)
}

/// Match probabilities in `[0, 1]`.
pub fn om_scores(g: &Graph, logits: Var) -> Vec<f64> {
    g.value(logits).data.iter().map(|&z| sigmoid(z)).collect()
}

/// `Σ H(conf_a) · H(conf_b) · KL(y ‖ (OM, 1 − OM))`. With one-hot `y` the
/// divergence is the binary cross-entropy of the logit.
pub fn om_loss(g: &mut Graph, logits: Var, gt: &[f64], conf_a: &[f64], conf_b: &[f64], p: SmoothIndicatorParams) -> Result<Var> {
    if conf_a.len() != gt.len() || conf_b.len() != gt.len() {
        return Err(Error::Input(format!("{} labels with {}/{} confidences", gt.len(), conf_a.len(), conf_b.len())));
    }
    if gt.is_empty() {
        return g.constant(Tensor::scalar(0.0));
    }
    let w: Vec<f64> = conf_a
        .iter()
        .zip(conf_b)
        .map(|(&a, &b)| smooth_indicator(a, p) * smooth_indicator(b, p))
        .collect();
    g.bce_logits(logits, gt, &w)
}

/// `(cx/W, cy/H, w/W, h/H)` clamped to `[0, 1]`.
pub fn positional_code(b: &BBox, width: f64, height: f64) -> [f64; 4] {
    let (cx, cy) = b.center();
    [cx / width, cy / height, b.w / width, b.h / height].map(|v| v.clamp(0.0, 1.0))
}

/// The pie region map (`C×S×S`) rotated by `-boundary_deg`, so the slice
/// starting at that boundary lies just above the rightward ray. Returned as
/// one point-major row `1×(S·S·C)`.
pub fn slice_feature(g: &mut Graph, pie_map: Var, boundary_deg: f64) -> Result<Var> {
    let s = g.shape(pie_map).to_vec();
    if s.len() != 3 {
        return Err(Error::shape("slice_feature", format!("map {s:?}")));
    }
    let rotated = g.sample(pie_map, &rotation_grid(s[1], s[2], -boundary_deg), None)?;
    crate::detect::regions_as_rows(g, rotated, 1)
}
