use rand::Rng;

use super::{conv, init_conv, DetectorConfig};
use crate::autodiff::{Graph, ParameterStore, Var};
use crate::error::{Error, Result};

/// Backbone outputs. `stages[i]` has stride `2^(i+1)`; `top` has the full
/// stride and feeds the proposal network and RoI pooling.
#[derive(Debug, Clone)]
pub struct FeatureMaps {
    pub stages: Vec<Var>,
    pub top: Var,
    pub stride: usize,
}

pub fn init_backbone<R: Rng>(store: &mut ParameterStore, cfg: &DetectorConfig, rng: &mut R) -> Result<()> {
    let mut cin = 3;
    for (i, &c) in cfg.channels.iter().enumerate() {
        init_conv(store, &format!("backbone.conv{}", i + 1), cin, c, 3, None, rng)?;
        cin = c;
    }
    init_conv(store, "backbone.top", cin, cin, 3, None, rng)
}

/// Runs the conv stages on a `3×H×W` image tensor.
pub fn backbone_forward(g: &mut Graph, store: &ParameterStore, cfg: &DetectorConfig, image: Var) -> Result<FeatureMaps> {
    let s = g.shape(image).to_vec();
    let stride = cfg.stride();
    if s.len() != 3 || s[0] != 3 || s[1] < stride || s[2] < stride {
        return Err(Error::Input(format!("image tensor {s:?} must be 3×H×W with sides of at least {stride}")));
    }
    let mut x = image;
    let mut stages = Vec::with_capacity(cfg.channels.len());
    for i in 0..cfg.channels.len() {
        let y = conv(g, store, &format!("backbone.conv{}", i + 1), x)?;
        let y = g.relu(y)?;
        x = g.max_pool2(y)?;
        stages.push(x);
    }
    let t = conv(g, store, "backbone.top", x)?;
    let top = g.relu(t)?;
    Ok(FeatureMaps { stages, top, stride })
}
