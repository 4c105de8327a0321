use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{conv, dense, init_conv, init_dense};
use crate::autodiff::{softmax, Graph, ParameterStore, Tensor, Var};
use crate::corpus::{ChartKind, RgbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Side of the square the image is area-averaged to.
    pub input_size: usize,
    pub channels: Vec<usize>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_size: 64,
            channels: vec![8, 16, 32],
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::config("classifier.channels", "need at least one non-empty stage"));
        }
        if self.input_size < 1 << self.channels.len() {
            return Err(Error::config("classifier.input_size", "too small for the number of stages"));
        }
        Ok(())
    }
}

/// Area-averaged `3×size×size` tensor in `[-0.5, 0.5]`.
pub fn downsample(image: &RgbImage, size: usize) -> Tensor {
    let (w, h) = (image.width, image.height);
    let mut out = vec![0.0; 3 * size * size];
    for oy in 0..size {
        let (y0, y1) = (oy * h / size, ((oy + 1) * h / size).max(oy * h / size + 1).min(h));
        for ox in 0..size {
            let (x0, x1) = (ox * w / size, ((ox + 1) * w / size).max(ox * w / size + 1).min(w));
            let mut acc = [0.0; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = 3 * (y * w + x);
                    for c in 0..3 {
                        acc[c] += image.data[p + c] as f64;
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)).max(1) as f64;
            for c in 0..3 {
                out[c * size * size + oy * size + ox] = acc[c] / n / 255.0 - 0.5;
            }
        }
    }
    Tensor {
        shape: vec![3, size, size],
        data: out,
    }
}

pub fn init_classifier<R: Rng>(store: &mut ParameterStore, cfg: &ClassifierConfig, rng: &mut R) -> Result<()> {
    let mut cin = 3;
    for (i, &c) in cfg.channels.iter().enumerate() {
        init_conv(store, &format!("cls.conv{}", i + 1), cin, c, 3, None, rng)?;
        cin = c;
    }
    init_dense(store, "cls.fc", cin, 2, None, rng)
}

/// `1×2` logits (bar, pie) for a downsampled image tensor.
pub fn classifier_forward(g: &mut Graph, store: &ParameterStore, cfg: &ClassifierConfig, x: Var) -> Result<Var> {
    let mut h = x;
    for i in 0..cfg.channels.len() {
        let y = conv(g, store, &format!("cls.conv{}", i + 1), h)?;
        let y = g.relu(y)?;
        h = g.max_pool2(y)?;
    }
    let s = g.shape(h).to_vec();
    let hw = s[1] * s[2];
    let flat = g.reshape(h, &[s[0], hw])?;
    let ones = g.constant(Tensor::full(&[hw, 1], 1.0 / hw as f64))?;
    let pooled = g.matmul(flat, ones)?;
    let pooled = g.reshape(pooled, &[1, s[0]])?;
    dense(g, store, "cls.fc", pooled)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypePrediction {
    pub kind: ChartKind,
    pub confidence: f64,
}

pub fn classify_chart_type(store: &ParameterStore, cfg: &ClassifierConfig, image: &RgbImage) -> Result<TypePrediction> {
    let mut g = Graph::new();
    let x = g.constant(downsample(image, cfg.input_size))?;
    let logits = classifier_forward(&mut g, store, cfg, x)?;
    let p = softmax(&g.value(logits).data);
    Ok(if p[1] > p[0] {
        TypePrediction {
            kind: ChartKind::Pie,
            confidence: p[1],
        }
    } else {
        TypePrediction {
            kind: ChartKind::Bar,
            confidence: p[0],
        }
    })
}
