use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Graph, ParameterStore, Tensor, Var};
use crate::error::{Error, Result};

/// Boundary angles in emission order and where decoding stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSequence {
    pub angles_deg: Vec<f64>,
    /// Step at which the stop signal fired, if it did.
    pub stop_index: Option<usize>,
    /// No stop signal within the step budget.
    pub truncated: bool,
}

pub fn init_angle_decoder<R: Rng>(store: &mut ParameterStore, in_dim: usize, hidden: usize, rng: &mut R) -> Result<()> {
    let h4 = 4 * hidden;
    let mut gate_bias = vec![0.0; h4];
    gate_bias[hidden..2 * hidden].fill(1.0);
    store.init_glorot("ang.l1.wx", &[in_dim, h4], in_dim, h4, rng)?;
    store.init_glorot("ang.l1.wh", &[hidden, h4], hidden, h4, rng)?;
    store.insert("ang.l1.b", Tensor::vector(gate_bias.clone()))?;
    store.init_glorot("ang.l2.wx", &[hidden, h4], hidden, h4, rng)?;
    store.init_glorot("ang.l2.wh", &[hidden, h4], hidden, h4, rng)?;
    store.insert("ang.l2.b", Tensor::vector(gate_bias))?;
    store.init_glorot("ang.out.w", &[hidden, 3], hidden, 3, rng)?;
    store.init_const("ang.out.b", &[3], 0.0)
}

/// Two-layer LSTM fed the same `1×D` pie feature at every step. Each step
/// emits `(sin, cos, stop logit)`; the result is `steps×3`.
pub fn angle_decoder_forward(g: &mut Graph, store: &ParameterStore, feat: Var, steps: usize) -> Result<Var> {
    let hidden = store
        .get("ang.l1.wh")
        .map(|t| t.shape[0])
        .ok_or_else(|| Error::Input("angle decoder parameters missing".into()))?;
    let wx1 = g.param(store, "ang.l1.wx")?;
    let b1 = g.param(store, "ang.l1.b")?;
    let gx1 = g.linear(feat, wx1, b1)?;
    let wh1 = g.param(store, "ang.l1.wh")?;
    let wx2 = g.param(store, "ang.l2.wx")?;
    let b2 = g.param(store, "ang.l2.b")?;
    let wh2 = g.param(store, "ang.l2.wh")?;
    let wo = g.param(store, "ang.out.w")?;
    let bo = g.param(store, "ang.out.b")?;
    let mut h1 = g.constant(Tensor::zeros(&[1, hidden]))?;
    let mut c1 = g.constant(Tensor::zeros(&[hidden]))?;
    let mut h2 = h1;
    let mut c2 = c1;
    let mut outs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let r = g.matmul(h1, wh1)?;
        let z = g.add(gx1, r)?;
        let hc = g.lstm_cell(z, c1)?;
        let hv = g.slice(hc, 0, hidden)?;
        h1 = g.reshape(hv, &[1, hidden])?;
        c1 = g.slice(hc, hidden, hidden)?;

        let x = g.linear(h1, wx2, b2)?;
        let r = g.matmul(h2, wh2)?;
        let z = g.add(x, r)?;
        let hc = g.lstm_cell(z, c2)?;
        let hv = g.slice(hc, 0, hidden)?;
        h2 = g.reshape(hv, &[1, hidden])?;
        c2 = g.slice(hc, hidden, hidden)?;
        outs.push(g.linear(h2, wo, bo)?);
    }
    let flat = g.concat(&outs)?;
    g.reshape(flat, &[steps, 3])
}

/// Squared error on `(sin, cos)` over the `n` boundary steps plus binary
/// cross-entropy on the stop signal over `n + 1` steps (1 only at the last).
pub fn angle_loss(g: &mut Graph, out: Var, angles_deg: &[f64]) -> Result<Var> {
    let n = angles_deg.len();
    let steps = g.shape(out)[0];
    if steps < n + 1 {
        return Err(Error::Input(format!("{steps} decoder steps cannot supervise {n} angles plus stop")));
    }
    let rows: Vec<usize> = (0..=n).collect();
    let o = g.gather_rows(out, &rows)?;
    let pick_stop = g.constant(Tensor::new(vec![3, 1], vec![0.0, 0.0, 1.0])?)?;
    let stop = g.matmul(o, pick_stop)?;
    let mut stop_t = vec![0.0; n + 1];
    stop_t[n] = 1.0;
    let l_stop = g.bce_logits(stop, &stop_t, &vec![1.0; n + 1])?;
    if n == 0 {
        return Ok(l_stop);
    }
    let first: Vec<usize> = (0..n).collect();
    let o = g.gather_rows(out, &first)?;
    let pick_sc = g.constant(Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0])?)?;
    let sc = g.matmul(o, pick_sc)?;
    let target: Vec<f64> = angles_deg
        .iter()
        .flat_map(|a| {
            let (s, c) = a.to_radians().sin_cos();
            [s, c]
        })
        .collect();
    let t = g.constant(Tensor::new(vec![n, 2], target)?)?;
    let d = g.sub(sc, t)?;
    let sq = g.square(d)?;
    let l_sc = g.sum(sq)?;
    g.add(l_sc, l_stop)
}

/// Reads decoder output rows `(sin, cos, stop)` until the first stop
/// probability above 0.5. Angles are in `[0, 360)`.
pub fn decode_angles(out: &[f64]) -> AngleSequence {
    let mut angles = Vec::new();
    for (t, row) in out.chunks_exact(3).enumerate() {
        if sigmoid(row[2]) > 0.5 {
            return AngleSequence {
                angles_deg: angles,
                stop_index: Some(t),
                truncated: false,
            };
        }
        let norm = row[0].hypot(row[1]);
        let (s, c) = if norm > 0.0 { (row[0] / norm, row[1] / norm) } else { (0.0, 1.0) };
        angles.push(s.atan2(c).to_degrees().rem_euclid(360.0));
    }
    AngleSequence {
        angles_deg: angles,
        stop_index: None,
        truncated: true,
    }
}
