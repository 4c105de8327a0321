//! Network ops: convolution, pooling, bilinear sampling, LSTM cell and the
//! fused losses.

use super::gemm::gemm;
use super::graph::{log_softmax, sigmoid, softmax, softplus, Graph, Node, Op, Var};
use super::tensor::{dims2, Tensor};
use crate::error::{Error, Result};
use crate::geometry::bilinear_taps;

pub(crate) struct ConvSaved {
    x: Var,
    w: Var,
    cin: usize,
    cout: usize,
    h: usize,
    w_in: usize,
    k: usize,
    col: Vec<f64>,
}

pub(crate) struct SampleSaved {
    x: Var,
    taps: Vec<[(usize, f64); 4]>,
    c: usize,
    hw: usize,
}

fn im2col(x: &[f64], cin: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut col = vec![0.0; cin * k * k * hw];
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    let sx0 = (x_lo as isize + dx) as usize;
                    dst[x_lo..x_hi].copy_from_slice(&src[sx0..sx0 + (x_hi - x_lo)]);
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], gx: &mut [f64], cin: usize, h: usize, w: usize, k: usize) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut gx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    let sx0 = (x_lo as isize + dx) as usize;
                    for (d, s) in dst[sx0..sx0 + (x_hi - x_lo)].iter_mut().zip(&src[x_lo..x_hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_backward(
    s: &ConvSaved,
    g: &[f64],
    nodes: &[Node],
    acc: &mut impl FnMut(Var, &mut dyn FnMut(&mut [f64])),
) {
    let hw = s.h * s.w_in;
    let ckk = s.cin * s.k * s.k;
    acc(s.w, &mut |gw| gemm(s.cout, hw, ckk, g, false, &s.col, true, gw, 1.0));
    if nodes[s.x.0].needs_grad {
        let wv = &nodes[s.w.0].value.data;
        let mut dcol = vec![0.0; ckk * hw];
        gemm(ckk, s.cout, hw, wv, true, g, false, &mut dcol, 0.0);
        acc(s.x, &mut |gx| col2im(&dcol, gx, s.cin, s.h, s.w_in, s.k));
    }
}

pub(crate) fn sample_backward(s: &SampleSaved, g: &[f64], acc: &mut impl FnMut(Var, &mut dyn FnMut(&mut [f64]))) {
    let n = s.taps.len();
    acc(s.x, &mut |gx| {
        for ch in 0..s.c {
            let plane = &mut gx[ch * s.hw..(ch + 1) * s.hw];
            let gr = &g[ch * n..(ch + 1) * n];
            for (taps, gg) in s.taps.iter().zip(gr) {
                for &(i, wt) in taps {
                    plane[i] += wt * gg;
                }
            }
        }
    });
}

pub(crate) fn lstm_backward(
    gates: Var,
    c_prev: Var,
    out: &[f64],
    g: &[f64],
    nodes: &[Node],
    acc: &mut impl FnMut(Var, &mut dyn FnMut(&mut [f64])),
) {
    let z = &nodes[gates.0].value.data;
    let cp = &nodes[c_prev.0].value.data;
    let bh = cp.len();
    let (b, cols) = dims2(&nodes[gates.0].value.shape);
    let h = cols / 4;
    debug_assert_eq!(b * h, bh);
    let mut dz = vec![0.0; 4 * bh];
    let mut dcp = vec![0.0; bh];
    for r in 0..b {
        let zr = &z[r * 4 * h..(r + 1) * 4 * h];
        let dzr = &mut dz[r * 4 * h..(r + 1) * 4 * h];
        for j in 0..h {
            let k = r * h + j;
            let i_g = sigmoid(zr[j]);
            let f_g = sigmoid(zr[h + j]);
            let g_g = zr[2 * h + j].tanh();
            let o_g = sigmoid(zr[3 * h + j]);
            let tc = out[bh + k].tanh();
            let dh = g[k];
            let dc = g[bh + k] + dh * o_g * (1.0 - tc * tc);
            dzr[j] = dc * g_g * i_g * (1.0 - i_g);
            dzr[h + j] = dc * cp[k] * f_g * (1.0 - f_g);
            dzr[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
            dzr[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
            dcp[k] = dc * f_g;
        }
    }
    acc(gates, &mut |gz| super::graph::axpy(gz, 1.0, &dz));
    acc(c_prev, &mut |gc| super::graph::axpy(gc, 1.0, &dcp));
}

/// CTC negative log-likelihood and its gradient w.r.t. the `T×K` logits.
/// Probabilities are the row-wise softmax of the logits.
pub fn ctc_forward_backward(logits: &[f64], t_len: usize, k: usize, target: &[usize], blank: usize) -> Result<(f64, Vec<f64>)> {
    if let Some(bad) = target.iter().find(|&&s| s >= k || s == blank) {
        return Err(Error::Input(format!("ctc target symbol {bad} invalid for {k} classes")));
    }
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    if target.len() + repeats > t_len {
        return Err(Error::Input(format!(
            "ctc target of length {} ({} repeats) cannot align to {t_len} frames",
            target.len(),
            repeats
        )));
    }
    let lp: Vec<Vec<f64>> = logits.chunks(k).map(log_softmax).collect();
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &s in target {
        ext.push(s);
        ext.push(blank);
    }
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    let skip_ok = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let mut alpha = vec![vec![ninf; s_len]; t_len];
    alpha[0][0] = lp[0][ext[0]];
    if s_len > 1 {
        alpha[0][1] = lp[0][ext[1]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut terms = [alpha[t - 1][s], ninf, ninf];
            if s >= 1 {
                terms[1] = alpha[t - 1][s - 1];
            }
            if skip_ok(s) {
                terms[2] = alpha[t - 1][s - 2];
            }
            alpha[t][s] = logsumexp(&terms) + lp[t][ext[s]];
        }
    }
    let last = t_len - 1;
    let log_p = if s_len > 1 {
        logsumexp(&[alpha[last][s_len - 1], alpha[last][s_len - 2]])
    } else {
        alpha[last][0]
    };
    if !log_p.is_finite() {
        return Err(Error::Numeric { op: "ctc_loss" });
    }

    // beta[t][s]: log-probability of finishing from (t, s), excluding frame t's emission.
    let mut beta = vec![vec![ninf; s_len]; t_len];
    beta[last][s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last][s_len - 2] = 0.0;
    }
    for t in (0..last).rev() {
        for s in 0..s_len {
            let mut terms = [beta[t + 1][s] + lp[t + 1][ext[s]], ninf, ninf];
            if s + 1 < s_len {
                terms[1] = beta[t + 1][s + 1] + lp[t + 1][ext[s + 1]];
            }
            if s + 2 < s_len && skip_ok(s + 2) {
                terms[2] = beta[t + 1][s + 2] + lp[t + 1][ext[s + 2]];
            }
            beta[t][s] = logsumexp(&terms);
        }
    }

    let mut grad = vec![0.0; t_len * k];
    for t in 0..t_len {
        let row = &mut grad[t * k..(t + 1) * k];
        for (j, v) in row.iter_mut().enumerate() {
            *v = lp[t][j].exp();
        }
        for s in 0..s_len {
            let occ = alpha[t][s] + beta[t][s] - log_p;
            if occ > ninf {
                row[ext[s]] -= occ.exp();
            }
        }
    }
    Ok((-log_p, grad))
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Graph {
    /// Same-padded, stride-1 `k×k` convolution of a `Cin×H×W` input with
    /// weights `Cout×Cin×k×k` and bias `Cout`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || ws[2] % 2 == 0 {
            return Err(Error::shape("conv2d", format!("input {xs:?}, weight {ws:?}")));
        }
        let (cin, h, w_in) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        let col = im2col(self.data(x), cin, h, w_in, k);
        let hw = h * w_in;
        let mut out = vec![0.0; cout * hw];
        gemm(cout, cin * k * k, hw, self.data(w), false, &col, false, &mut out, 0.0);
        let ng = self.nodes[x.0].needs_grad || self.nodes[w.0].needs_grad;
        let saved = ConvSaved {
            x,
            w,
            cin,
            cout,
            h,
            w_in,
            k,
            col: if self.nodes[w.0].needs_grad { col } else { Vec::new() },
        };
        let y = self.push(
            Tensor {
                shape: vec![cout, h, w_in],
                data: out,
            },
            Op::Conv2d(saved),
            ng,
            "conv2d",
        )?;
        self.add_channel_bias(y, b)
    }

    /// 2×2 max pooling with stride 2; odd edges are pooled over the cells that exist.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::shape("max_pool2", format!("input {xs:?}")));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
        let src = self.data(x);
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (y, xx) = (2 * oy + dy, 2 * ox + dx);
                            if y < h && xx < w {
                                let i = ch * h * w + y * w + xx;
                                if src[i] > best {
                                    best = src[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    let o = ch * oh * ow + oy * ow + ox;
                    out[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
        let ng = self.nodes[x.0].needs_grad;
        self.push(
            Tensor {
                shape: vec![c, oh, ow],
                data: out,
            },
            Op::MaxPool2 { x, argmax },
            ng,
            "max_pool2",
        )
    }

    /// Bilinear sampling of a `C×H×W` map at constant `(row, col)` points with
    /// zero padding. Output has shape `[C, points.len()]` reshaped to `out_shape`
    /// when given. Gradients flow to the map values only.
    pub fn sample(&mut self, x: Var, points: &[(f64, f64)], out_shape: Option<&[usize]>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::shape("sample", format!("input {xs:?}")));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let taps: Vec<[(usize, f64); 4]> = points.iter().map(|&(y, xx)| bilinear_taps(h, w, y, xx)).collect();
        let n = points.len();
        let src = self.data(x);
        let mut out = vec![0.0; c * n];
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for (p, tp) in taps.iter().enumerate() {
                out[ch * n + p] = tp.iter().map(|&(i, wt)| wt * plane[i]).sum();
            }
        }
        let shape = match out_shape {
            Some(s) if s.iter().product::<usize>() == c * n => s.to_vec(),
            Some(s) => return Err(Error::shape("sample", format!("cannot shape {c}×{n} as {s:?}"))),
            None => vec![c, n],
        };
        let ng = self.nodes[x.0].needs_grad;
        self.push(
            Tensor { shape, data: out },
            Op::Sample(SampleSaved { x, taps, c, hw: h * w }),
            ng,
            "sample",
        )
    }

    /// LSTM cell nonlinearity over a batch. `gates` holds pre-activations
    /// `[i, f, g, o]` per row (`B×4H`, or a flat `4H` vector for one row) and
    /// `c_prev` the `B·H` previous cell states. Returns `[h; c]` as a `2×B×H`
    /// block (a flat `2H` vector for a single flat row).
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Result<Var> {
        let bh = self.data(c_prev).len();
        let flat = self.shape(gates).len() == 1;
        let (b, cols) = dims2(self.shape(gates));
        if cols % 4 != 0 || b * (cols / 4) != bh {
            return Err(Error::shape("lstm_cell", format!("gates {:?} with state {bh}", self.shape(gates))));
        }
        let h = cols / 4;
        let z = self.data(gates);
        let cp = self.data(c_prev);
        let mut out = vec![0.0; 2 * bh];
        for r in 0..b {
            let zr = &z[r * 4 * h..(r + 1) * 4 * h];
            for j in 0..h {
                let k = r * h + j;
                let i_g = sigmoid(zr[j]);
                let f_g = sigmoid(zr[h + j]);
                let g_g = zr[2 * h + j].tanh();
                let o_g = sigmoid(zr[3 * h + j]);
                let c = f_g * cp[k] + i_g * g_g;
                out[bh + k] = c;
                out[k] = o_g * c.tanh();
            }
        }
        let shape = if flat { vec![2 * bh] } else { vec![2, b, h] };
        let ng = self.nodes[gates.0].needs_grad || self.nodes[c_prev.0].needs_grad;
        self.push(Tensor { shape, data: out }, Op::LstmCell { gates, c_prev }, ng, "lstm_cell")
    }

    /// `Σ_n w_n · (−log softmax(z_n)[t_n])` over the rows of `N×K` logits.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let (r, c) = dims2(self.shape(logits));
        if targets.len() != r || weights.len() != r || targets.iter().any(|&t| t >= c) {
            return Err(Error::shape("cross_entropy", format!("{r}×{c} logits, {} targets", targets.len())));
        }
        let z = self.data(logits);
        let loss: f64 = targets
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&t, &w))| -w * log_softmax(&z[i * c..(i + 1) * c])[t])
            .sum();
        let ng = self.nodes[logits.0].needs_grad;
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
            ng,
            "cross_entropy",
        )
    }

    /// `Σ w · (softplus(z) − t·z)`: binary cross-entropy on logits.
    pub fn bce_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        let n = self.data(logits).len();
        if targets.len() != n || weights.len() != n {
            return Err(Error::shape("bce_logits", format!("{n} logits, {} targets", targets.len())));
        }
        let loss: f64 = self
            .data(logits)
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((z, t), w)| w * (softplus(*z) - t * z))
            .sum();
        let ng = self.nodes[logits.0].needs_grad;
        self.push(
            Tensor::scalar(loss),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
            ng,
            "bce_logits",
        )
    }

    /// Weighted smooth-L1 (Huber with transition at `beta`) against a constant target.
    pub fn smooth_l1(&mut self, x: Var, target: &[f64], weights: &[f64], beta: f64) -> Result<Var> {
        let n = self.data(x).len();
        if target.len() != n || weights.len() != n {
            return Err(Error::shape("smooth_l1", format!("{n} inputs, {} targets", target.len())));
        }
        let loss: f64 = self
            .data(x)
            .iter()
            .zip(target)
            .zip(weights)
            .map(|((v, t), w)| w * smooth_l1_value(v - t, beta))
            .sum();
        let ng = self.nodes[x.0].needs_grad;
        self.push(
            Tensor::scalar(loss),
            Op::SmoothL1 {
                x,
                target: target.to_vec(),
                weights: weights.to_vec(),
                beta,
            },
            ng,
            "smooth_l1",
        )
    }

    /// CTC negative log-likelihood of `target` under `T×K` logits.
    pub fn ctc_loss(&mut self, logits: Var, target: &[usize], blank: usize) -> Result<Var> {
        let (t_len, k) = dims2(self.shape(logits));
        let (loss, grad) = ctc_forward_backward(self.data(logits), t_len, k, target, blank)?;
        let ng = self.nodes[logits.0].needs_grad;
        self.push(Tensor::scalar(loss), Op::Ctc { logits, grad }, ng, "ctc_loss")
    }
}

pub fn smooth_l1_value(d: f64, beta: f64) -> f64 {
    if d.abs() < beta {
        0.5 * d * d / beta
    } else {
        d.abs() - 0.5 * beta
    }
}

pub fn softmax_rows(data: &[f64], cols: usize) -> Vec<f64> {
    data.chunks(cols).flat_map(softmax).collect()
}
