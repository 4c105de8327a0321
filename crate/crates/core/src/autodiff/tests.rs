use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn check<F>(f: F, point: &Tensor, tol: f64)
where
    F: Fn(&mut Graph, Var) -> crate::Result<Var>,
{
    let err = grad_check(f, point, 1e-3).unwrap();
    assert!(err < tol, "max relative error {err:e} >= {tol:e}");
}

#[test]
fn sum_of_squares_gradient() {
    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![1.0, 2.0])).unwrap();
    let sq = g.square(x).unwrap();
    let y = g.sum(sq).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn frozen_parameter_gets_gradient_but_no_update() {
    let mut store = ParameterStore::new();
    store.insert("w", Tensor::vector(vec![0.5, -1.0])).unwrap();
    store.insert("v", Tensor::vector(vec![0.5, -1.0])).unwrap();
    store.set_trainable("w", false);
    let before = store.get("w").unwrap().clone();
    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    let v = g.param(&store, "v").unwrap();
    let p = g.mul(w, v).unwrap();
    let y = g.sum(p).unwrap();
    g.backward(y).unwrap();
    let grads = g.param_grads();
    assert_eq!(grads.len(), 2);
    assert!(grads.iter().any(|(n, gr)| n == "w" && gr.iter().any(|x| *x != 0.0)));
    drop(g);
    let mut opt = Adam::new(AdamConfig {
        learning_rate: 0.1,
        ..Default::default()
    });
    opt.step(&mut store, &grads);
    assert_eq!(store.get("w").unwrap(), &before);
    assert_ne!(store.get("v").unwrap(), &before);
}

#[test]
fn non_finite_values_are_reported() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![-1.0])).unwrap();
    assert!(matches!(g.log(x), Err(Error::Numeric { op: "log" })));
}

#[test]
fn shape_mismatch_names_op() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = g.constant(Tensor::zeros(&[2, 3])).unwrap();
    match g.matmul(a, b) {
        Err(Error::Shape { op, .. }) => assert_eq!(op, "matmul"),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new();
    let x = g.constant(rand_tensor(&mut rng, &[5, 7], 20.0)).unwrap();
    let y = g.softmax_rows(x).unwrap();
    for row in g.value(y).data.chunks(7) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn concat_backward_splits_exactly() {
    let mut g = Graph::new();
    let a = g.input(Tensor::vector(vec![1.0, 2.0])).unwrap();
    let b = g.input(Tensor::vector(vec![3.0])).unwrap();
    let c = g.concat(&[a, b]).unwrap();
    let w = g.constant(Tensor::vector(vec![10.0, 20.0, 30.0])).unwrap();
    let p = g.mul(c, w).unwrap();
    let y = g.sum(p).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(a).unwrap(), &[10.0, 20.0]);
    assert_eq!(g.grad(b).unwrap(), &[30.0]);
}

#[test]
fn linear_function_gradient_is_exact() {
    let point = Tensor::vector(vec![0.3, -1.2, 2.0]);
    let err = grad_check(
        |g, x| {
            let w = g.constant(Tensor::vector(vec![1.5, -2.0, 0.25]))?;
            let p = g.mul(x, w)?;
            g.sum(p)
        },
        &point,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn sigmoid_composition_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = rand_tensor(&mut rng, &[6], 2.0);
    check(
        |g, x| {
            let s = g.sigmoid(x)?;
            let t = g.tanh(s)?;
            let e = g.exp(t)?;
            let l = g.log(e)?;
            let q = g.square(l)?;
            g.sum(q)
        },
        &p,
        1e-6,
    );
}

#[test]
fn matmul_variants_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = rand_tensor(&mut rng, &[12], 1.0);
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        check(
            |g, x| {
                let a_flat = g.slice(x, 0, 6)?;
                let b_flat = g.slice(x, 6, 6)?;
                let a = g.reshape(a_flat, if ta { &[3, 2] } else { &[2, 3] })?;
                let b = g.reshape(b_flat, if tb { &[2, 3] } else { &[3, 2] })?;
                let c = g.matmul_t(a, ta, b, tb)?;
                let s = g.sigmoid(c)?;
                g.sum(s)
            },
            &p,
            1e-6,
        );
    }
}

#[test]
fn conv_pool_bias_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (cin, h, w, cout) = (2, 5, 4, 3);
    let nx = cin * h * w;
    let nw = cout * cin * 9;
    let p = rand_tensor(&mut rng, &[nx + nw + cout], 1.0);
    check(
        |g, x| {
            let xi = g.slice(x, 0, nx)?;
            let xi = g.reshape(xi, &[cin, h, w])?;
            let wi = g.slice(x, nx, nw)?;
            let wi = g.reshape(wi, &[cout, cin, 3, 3])?;
            let bi = g.slice(x, nx + nw, cout)?;
            let y = g.conv2d(xi, wi, bi)?;
            let y = g.tanh(y)?;
            let y = g.max_pool2(y)?;
            let y = g.square(y)?;
            g.sum(y)
        },
        &p,
        1e-4,
    );
}

#[test]
fn conv_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (cin, h, w, cout) = (2, 4, 5, 2);
    let x = rand_tensor(&mut rng, &[cin, h, w], 1.0);
    let wt = rand_tensor(&mut rng, &[cout, cin, 3, 3], 1.0);
    let b = rand_tensor(&mut rng, &[cout], 1.0);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let wv = g.constant(wt.clone()).unwrap();
    let bv = g.constant(b.clone()).unwrap();
    let y = g.conv2d(xv, wv, bv).unwrap();
    for co in 0..cout {
        for i in 0..h {
            for j in 0..w {
                let mut s = b.data[co];
                for ci in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (yy, xx) = (i as isize + ky as isize - 1, j as isize + kx as isize - 1);
                            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                                s += wt.data[((co * cin + ci) * 3 + ky) * 3 + kx]
                                    * x.data[(ci * h + yy as usize) * w + xx as usize];
                            }
                        }
                    }
                }
                assert!((g.value(y).data[(co * h + i) * w + j] - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn convolution_is_translation_equivariant_on_interior() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (h, w) = (8, 8);
    let wt = rand_tensor(&mut rng, &[1, 1, 3, 3], 1.0);
    let mut img = Tensor::zeros(&[1, h, w]);
    img.data[3 * w + 3] = 1.0;
    img.data[3 * w + 4] = -0.5;
    let mut shifted = Tensor::zeros(&[1, h, w]);
    shifted.data[4 * w + 4] = 1.0;
    shifted.data[4 * w + 5] = -0.5;
    let run = |t: Tensor| {
        let mut g = Graph::new();
        let x = g.constant(t).unwrap();
        let wv = g.constant(wt.clone()).unwrap();
        let b = g.constant(Tensor::zeros(&[1])).unwrap();
        let y = g.conv2d(x, wv, b).unwrap();
        g.value(y).data.clone()
    };
    let a = run(img);
    let b = run(shifted);
    for i in 1..h - 2 {
        for j in 1..w - 2 {
            assert!((a[i * w + j] - b[(i + 1) * w + j + 1]).abs() < 1e-15);
        }
    }
}

#[test]
fn sampling_gradient_flows_to_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = rand_tensor(&mut rng, &[2 * 4 * 4], 1.0);
    let points = vec![(0.3, 1.7), (2.5, 2.5), (-0.4, 0.2), (3.2, 2.9)];
    check(
        |g, x| {
            let m = g.reshape(x, &[2, 4, 4])?;
            let s = g.sample(m, &points, None)?;
            let s = g.square(s)?;
            g.sum(s)
        },
        &p,
        1e-6,
    );
}

#[test]
fn lstm_single_step_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (d, h) = (3, 4);
    let nw = d * 4 * h + h * 4 * h + 4 * h;
    let p = rand_tensor(&mut rng, &[d + h + h + nw], 0.8);
    let err = grad_check(
        |g, x| {
            let xi = g.slice(x, 0, d)?;
            let xi = g.reshape(xi, &[1, d])?;
            let hp = g.slice(x, d, h)?;
            let hp = g.reshape(hp, &[1, h])?;
            let cp = g.slice(x, d + h, h)?;
            let mut off = d + 2 * h;
            let wx = g.slice(x, off, d * 4 * h)?;
            let wx = g.reshape(wx, &[d, 4 * h])?;
            off += d * 4 * h;
            let wh = g.slice(x, off, h * 4 * h)?;
            let wh = g.reshape(wh, &[h, 4 * h])?;
            off += h * 4 * h;
            let b = g.slice(x, off, 4 * h)?;
            let a = g.matmul(xi, wx)?;
            let r = g.matmul(hp, wh)?;
            let z = g.add(a, r)?;
            let z = g.add_row_bias(z, b)?;
            let hc = g.lstm_cell(z, cp)?;
            let hc = g.tanh(hc)?;
            let q = g.square(hc)?;
            g.sum(q)
        },
        &p,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn batched_lstm_matches_rowwise_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let (b, h) = (3, 2);
    let p = rand_tensor(&mut rng, &[b * 4 * h + b * h], 1.5);
    let err = grad_check(
        |g, x| {
            let z = g.slice(x, 0, b * 4 * h)?;
            let z = g.reshape(z, &[b, 4 * h])?;
            let cp = g.slice(x, b * 4 * h, b * h)?;
            let hc = g.lstm_cell(z, cp)?;
            let q = g.square(hc)?;
            let q = g.mul(q, hc)?;
            g.sum(q)
        },
        &p,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");

    let mut g = Graph::new();
    let x = g.constant(p.clone()).unwrap();
    let z = g.slice(x, 0, b * 4 * h).unwrap();
    let z = g.reshape(z, &[b, 4 * h]).unwrap();
    let cp = g.slice(x, b * 4 * h, b * h).unwrap();
    let batched = g.lstm_cell(z, cp).unwrap();
    assert_eq!(g.shape(batched), &[2, b, h]);
    let all = g.value(batched).data.clone();
    for r in 0..b {
        let zr = g.slice(x, r * 4 * h, 4 * h).unwrap();
        let cr = g.slice(x, b * 4 * h + r * h, h).unwrap();
        let one = g.lstm_cell(zr, cr).unwrap();
        let v = &g.value(one).data;
        assert_eq!(&v[..h], &all[r * h..(r + 1) * h]);
        assert_eq!(&v[h..], &all[b * h + r * h..b * h + (r + 1) * h]);
    }
}

#[test]
fn loss_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = rand_tensor(&mut rng, &[4, 5], 2.0);
    check(|g, x| g.cross_entropy(x, &[0, 3, 4, 1], &[1.0, 0.5, 2.0, 1.0]), &p, 1e-6);
    check(|g, x| g.log_softmax_rows(x).and_then(|y| {
        let y = g.square(y)?;
        g.sum(y)
    }), &p, 1e-6);
    let targets: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
    check(|g, x| g.bce_logits(x, &targets, &[0.7; 20]), &p, 1e-6);
    // Smooth-L1 away from its kink at |d| = beta.
    let t: Vec<f64> = p.data.iter().map(|v| v + if v.abs() > 1.0 { 0.3 } else { 2.5 }).collect();
    check(|g, x| g.smooth_l1(x, &t, &[1.0; 20], 1.0), &p, 1e-6);
}

#[test]
fn ctc_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for t_len in 2..=6 {
        let p = rand_tensor(&mut rng, &[t_len, 4], 1.5);
        check(|g, x| g.ctc_loss(x, &[1, 2], 0), &p, 1e-4);
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, &[2, 6, 6], 1.0);
        let w = rand_tensor(&mut rng, &[3, 2, 3, 3], 1.0);
        let mut g = Graph::new();
        let xv = g.constant(x).unwrap();
        let wv = g.input(w).unwrap();
        let b = g.constant(Tensor::zeros(&[3])).unwrap();
        let y = g.conv2d(xv, wv, b).unwrap();
        let y = g.relu(y).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        (g.value(y).data.clone(), g.grad(wv).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}
