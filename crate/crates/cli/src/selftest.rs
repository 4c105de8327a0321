//! Quick oracle and property checks runnable from an installed binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chartx::autodiff::{ctc_forward_backward, grad_check, log_softmax, Graph, Tensor};
use chartx::branches::{smooth_indicator, SmoothIndicatorParams};
use chartx::corpus::words::default_words;
use chartx::corpus::{chart_seed, generate_chart, ChartKind, GenConfig};
use chartx::eval::value_error;
use chartx::geometry::{generate_anchors, iou, nms_indices, AnchorConfig, BBox};
use chartx::infer::{decode, ExtractionResult, InferenceConfig, OraclePerception};

type Check = (&'static str, fn() -> Result<(), String>);

const CHECKS: [Check; 8] = [
    ("oracle decoding of 40 bar and 40 pie charts", oracle_decoding),
    ("NMS equals greedy reference", nms_reference),
    ("IoU equals integer-area oracle", iou_oracle),
    ("anchor count is m*n*35", anchor_count),
    ("loss gradients match central differences", gradients),
    ("smooth indicator fixtures", indicator),
    ("CTC equals path enumeration", ctc_brute),
    ("value error fixtures", value_errors),
];

pub fn run() -> bool {
    let mut ok = true;
    for (name, f) in CHECKS {
        match f() {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                ok = false;
                println!("FAIL {name}: {e}");
            }
        }
    }
    ok
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_decoding() -> Result<(), String> {
    let cfg = GenConfig::default();
    let words = default_words();
    let inf = InferenceConfig::default();
    for kind in [ChartKind::Bar, ChartKind::Pie] {
        let (mut good, mut n) = (0, 0);
        for i in 0..40 {
            let (_, _, ann) = generate_chart(kind, chart_seed(77, i), &cfg, &words).map_err(|e| e.to_string())?;
            let r = decode(&OraclePerception::percept_for(&ann), &inf).map_err(|e| e.to_string())?;
            let gt = ExtractionResult::ground_truth(&ann).map_err(|e| e.to_string())?;
            let errs: Vec<f64> = match kind {
                ChartKind::Bar => r.bars.iter().zip(&gt.bars).map(|(p, g)| value_error(p.value, g.value)).collect(),
                ChartKind::Pie => r
                    .slices
                    .iter()
                    .zip(&gt.slices)
                    .map(|(p, g)| value_error(p.percentage, g.percentage))
                    .collect(),
            };
            n += gt.bars.len() + gt.slices.len();
            good += errs.iter().filter(|&&e| e < 0.01).count();
        }
        let need = if kind == ChartKind::Bar { 0.99 } else { 1.0 };
        ensure(good as f64 >= need * n as f64, || format!("{}: {good}/{n} within 1%", kind.as_str()))?;
    }
    Ok(())
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    BBox::new(
        rng.gen_range(0..60) as f64,
        rng.gen_range(0..60) as f64,
        rng.gen_range(1..30) as f64,
        rng.gen_range(1..30) as f64,
    )
}

fn nms_reference() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let n = rng.gen_range(0..25);
        let boxes: Vec<BBox> = (0..n).map(|_| random_box(&mut rng)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut keep: Vec<usize> = Vec::new();
        for i in order {
            if keep.iter().all(|&k| iou(&boxes[k], &boxes[i]) <= 0.5) {
                keep.push(i);
            }
        }
        let got = nms_indices(&boxes, &scores, 0.5);
        ensure(got == keep, || format!("case {case}: {got:?} != {keep:?}"))?;
    }
    Ok(())
}

fn iou_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let ix = (a.x2().min(b.x2()) - a.x.max(b.x)).max(0.0) as i64;
        let iy = (a.y2().min(b.y2()) - a.y.max(b.y)).max(0.0) as i64;
        let inter = ix * iy;
        let union = (a.w * a.h) as i64 + (b.w * b.h) as i64 - inter;
        let want = inter as f64 / union as f64;
        let got = iou(&a, &b);
        ensure((got - want).abs() <= 1e-15, || format!("{a:?} {b:?}: {got} != {inter}/{union}"))?;
    }
    Ok(())
}

fn anchor_count() -> Result<(), String> {
    let cfg = AnchorConfig::default();
    for (m, n) in [(1, 1), (4, 7), (32, 32), (13, 80)] {
        let got = generate_anchors(m, n, &cfg).len();
        ensure(got == m * n * 35, || format!("{m}x{n}: {got} anchors"))?;
    }
    Ok(())
}

fn gradients() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let point = Tensor::new(vec![4, 5], (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).map_err(|e| e.to_string())?;
    let losses: [(&str, fn(&mut Graph, chartx::autodiff::Var) -> chartx::Result<chartx::autodiff::Var>); 3] = [
        ("cross-entropy", |g, x| g.cross_entropy(x, &[0, 3, 4, 1], &[0.25; 4])),
        ("smooth-l1", |g, x| g.smooth_l1(x, &[0.1; 20], &[1.0; 20], 1.0 / 9.0)),
        ("ctc", |g, x| g.ctc_loss(x, &[1, 2], 4)),
    ];
    for (name, f) in losses {
        let e = grad_check(f, &point, 1e-3).map_err(|e| e.to_string())?;
        ensure(e < 1e-4, || format!("{name}: relative error {e:.2e}"))?;
    }
    Ok(())
}

fn indicator() -> Result<(), String> {
    let p = SmoothIndicatorParams::default();
    let h = smooth_indicator(p.tau, p);
    ensure((h - 0.5).abs() <= 1e-12, || format!("H(tau) = {h}"))?;
    let h = smooth_indicator(0.75, p);
    let want = 1.0 / (1.0 + (-5.0f64).exp());
    ensure((h - want).abs() <= 1e-12, || format!("H(0.75) = {h}"))
}

/// Sum of probabilities of every frame path that collapses to `target`.
fn ctc_enumerate(logp: &[f64], t_len: usize, k: usize, target: &[usize], blank: usize) -> f64 {
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    loop {
        let mut collapsed = Vec::new();
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

fn ctc_brute() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let k = rng.gen_range(2..=4);
        let t_len = rng.gen_range(1..=5);
        let len = rng.gen_range(0..=2.min(t_len));
        let target: Vec<usize> = (0..len).map(|_| rng.gen_range(0..k - 1)).collect();
        let logits: Vec<f64> = (0..t_len * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let logp: Vec<f64> = logits.chunks(k).flat_map(log_softmax).collect();
        let want = ctc_enumerate(&logp, t_len, k, &target, k - 1);
        if want == 0.0 {
            continue;
        }
        let (nll, _) = ctc_forward_backward(&logits, t_len, k, &target, k - 1).map_err(|e| e.to_string())?;
        ensure((nll + want.ln()).abs() <= 1e-9, || format!("T={t_len} target {target:?}: {nll} vs {}", -want.ln()))?;
    }
    Ok(())
}

fn value_errors() -> Result<(), String> {
    ensure((value_error(110.0, 100.0) - 0.1).abs() < 1e-12, || "110 vs 100".into())?;
    let e = value_error(26.0, 25.0);
    ensure((e - 0.04).abs() < 1e-12 && e < 0.05 && e >= 0.01, || format!("26 vs 25: {e}"))
}
