use std::collections::BTreeMap;

use chartx::config::RunConfig;
use chartx::corpus::{build_dataset, ChartKind, Dataset, GenConfig, KindSelection};
use chartx::eval::{build_report, chart_id, load_ground_truth};
use chartx::infer::{extract, ExtractionResult, InferenceConfig, OraclePerception};
use chartx::model::ModelConfig;
use chartx::par::Parallelism;
use chartx::train::{LossWeights, TrainSchedule, Trainer};

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

#[test]
fn oracle_extraction_from_saved_images_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    let manifest = build_dataset(&GenConfig::simplified(), KindSelection::Mixed, 12, 4, &dir, Parallelism::Parallel).unwrap();
    assert_eq!(manifest.entries.len(), 12);
    let data = Dataset::open(&dir).unwrap();
    let inf = InferenceConfig::default();
    let mut preds = BTreeMap::new();
    for (i, ann) in data.annotations.iter().enumerate() {
        let img = data.image(i).unwrap();
        assert_eq!((img.width as u32, img.height as u32), (ann.width, ann.height));
        let r = extract(&OraclePerception::new(ann.clone()), &img, &inf).unwrap();
        preds.insert(chart_id(&ann.image), r);
    }
    let gts = load_ground_truth(&dir).unwrap();
    let report = build_report(&preds, &gts, Parallelism::Sequential).unwrap();
    assert_eq!(report.chart_type_accuracy, 1.0);
    if let Some(bar) = &report.bar {
        assert_eq!(bar.value.e1, 1.0, "{}", report.to_table());
        // A bar whose top sits on a tick can land on either side of it after
        // pixel rounding, which changes its tick bounds.
        assert!(bar.tuple.e1 >= 0.95, "{}", report.to_table());
        assert_eq!(bar.title, 1.0);
    }
    if let Some(pie) = &report.pie {
        assert_eq!(pie.percent.e1, 1.0, "{}", report.to_table());
        assert_eq!(pie.legend, 1.0);
    }
}

#[test]
fn extraction_results_round_trip_through_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    build_dataset(&GenConfig::simplified(), KindSelection::Mixed, 4, 8, &dir, Parallelism::Sequential).unwrap();
    let data = Dataset::open(&dir).unwrap();
    for ann in &data.annotations {
        let r = ExtractionResult::ground_truth(ann).unwrap();
        let path = tmp.path().join("r.json");
        r.save(&path).unwrap();
        assert_eq!(ExtractionResult::load(&path).unwrap(), r);
    }
}

#[test]
fn run_config_round_trips_and_rejects_unknown_keys() {
    let cfg = RunConfig::default();
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    let err = RunConfig::from_json(r#"{"schedule": {"stage_one": 3}}"#).unwrap_err();
    assert!(err.to_string().contains("stage_one"), "{err}");
    let partial = RunConfig::from_json(r#"{"schedule": {"stage1_steps": 3}}"#).unwrap();
    assert_eq!(partial.schedule.stage1_steps, 3);
    assert_eq!(partial.schedule.stage2_steps, TrainSchedule::default().stage2_steps);
}

fn schedule() -> TrainSchedule {
    TrainSchedule {
        stage1_steps: 3,
        stage2_steps: 3,
        seed: 2,
        ..Default::default()
    }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    build_dataset(&GenConfig::simplified(), KindSelection::Bar, 3, 1, &dir, Parallelism::Sequential).unwrap();
    let data = Dataset::open(&dir).unwrap();
    let mut full = Trainer::new(&data, ChartKind::Bar, tiny_model(), schedule(), LossWeights::default()).unwrap();
    full.run(|_| {}).unwrap();

    let mut part = Trainer::new(&data, ChartKind::Bar, tiny_model(), schedule(), LossWeights::default()).unwrap();
    for _ in 0..4 {
        part.step().unwrap();
    }
    assert_eq!(part.stage(), 2);
    let state = tmp.path().join("t.state");
    part.save_state(&state).unwrap();
    let mut resumed = Trainer::load_state(&state, &data).unwrap();
    assert_eq!(resumed.step_index(), 4);
    resumed.run(|_| {}).unwrap();
    assert_eq!(resumed.history, full.history);
    for name in full.model.store.names() {
        assert_eq!(resumed.model.store.get(name), full.model.store.get(name), "{name}");
    }
    assert!(resumed.step().is_err());
}

#[test]
fn detection_loss_falls_when_fitting_one_chart() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    build_dataset(&GenConfig::simplified(), KindSelection::Pie, 1, 6, &dir, Parallelism::Sequential).unwrap();
    let data = Dataset::open(&dir).unwrap();
    let sched = TrainSchedule {
        stage1_steps: 80,
        stage2_steps: 0,
        optimizer: chartx::autodiff::AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        ..schedule()
    };
    let mut t = Trainer::new(&data, ChartKind::Pie, tiny_model(), sched, LossWeights::default()).unwrap();
    t.run(|_| {}).unwrap();
    let mean = |r: &[chartx::train::HistoryRow]| r.iter().map(|h| h.l_det).sum::<f64>() / r.len() as f64;
    let (first, last) = (mean(&t.history[..5]), mean(&t.history[t.history.len() - 5..]));
    assert!(last < 0.7 * first, "L_det {first} -> {last}");
}

#[test]
fn trainer_rejects_a_dataset_without_the_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    build_dataset(&GenConfig::simplified(), KindSelection::Bar, 2, 1, &dir, Parallelism::Sequential).unwrap();
    let data = Dataset::open(&dir).unwrap();
    assert!(Trainer::new(&data, ChartKind::Pie, tiny_model(), schedule(), LossWeights::default()).is_err());
}
