//! Multi-task loss assembly, the two-stage schedule and checkpointed training.
//!
//! Stage 1 trains detection alone: branch weights are zero, branch parameters
//! are frozen and branch losses are not evaluated. It ends after
//! `stage1_steps` or earlier on a plateau of the detection loss. Stage 2
//! releases the branches and optimizes the full weighted loss for
//! `stage2_steps`. One chart per step; chart order and every sampling
//! decision derive from the schedule seed and the step number, so runs and
//! resumed runs are reproducible.

mod classifier;
mod history;

pub use classifier::{train_type_model, TypeTrainOutcome};
pub use history::{read_history, write_history, write_losses, HistoryRow, PlateauDetector};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::{read_arrays, write_arrays, Adam, AdamConfig, Dtype, Graph, NamedArrays, Tensor, Var};
use crate::corpus::spec::chart_seed;
use crate::corpus::{ChartKind, Dataset};
use crate::error::{Error, Result};
use crate::model::{store_arrays, store_from_arrays, ChartModel, ModelConfig, BRANCH_PREFIXES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_text: f64,
    pub lambda_om: f64,
    pub lambda_ang: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_text: 0.1,
            lambda_om: 1.0,
            lambda_ang: 1.0,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        lambda_text: 0.0,
        lambda_om: 0.0,
        lambda_ang: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_text", self.lambda_text), ("lambda_om", self.lambda_om), ("lambda_ang", self.lambda_ang)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("weights.{name}"), "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// `L_det + λ_text L_text + λ_OM L_OM`, plus `λ_ang L_ang` for pies.
pub fn assemble_loss(g: &mut Graph, kind: ChartKind, det: Var, text: Option<Var>, om: Option<Var>, ang: Option<Var>, w: &LossWeights) -> Result<Var> {
    let missing = |c: &str| Error::Input(format!("{} loss needs the {c} component", kind.as_str()));
    let text = text.ok_or_else(|| missing("text"))?;
    let om = om.ok_or_else(|| missing("matching"))?;
    let t = g.scale(text, w.lambda_text)?;
    let total = g.add(det, t)?;
    let o = g.scale(om, w.lambda_om)?;
    let total = g.add(total, o)?;
    match (kind, ang) {
        (ChartKind::Bar, None) => Ok(total),
        (ChartKind::Bar, Some(_)) => Err(Error::Input("bar loss has no angle component".into())),
        (ChartKind::Pie, Some(a)) => {
            let a = g.scale(a, w.lambda_ang)?;
            g.add(total, a)
        }
        (ChartKind::Pie, None) => Err(missing("angle")),
    }
}

/// The same sum on plain numbers, in the same order of operations.
pub fn assemble_value(kind: ChartKind, det: f64, text: f64, om: f64, ang: Option<f64>, w: &LossWeights) -> f64 {
    let total = det + w.lambda_text * text + w.lambda_om * om;
    match kind {
        ChartKind::Bar => total,
        ChartKind::Pie => total + w.lambda_ang * ang.unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    /// Upper bound on detection-only steps.
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    /// Ends stage 1 early when the detection loss stops improving.
    pub plateau: PlateauDetector,
    pub optimizer: AdamConfig,
    pub seed: u64,
    /// Steps and learning rate for the chart-type classifier.
    pub classifier_steps: usize,
    pub classifier_learning_rate: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            stage1_steps: 4000,
            stage2_steps: 4000,
            plateau: PlateauDetector {
                window: 500,
                min_improvement: 0.01,
            },
            optimizer: AdamConfig::default(),
            seed: 0,
            classifier_steps: 1500,
            classifier_learning_rate: 1e-3,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(Error::config("schedule.optimizer", "invalid optimizer settings"));
        }
        if !(self.classifier_learning_rate > 0.0) {
            return Err(Error::config("schedule.classifier_learning_rate", "must be positive"));
        }
        if self.stage1_steps + self.stage2_steps == 0 {
            return Err(Error::config("schedule", "no training steps"));
        }
        Ok(())
    }
}

/// Chart index for `step`: a fresh seeded permutation per pass over the data.
pub fn chart_for_step(seed: u64, step: usize, n: usize) -> usize {
    let epoch = step / n;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(chart_seed(seed ^ 0x5eed_0f_0cc5, epoch as u64)));
    order[step % n]
}

/// Stateful two-stage trainer over one chart kind.
pub struct Trainer<'a> {
    data: &'a Dataset,
    charts: Vec<usize>,
    pub model: ChartModel,
    pub schedule: TrainSchedule,
    pub weights: LossWeights,
    adam: Adam,
    step: usize,
    /// First stage-2 step, once stage 1 has ended.
    stage1_end: Option<usize>,
    pub history: Vec<HistoryRow>,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, kind: ChartKind, config: ModelConfig, schedule: TrainSchedule, weights: LossWeights) -> Result<Self> {
        schedule.validate()?;
        weights.validate()?;
        let charts = charts_of(data, kind)?;
        let mut model = ChartModel::new(kind, config, schedule.seed)?;
        for p in BRANCH_PREFIXES {
            model.store.set_trainable_prefix(p, false);
        }
        let mut t = Trainer {
            data,
            charts,
            model,
            adam: Adam::new(schedule.optimizer),
            schedule,
            weights,
            step: 0,
            stage1_end: None,
            history: Vec::new(),
        };
        if t.schedule.stage1_steps == 0 {
            t.release_branches();
        }
        Ok(t)
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn stage(&self) -> u8 {
        if self.stage1_end.is_some() {
            2
        } else {
            1
        }
    }

    pub fn stage1_end(&self) -> Option<usize> {
        self.stage1_end
    }

    pub fn is_done(&self) -> bool {
        matches!(self.stage1_end, Some(s) if self.step >= s + self.schedule.stage2_steps)
    }

    fn release_branches(&mut self) {
        self.stage1_end = Some(self.step);
        for p in BRANCH_PREFIXES {
            self.model.store.set_trainable_prefix(p, true);
        }
    }

    /// Runs one optimization step. On a non-finite loss or gradient the update
    /// is skipped and a numeric error returned; parameters stay at their last
    /// good values.
    pub fn step(&mut self) -> Result<HistoryRow> {
        if self.is_done() {
            return Err(Error::Input("training already finished".into()));
        }
        let stage = self.stage();
        let i = self.charts[chart_for_step(self.schedule.seed, self.step, self.charts.len())];
        let ann = &self.data.annotations[i];
        let image = self.data.image(i)?;
        let mut rng = ChaCha8Rng::seed_from_u64(chart_seed(self.schedule.seed, self.step as u64));
        let kind = self.model.kind;
        let mut g = Graph::new();
        let parts = self.model.losses(&mut g, &image, ann, &mut rng, stage == 2)?;
        let total = if stage == 2 {
            assemble_loss(&mut g, kind, parts.det.total, parts.text, parts.om, parts.ang, &self.weights)?
        } else {
            parts.det.total
        };
        let value = |v: Option<Var>| v.map(|v| g.scalar(v));
        let row = HistoryRow {
            step: self.step,
            stage,
            l_det: g.scalar(parts.det.total),
            l_text: value(parts.text),
            l_om: value(parts.om),
            l_ang: value(parts.ang),
            total: g.scalar(total),
        };
        if !row.total.is_finite() {
            return Err(Error::Numeric { op: "training loss" });
        }
        g.backward(total)?;
        let grads = g.param_grads();
        if grads.iter().any(|(_, gr)| gr.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric { op: "training gradient" });
        }
        drop(g);
        self.adam.step(&mut self.model.store, &grads);
        self.step += 1;
        self.history.push(row.clone());
        if stage == 1 {
            let det: Vec<f64> = self.history.iter().map(|r| r.l_det).collect();
            if self.step >= self.schedule.stage1_steps || self.schedule.plateau.is_plateau(&det) {
                self.release_branches();
            }
        }
        Ok(row)
    }

    /// Steps until finished, calling `progress` after each step.
    pub fn run(&mut self, mut progress: impl FnMut(&HistoryRow)) -> Result<()> {
        while !self.is_done() {
            let row = self.step()?;
            progress(&row);
        }
        Ok(())
    }

    /// Saves parameters, optimizer moments, position and history.
    pub fn save_state(&self, path: &Path) -> Result<()> {
        let mut arrays = NamedArrays::new();
        for (k, t) in store_arrays(&self.model.store) {
            arrays.insert(format!("param/{k}"), t);
        }
        for (k, m) in &self.adam.m {
            arrays.insert(format!("adam.m/{k}"), Tensor::vector(m.clone()));
        }
        for (k, v) in &self.adam.v {
            arrays.insert(format!("adam.v/{k}"), Tensor::vector(v.clone()));
        }
        let meta = json!({
            "model": "trainer",
            "chart_model": self.model.meta(),
            "schedule": self.schedule,
            "weights": self.weights,
            "step": self.step,
            "adam_step": self.adam.step,
            "stage1_end": self.stage1_end,
            "history": self.history,
        });
        write_arrays(path, &arrays, Dtype::F64, meta)
    }

    pub fn load_state(path: &Path, data: &'a Dataset) -> Result<Self> {
        let (header, arrays) = read_arrays(path)?;
        let meta = header.meta;
        if meta["model"] != "trainer" {
            return Err(Error::Format(format!("{}: not a trainer state", path.display())));
        }
        let kind: ChartKind = serde_json::from_value(meta["chart_model"]["kind"].clone())?;
        let config: ModelConfig = serde_json::from_value(meta["chart_model"]["config"].clone())?;
        let schedule: TrainSchedule = serde_json::from_value(meta["schedule"].clone())?;
        let weights: LossWeights = serde_json::from_value(meta["weights"].clone())?;
        let mut t = Trainer::new(data, kind, config, schedule, weights)?;
        let mut params = NamedArrays::new();
        for (k, v) in arrays {
            if let Some(n) = k.strip_prefix("param/") {
                params.insert(n.to_string(), v);
            } else if let Some(n) = k.strip_prefix("adam.m/") {
                t.adam.m.insert(n.to_string(), v.data);
            } else if let Some(n) = k.strip_prefix("adam.v/") {
                t.adam.v.insert(n.to_string(), v.data);
            }
        }
        t.model.store = store_from_arrays(params, &t.model.store, path)?;
        t.step = serde_json::from_value(meta["step"].clone())?;
        t.adam.step = serde_json::from_value(meta["adam_step"].clone())?;
        t.history = serde_json::from_value(meta["history"].clone())?;
        let end: Option<usize> = serde_json::from_value(meta["stage1_end"].clone())?;
        for p in BRANCH_PREFIXES {
            t.model.store.set_trainable_prefix(p, end.is_some());
        }
        t.stage1_end = end;
        Ok(t)
    }
}

fn charts_of(data: &Dataset, kind: ChartKind) -> Result<Vec<usize>> {
    let charts: Vec<usize> = (0..data.len()).filter(|&i| data.annotations[i].kind == kind).collect();
    if charts.is_empty() {
        return Err(Error::Input(format!("{}: no {} charts", data.dir.display(), kind.as_str())));
    }
    Ok(charts)
}

/// Files written by [`train_chart_model`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
    pub history: Vec<HistoryRow>,
    pub stage1_end: Option<usize>,
}

/// History file written next to a model checkpoint: `bar.ckpt` gives
/// `bar.history.csv`.
pub fn history_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("history.csv")
}

/// Periodic trainer snapshots for resuming an interrupted run.
#[derive(Debug, Clone)]
pub struct StateOptions {
    pub path: PathBuf,
    /// Steps between snapshots; 0 writes only the final one.
    pub every: usize,
    /// Continue from `path` when it exists.
    pub resume: bool,
}

/// Trainer snapshot written next to a model checkpoint.
pub fn state_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("state")
}

/// Trains a chart model to completion and writes the checkpoint and loss
/// history. On divergence the last good parameters are still written before
/// the error is returned.
#[allow(clippy::too_many_arguments)]
pub fn train_chart_model(
    data: &Dataset,
    kind: ChartKind,
    config: ModelConfig,
    schedule: TrainSchedule,
    weights: LossWeights,
    out: &Path,
    state: Option<&StateOptions>,
    mut progress: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    let mut t = match state {
        Some(s) if s.resume && s.path.exists() => {
            let t = Trainer::load_state(&s.path, data)?;
            if t.model.kind != kind || t.model.config != config || t.schedule != schedule || t.weights != weights {
                return Err(Error::Input(format!("{}: saved run has a different configuration", s.path.display())));
            }
            t
        }
        _ => Trainer::new(data, kind, config, schedule, weights)?,
    };
    let mut result = Ok(());
    while !t.is_done() {
        match t.step() {
            Ok(row) => progress(&row),
            Err(e) => {
                result = Err(e);
                break;
            }
        }
        if let Some(s) = state {
            if s.every > 0 && t.step_index() % s.every == 0 {
                t.save_state(&s.path)?;
            }
        }
    }
    if let Some(s) = state {
        t.save_state(&s.path)?;
    }
    let hp = history_path(out);
    t.model.save(out)?;
    write_history(&hp, &t.history)?;
    result?;
    Ok(TrainOutcome {
        checkpoint: out.to_path_buf(),
        history_path: hp,
        stage1_end: t.stage1_end,
        history: t.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assembled_loss_matches_hand_sum() {
        let mut g = Graph::new();
        let c = |g: &mut Graph, v: f64| g.input(Tensor::scalar(v)).unwrap();
        let (d, t, o, a) = (c(&mut g, 1.5), c(&mut g, 2.0), c(&mut g, 0.25), c(&mut g, 3.0));
        let w = LossWeights::default();
        let pie = assemble_loss(&mut g, ChartKind::Pie, d, Some(t), Some(o), Some(a), &w).unwrap();
        assert_eq!(g.scalar(pie), 1.5 + 0.2 + 0.25 + 3.0);
        let bar = assemble_loss(&mut g, ChartKind::Bar, d, Some(t), Some(o), None, &LossWeights::ZERO).unwrap();
        assert_eq!(g.scalar(bar), 1.5);
        assert!(assemble_loss(&mut g, ChartKind::Pie, d, Some(t), Some(o), None, &w).is_err());
        assert!(assemble_loss(&mut g, ChartKind::Bar, d, None, Some(o), None, &w).is_err());
        assert_eq!(assemble_value(ChartKind::Pie, 1.5, 2.0, 0.25, Some(3.0), &w), g.scalar(pie));
    }

    #[test]
    fn chart_order_is_a_permutation_per_epoch() {
        let n = 17;
        let mut seen: Vec<usize> = (0..n).map(|s| chart_for_step(3, s, n)).collect();
        seen.sort();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let second: Vec<usize> = (n..2 * n).map(|s| chart_for_step(3, s, n)).collect();
        assert_ne!(second, (0..n).map(|s| chart_for_step(3, s, n)).collect::<Vec<_>>());
    }

    #[test]
    fn negative_weights_rejected() {
        let w = LossWeights {
            lambda_om: -1.0,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }
}
