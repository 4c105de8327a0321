use super::{chart_for_step, TrainSchedule};
use crate::autodiff::{Adam, AdamConfig, Graph};
use crate::corpus::spec::chart_seed;
use crate::corpus::{ChartKind, Dataset};
use crate::detect::{classifier_forward, downsample, ClassifierConfig};
use crate::error::{Error, Result};
use crate::model::TypeModel;

#[derive(Debug, Clone)]
pub struct TypeTrainOutcome {
    pub model: TypeModel,
    /// Cross-entropy per step.
    pub losses: Vec<f64>,
}

/// Trains the bar/pie classifier with plain cross-entropy, one chart per step.
pub fn train_type_model(data: &Dataset, config: ClassifierConfig, schedule: &TrainSchedule, mut progress: impl FnMut(usize, f64)) -> Result<TypeTrainOutcome> {
    schedule.validate()?;
    let kinds: Vec<ChartKind> = data.annotations.iter().map(|a| a.kind).collect();
    if !(kinds.contains(&ChartKind::Bar) && kinds.contains(&ChartKind::Pie)) {
        return Err(Error::Input(format!("{}: type training needs both bar and pie charts", data.dir.display())));
    }
    let mut model = TypeModel::new(config, schedule.seed)?;
    let mut adam = Adam::new(AdamConfig {
        learning_rate: schedule.classifier_learning_rate,
        ..schedule.optimizer
    });
    let mut losses = Vec::with_capacity(schedule.classifier_steps);
    for step in 0..schedule.classifier_steps {
        let i = chart_for_step(chart_seed(schedule.seed, 0x7e), step, data.len());
        let image = data.image(i)?;
        let mut g = Graph::new();
        let x = g.constant(downsample(&image, model.config.input_size))?;
        let logits = classifier_forward(&mut g, &model.store, &model.config, x)?;
        let target = usize::from(kinds[i] == ChartKind::Pie);
        let loss = g.cross_entropy(logits, &[target], &[1.0])?;
        let l = g.scalar(loss);
        if !l.is_finite() {
            return Err(Error::Numeric { op: "classifier loss" });
        }
        g.backward(loss)?;
        let grads = g.param_grads();
        drop(g);
        adam.step(&mut model.store, &grads);
        losses.push(l);
        progress(step, l);
    }
    Ok(TypeTrainOutcome { model, losses })
}
