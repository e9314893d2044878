use super::{compute_class_weights, ClassWeightMode, PipelineError, RunConfig, RunMetrics};
use crate::han::{gradients, prepare, predict, Model, ModelParams, PreparedGraph};
use crate::metapath::MetaPath;
use crate::taxonomy::Label;
use crate::xbhg::XbhgGraph;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f64>,
    /// Training loss before each epoch's update.
    pub loss_log: Vec<f64>,
    pub class_weights: [f64; Label::COUNT],
}

fn prepare_all(
    graphs: &[&XbhgGraph],
    paths: &[MetaPath],
) -> Result<Vec<(PreparedGraph<f64>, Label)>, PipelineError> {
    graphs
        .iter()
        .map(|g| {
            let y = g.label.ok_or_else(|| PipelineError::Unlabeled(g.graph_id.clone()))?;
            Ok((prepare(g, paths)?, y))
        })
        .collect()
}

struct Adam {
    m: ModelParams<f64>,
    v: ModelParams<f64>,
    step: i32,
}

impl Adam {
    fn new(like: &ModelParams<f64>) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParams<f64>, grads: &ModelParams<f64>, lr: f64, decay: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let g_blocks = grads.tensors();
        for (((p, m), v), g) in params
            .slices_mut()
            .into_iter()
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .zip(&g_blocks)
        {
            for i in 0..p.len() {
                let gi = g.data[i] + decay * p[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Full-batch Adam on `train_set`, seeded by `config.seed`.
pub fn train(
    config: &RunConfig,
    train_set: &[&XbhgGraph],
    paths: Vec<MetaPath>,
) -> Result<TrainOutcome, PipelineError> {
    config.validate()?;
    let first = train_set.first().ok_or(PipelineError::Empty("training"))?;
    let input_dim = first.feature_dim().unwrap_or(0);
    let prepared = prepare_all(train_set, &paths)?;
    let labels: Vec<Label> = prepared.iter().map(|(_, y)| *y).collect();
    let class_weights = match config.class_weights {
        ClassWeightMode::Balanced => compute_class_weights(&labels)?,
        ClassWeightMode::Uniform => [1.0; Label::COUNT],
    };
    let mut model = Model::init(config.hyper(input_dim), paths, config.seed)?;
    let batch: Vec<(&PreparedGraph<f64>, Label)> = prepared.iter().map(|(g, y)| (g, *y)).collect();
    let mut adam = Adam::new(&model.params);
    let mut loss_log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let step = gradients(&model, &batch, &class_weights)?;
        if !step.loss.is_finite() {
            return Err(PipelineError::Diverged {
                epoch,
                loss: step.loss,
            });
        }
        log::debug!("epoch {epoch}: loss {:.6}", step.loss);
        loss_log.push(step.loss);
        adam.update(&mut model.params, &step.grads, config.learning_rate, config.weight_decay);
        if let Some(name) = model.params.first_non_finite() {
            log::error!("parameter {name} became non-finite");
            return Err(PipelineError::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
    }
    Ok(TrainOutcome {
        model,
        loss_log,
        class_weights,
    })
}

/// Predicted label and class probabilities for each graph.
pub fn predict_all(model: &Model<f64>, graphs: &[&XbhgGraph]) -> Result<Vec<(Label, Vec<f64>)>, PipelineError> {
    graphs
        .iter()
        .map(|g| {
            let pg = model.prepare(g)?;
            let probs = model.predict_probs(&pg)?;
            Ok((predict(&probs), probs))
        })
        .collect()
}

/// Single-run metrics of `model` on a labeled test set.
pub fn evaluate(model: &Model<f64>, test_set: &[&XbhgGraph]) -> Result<RunMetrics, PipelineError> {
    if test_set.is_empty() {
        return Err(PipelineError::Empty("test"));
    }
    let truth = test_set
        .iter()
        .map(|g| g.label.ok_or_else(|| PipelineError::Unlabeled(g.graph_id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let predicted: Vec<Label> = predict_all(model, test_set)?.into_iter().map(|(l, _)| l).collect();
    Ok(RunMetrics::from_predictions(&truth, &predicted))
}
