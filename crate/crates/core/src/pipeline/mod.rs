//! Dataset splitting, training, evaluation and repeated seeded runs.

mod metrics;
mod report;
mod train;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::han::{HanError, HyperParams, Pooling};
use crate::metapath::{
    enumerate_range, label_frequencies, select_differential, FreqMode, MetaPath, MetaPathError,
    Selection, MAX_PATH_LEN, MIN_PATH_LEN,
};
use crate::taxonomy::{Label, NodeType};
use crate::xbhg::XbhgGraph;

pub use metrics::{confusion_matrix, ClassMetrics, Confusion, RunMetrics};
pub use report::{render_table, DetectionReport, MeanStd, MetricSummary, RunSummary};
pub use train::{evaluate, predict_all, train, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("graph {0} has no label")]
    Unlabeled(String),
    #[error("class {0} has no samples")]
    AbsentClass(Label),
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] HanError),
    #[error(transparent)]
    MetaPath(#[from] MetaPathError),
}

/// Model variant used for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Skip differential mining and use every enumerated meta-path.
    NoDme,
    /// Skip both attention layers and pool aligned features of meta-path instance nodes.
    NoHam,
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Ablation::None),
            "no_dme" => Ok(Ablation::NoDme),
            "no_ham" => Ok(Ablation::NoHam),
            _ => Err(format!("unknown ablation `{s}` (none|no_dme|no_ham)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightMode {
    /// `w_j = n / (C n_j)` from the training labels.
    #[default]
    Balanced,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub split_ratio: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub theta: f64,
    pub freq_mode: FreqMode,
    pub lmin: usize,
    pub lmax: usize,
    pub pooling: Pooling,
    pub ablation: Ablation,
    pub class_weights: ClassWeightMode,
    pub hidden_dim: usize,
    pub heads: usize,
    pub semantic_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split_ratio: 0.8,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 0.0,
            theta: 0.5,
            freq_mode: FreqMode::Indicator,
            lmin: MIN_PATH_LEN,
            lmax: MAX_PATH_LEN,
            pooling: Pooling::Max,
            ablation: Ablation::None,
            class_weights: ClassWeightMode::Balanced,
            hidden_dim: 64,
            heads: 4,
            semantic_dim: 64,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must lie strictly between 0 and 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !self.theta.is_finite() {
            return bad("theta must be finite");
        }
        if self.lmin < MIN_PATH_LEN || self.lmin > self.lmax {
            return bad("need 2 <= lmin <= lmax");
        }
        self.hyper(1).validate()?;
        Ok(())
    }

    /// Network hyperparameters for raw features of width `input_dim`.
    pub fn hyper(&self, input_dim: usize) -> HyperParams {
        HyperParams {
            input_dim,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            semantic_dim: self.semantic_dim,
            classes: Label::COUNT,
            pooling: self.pooling,
            hierarchical_attention: self.ablation != Ablation::NoHam,
            ..HyperParams::default()
        }
    }

    /// Seed of repeated run `run`.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

/// Index partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Stratified split: per class, `round(ratio * n_c)` samples (at least one on
/// each side) go to training. A class with a single sample goes to training.
pub fn split_dataset(labels: &[Label], ratio: f64, seed: u64) -> Result<Split, PipelineError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PipelineError::Config("split ratio must lie strictly between 0 and 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
        warnings: Vec::new(),
    };
    for class in Label::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            let msg = format!("class {class} has {} sample(s); all go to training", idx.len());
            log::warn!("{msg}");
            split.warnings.push(msg);
            split.train.extend(idx);
            continue;
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        split.train.extend_from_slice(&idx[..n_train]);
        split.test.extend_from_slice(&idx[n_train..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// `w_j = n / (C n_j)`. The sample-weighted mean of these weights is exactly 1,
/// so no further normalization is applied.
pub fn compute_class_weights(labels: &[Label]) -> Result<[f64; Label::COUNT], PipelineError> {
    let mut counts = [0usize; Label::COUNT];
    for y in labels {
        counts[y.index()] += 1;
    }
    let n = labels.len() as f64;
    let mut w = [0.0; Label::COUNT];
    for class in Label::ALL {
        let c = counts[class.index()];
        if c == 0 {
            return Err(PipelineError::AbsentClass(class));
        }
        w[class.index()] = n / (Label::COUNT as f64 * c as f64);
    }
    Ok(w)
}

pub fn labels_of(graphs: &[XbhgGraph]) -> Result<Vec<Label>, PipelineError> {
    graphs
        .iter()
        .map(|g| g.label.ok_or_else(|| PipelineError::Unlabeled(g.graph_id.clone())))
        .collect()
}

/// Differential meta-path mining on a labeled set under `config`; under the
/// `no_dme` ablation every enumerated path is returned unfiltered.
pub fn mine_paths(config: &RunConfig, graphs: &[&XbhgGraph]) -> Result<Selection, PipelineError> {
    let candidates = enumerate_range(config.lmin, config.lmax, &NodeType::ALL)?;
    let mut labeled = Vec::with_capacity(graphs.len());
    for g in graphs {
        let y = g.label.ok_or_else(|| PipelineError::Unlabeled(g.graph_id.clone()))?;
        labeled.push((*g, y));
    }
    let table = label_frequencies(labeled, &candidates, config.freq_mode)?;
    if config.ablation == Ablation::NoDme {
        return Ok(Selection {
            theta: config.theta,
            entries: table.entries,
            fallback: false,
        });
    }
    Ok(select_differential(&table, config.theta))
}

/// One complete run: split with the run seed, mine on the training part (unless
/// `fixed_paths` is given), train, then evaluate on the held-out part.
pub fn run_once(
    config: &RunConfig,
    graphs: &[XbhgGraph],
    run: usize,
    fixed_paths: Option<&[MetaPath]>,
) -> Result<(RunSummary, TrainOutcome), PipelineError> {
    config.validate()?;
    let labels = labels_of(graphs)?;
    let seed = config.run_seed(run);
    let split = split_dataset(&labels, config.split_ratio, seed)?;
    if split.test.is_empty() {
        return Err(PipelineError::Empty("test"));
    }
    let train_set: Vec<&XbhgGraph> = split.train.iter().map(|&i| &graphs[i]).collect();
    let test_set: Vec<&XbhgGraph> = split.test.iter().map(|&i| &graphs[i]).collect();
    let (paths, fallback) = match fixed_paths {
        Some(p) => (p.to_vec(), false),
        None => {
            let sel = mine_paths(config, &train_set)?;
            (sel.paths(), sel.fallback)
        }
    };
    let mut run_config = config.clone();
    run_config.seed = seed;
    let outcome = train(&run_config, &train_set, paths)?;
    let metrics = evaluate(&outcome.model, &test_set)?;
    let mut summary = RunSummary::new(run, seed, outcome.model.paths.len(), metrics);
    summary.path_fallback = fallback;
    summary.final_loss = outcome.loss_log.last().copied();
    Ok((summary, outcome))
}

/// Per-epoch losses of one run, as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub run: usize,
    pub seed: u64,
    pub losses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `k` independent runs with seeds `seed, seed + 1, ...`, aggregated into one report.
/// Failed runs are recorded and excluded from the aggregate.
pub fn repeated_runs(
    config: &RunConfig,
    graphs: &[XbhgGraph],
    k: usize,
) -> Result<(DetectionReport, Vec<RunLog>), PipelineError> {
    repeated_runs_with(config, graphs, k, None)
}

pub fn repeated_runs_with(
    config: &RunConfig,
    graphs: &[XbhgGraph],
    k: usize,
    fixed_paths: Option<&[MetaPath]>,
) -> Result<(DetectionReport, Vec<RunLog>), PipelineError> {
    if k == 0 {
        return Err(PipelineError::Config("need at least one run".into()));
    }
    config.validate()?;
    labels_of(graphs)?;
    let mut runs = Vec::with_capacity(k);
    let mut logs = Vec::with_capacity(k);
    let mut failures = BTreeMap::new();
    for r in 0..k {
        match run_once(config, graphs, r, fixed_paths) {
            Ok((summary, outcome)) => {
                logs.push(RunLog {
                    run: r,
                    seed: summary.seed,
                    losses: outcome.loss_log,
                    confusion: Some(summary.metrics.confusion.clone()),
                    error: None,
                });
                runs.push(summary);
            }
            Err(e) => {
                log::error!("run {r} failed: {e}");
                logs.push(RunLog {
                    run: r,
                    seed: config.run_seed(r),
                    losses: Vec::new(),
                    confusion: None,
                    error: Some(e.to_string()),
                });
                failures.insert(r, e.to_string());
            }
        }
    }
    Ok((DetectionReport::aggregate(config.clone(), k, runs, failures), logs))
}

/// Writes run logs as JSON lines.
/// Writes JSON lines: one `{run, seed, epoch, loss}` object per epoch, then one
/// closing object per run carrying its confusion matrix or error.
pub fn write_run_logs(path: impl AsRef<std::path::Path>, logs: &[RunLog]) -> std::io::Result<()> {
    use serde_json::json;
    let mut text = String::new();
    let mut line = |v: serde_json::Value| {
        text.push_str(&v.to_string());
        text.push('\n');
    };
    for l in logs {
        for (epoch, loss) in l.losses.iter().enumerate() {
            line(json!({"run": l.run, "seed": l.seed, "epoch": epoch + 1, "loss": loss}));
        }
        match (&l.confusion, &l.error) {
            (_, Some(e)) => line(json!({"run": l.run, "seed": l.seed, "error": e})),
            (Some(c), None) => line(json!({"run": l.run, "seed": l.seed, "confusion": c})),
            (None, None) => {}
        }
    }
    std::fs::write(path, text)
}
