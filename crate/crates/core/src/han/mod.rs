//! Meta-path based heterogeneous graph attention network.
//!
//! Per graph: type-specific linear alignment of raw features, multi-head attention
//! over meta-path neighbors (one embedding per meta-path), attention across
//! meta-paths, graph pooling, and a softmax classifier. Gradients are computed
//! analytically in [`backward`].

mod backward;
mod forward;
mod params;
mod prepare;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metapath::MetaPath;
use crate::scalar::Scalar;

pub use backward::{gradients, BatchGradients};
pub use forward::{
    align_features, classify, forward, inter_path_attention, intra_path_attention, loss, pool,
    predict, ForwardTrace, PathAttention, LOG_EPS,
};
pub use params::{ModelParams, ParamTensor};
pub use prepare::{prepare, PreparedGraph};

#[derive(Debug, Error)]
pub enum HanError {
    #[error("feature width {got} does not match the {ntype} alignment input width {want}")]
    FeatureDim {
        ntype: crate::taxonomy::NodeType,
        got: usize,
        want: usize,
    },
    #[error("graph {0} has no nodes")]
    EmptyGraph(String),
    #[error("graph {0} carries no raw features; initialize them first")]
    MissingFeatures(String),
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("prepared graph has {got} meta-paths, model expects {want}")]
    PathCount { got: usize, want: usize },
    #[error("class weight for {0} must be positive")]
    ClassWeight(usize),
    #[error("parameter {name}: {reason}")]
    Shape { name: String, reason: String },
}

/// Graph readout used before the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    #[default]
    Max,
    /// Sigmoid-gated sum over nodes (not normalized by node count).
    Attention,
}

impl Pooling {
    pub const ALL: [Pooling; 3] = [Pooling::Attention, Pooling::Mean, Pooling::Max];

    pub fn name(self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::Max => "max",
            Pooling::Attention => "att",
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pooling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            "att" | "attention" => Ok(Pooling::Attention),
            _ => Err(format!("unknown pooling `{s}` (mean|max|att)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Raw feature width (same for every node type).
    pub input_dim: usize,
    /// Common embedding width `d`; must equal `heads * head_dim`.
    pub hidden_dim: usize,
    pub heads: usize,
    /// Width of the meta-path scoring layer.
    pub semantic_dim: usize,
    pub classes: usize,
    pub pooling: Pooling,
    pub leaky_slope: f64,
    /// When false, both attention layers are skipped and aligned features of
    /// meta-path instance nodes are pooled directly.
    pub hierarchical_attention: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            input_dim: 66,
            hidden_dim: 64,
            heads: 4,
            semantic_dim: 64,
            classes: crate::taxonomy::Label::COUNT,
            pooling: Pooling::Max,
            leaky_slope: 0.2,
            hierarchical_attention: true,
        }
    }
}

impl HyperParams {
    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<(), HanError> {
        let bad = |m: String| Err(HanError::Hyper(m));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.semantic_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return bad(format!(
                "hidden_dim {} is not a multiple of heads {}",
                self.hidden_dim, self.heads
            ));
        }
        if self.classes < 2 {
            return bad("need at least two classes".into());
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return bad("leaky slope must be a nonnegative number".into());
        }
        Ok(())
    }
}

/// Hyperparameters, meta-paths and weights: everything needed to score a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub hyper: HyperParams,
    pub paths: Vec<MetaPath>,
    pub params: ModelParams<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh model with seeded Glorot-uniform weights and zero biases.
    pub fn init(hyper: HyperParams, paths: Vec<MetaPath>, seed: u64) -> Result<Self, HanError> {
        hyper.validate()?;
        let params = ModelParams::init(&hyper, paths.len(), seed);
        Ok(Self {
            hyper,
            paths,
            params,
        })
    }

    pub fn prepare(&self, graph: &crate::xbhg::XbhgGraph) -> Result<PreparedGraph<T>, HanError> {
        prepare(graph, &self.paths)
    }

    pub fn forward(&self, graph: &PreparedGraph<T>) -> Result<ForwardTrace<T>, HanError> {
        forward(self, graph)
    }

    pub fn predict_probs(&self, graph: &PreparedGraph<T>) -> Result<Vec<T>, HanError> {
        Ok(self.forward(graph)?.probs)
    }
}
