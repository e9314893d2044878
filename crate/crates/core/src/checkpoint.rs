//! Versioned JSON checkpoints of a trained model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::han::{HanError, HyperParams, Model, ModelParams};
use crate::metapath::MetaPath;
use crate::pipeline::RunConfig;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("invalid checkpoint: {0}")]
    Invalid(#[from] HanError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyperparams: HyperParams,
    pub selected_paths: Vec<MetaPath>,
    pub params: BTreeMap<String, ParamBlock>,
    /// Configuration the model was trained with, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<RunConfig>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Model<T>, run_config: Option<RunConfig>) -> Self {
        let params = model
            .params
            .tensors()
            .into_iter()
            .map(|t| {
                let block = ParamBlock {
                    shape: t.shape,
                    data: t.data.iter().map(|v| v.as_f64()).collect(),
                };
                (t.name, block)
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            hyperparams: model.hyper.clone(),
            selected_paths: model.paths.clone(),
            params,
            run_config,
        }
    }

    /// Rebuilds the model, checking every block's name, shape and finiteness.
    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>, CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        let n = self.selected_paths.len();
        let params = ModelParams::from_blocks(&self.hyperparams, n, |name| {
            self.params.get(name).map(|b| (b.shape.clone(), b.data.clone()))
        })?;
        let known = params.tensors().len();
        if known != self.params.len() {
            let expected: Vec<String> = params.tensors().into_iter().map(|t| t.name).collect();
            let extra = self.params.keys().find(|k| !expected.contains(k)).cloned().unwrap_or_default();
            return Err(HanError::Shape {
                name: extra,
                reason: "unexpected parameter block".into(),
            }
            .into());
        }
        Ok(Model {
            hyper: self.hyperparams.clone(),
            paths: self.selected_paths.clone(),
            params,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ck: Self = serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ck.version));
        }
        ck.to_model::<f64>()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
