use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HopularModel, ModelConfig, ModelError, Params};
use crate::data::{Normalizer, SplitIndices, TableSchema};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "hopular-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON container for a trained model.
///
/// Layout (version 1): `format`, `version`, `schema_fingerprint` (SHA-256 of
/// the canonical schema text), `schema`, `model` (architecture
/// hyperparameters), `params` (every tensor as `{shape, data}` in canonical
/// order), `vocabularies` (token lists of categorical attributes),
/// `normalizer`, `split` and `hyperparameters` (the full run configuration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub schema_fingerprint: String,
    pub schema: TableSchema,
    pub model: ModelConfig,
    pub params: Params<Tensor>,
    pub vocabularies: Vec<Vec<String>>,
    pub normalizer: Option<Normalizer>,
    pub split: Option<SplitIndices>,
    pub hyperparameters: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: &HopularModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            schema_fingerprint: model.schema().fingerprint(),
            schema: model.schema().clone(),
            model: *model.config(),
            params: model.params().clone(),
            vocabularies: Vec::new(),
            normalizer: None,
            split: None,
            hyperparameters: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string(self).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "not a checkpoint (format {:?})",
                ck.format
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        if ck.schema.fingerprint() != ck.schema_fingerprint {
            return Err(ModelError::Checkpoint("schema fingerprint mismatch".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| ModelError::Checkpoint(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn model(&self) -> Result<HopularModel, ModelError> {
        HopularModel::from_parts(self.schema.clone(), self.model, self.params.clone())
    }
}
