use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{Dropout, ModelConfig, SelfColumn};
use crate::training::{LambConfig, MaskConfig, TrainConfig};

/// Every hyperparameter of a run. Defaults follow the first row of the
/// small/medium grid: L = 4, M = 8, mask 0.025, replace 0.175, weight decay
/// 0.1, dropout 0.1/0.1/0.01, learning rate 0.001.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub blocks: usize,
    pub heads: usize,
    pub embedding_dim: usize,
    pub beta_scale: f64,
    pub mask_prob: f64,
    pub replace_prob: f64,
    pub weight_decay: f64,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    pub dropout_output: f64,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub gamma_start: f64,
    pub ema_alpha: f64,
    pub seed: u64,
    /// Train/validation/test fractions when no split file is given.
    pub split: [f64; 3],
    pub detach_memory: bool,
    pub self_column: SelfColumn,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            heads: 8,
            embedding_dim: 32,
            beta_scale: 1.0,
            mask_prob: 0.025,
            replace_prob: 0.175,
            weight_decay: 0.1,
            dropout_input: 0.1,
            dropout_hidden: 0.1,
            dropout_output: 0.01,
            lr: 0.001,
            epochs: 10_000,
            patience: 500,
            gamma_start: 1.0,
            ema_alpha: 0.005,
            seed: 0,
            split: [0.7, 0.15, 0.15],
            detach_memory: false,
            self_column: SelfColumn::MaskPattern,
        }
    }
}

/// The (L, M) rows of the small/medium grid.
pub const GRID_SHAPES: [(usize, usize); 4] = [(4, 8), (8, 8), (4, 16), (8, 16)];
/// β-scaling factors searched with every row.
pub const GRID_BETA_SCALES: [f64; 3] = [1.0, 100.0, 1000.0];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain config serializes")
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            embedding_dim: self.embedding_dim,
            blocks: self.blocks,
            heads: self.heads,
            beta_scale: self.beta_scale,
            dropout: Dropout {
                input: self.dropout_input,
                hidden: self.dropout_hidden,
                output: self.dropout_output,
            },
            detach_memory: self.detach_memory,
            self_column: self.self_column,
        }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            optimizer: LambConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..LambConfig::default()
            },
            ema_alpha: self.ema_alpha,
            masking: MaskConfig {
                mask_prob: self.mask_prob,
                replace_prob: self.replace_prob,
            },
            gamma_start: self.gamma_start,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// `self` with every (L, M, β-scale) combination of the grid substituted.
    pub fn grid(&self) -> Vec<RunConfig> {
        let mut out = Vec::with_capacity(GRID_SHAPES.len() * GRID_BETA_SCALES.len());
        for &(blocks, heads) in &GRID_SHAPES {
            for &beta_scale in &GRID_BETA_SCALES {
                out.push(RunConfig {
                    blocks,
                    heads,
                    beta_scale,
                    ..self.clone()
                });
            }
        }
        out
    }
}
