//! The Hopular architecture: embedding layer, Hopular blocks (sample-sample
//! module H_s followed by feature-feature module H_f, both residual) and the
//! summarization layer.
//!
//! Row layout: a state batch is `[B, d·e]` with attribute `j` in columns
//! `j·e .. (j+1)·e`, and a memory is `[n, d·e]` holding one embedded training
//! sample per row.

mod checkpoint;
mod layers;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use params::{
    BlockParams, EmbeddingParams, FeatureHead, OutputMap, Params, SampleHead, ValueMap,
    TYPE_CATEGORICAL, TYPE_CONTINUOUS, TYPE_TARGET,
};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EncodedRow, TableSchema};
use crate::tensor::{NodeId, Tape, Tensor, TensorError};
use layers::{Dims, SelfRows};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    /// After the embedding sum.
    pub input: f64,
    /// On each module output, before the residual add.
    pub hidden: f64,
    /// Before the summarization maps.
    pub output: f64,
}

impl Dropout {
    pub const NONE: Dropout = Dropout {
        input: 0.0,
        hidden: 0.0,
        output: 0.0,
    };
}

/// Treatment of the query's own row in the training-set memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfColumn {
    /// The stored copy carries the query's exact mask pattern.
    MaskPattern,
    /// The stored copy is left out of the query's attention.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `e`
    pub embedding_dim: usize,
    /// `L`
    pub blocks: usize,
    /// `M`, Hopfield networks per module.
    pub heads: usize,
    /// Multiplies the base inverse temperature `1/√h`.
    pub beta_scale: f64,
    pub dropout: Dropout,
    /// Stop gradients at the memory embeddings.
    pub detach_memory: bool,
    pub self_column: SelfColumn,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            blocks: 4,
            heads: 8,
            beta_scale: 1.0,
            dropout: Dropout {
                input: 0.1,
                hidden: 0.1,
                output: 0.01,
            },
            detach_memory: false,
            self_column: SelfColumn::MaskPattern,
        }
    }
}

impl ModelConfig {
    /// Validates the configuration against `d` attributes and returns the
    /// head dimension `h = d·e/M`.
    pub fn head_dim(&self, d: usize) -> Result<usize, ModelError> {
        if self.embedding_dim == 0 || self.heads == 0 {
            return Err(ModelError::Config(
                "embedding size and number of heads must be at least 1".into(),
            ));
        }
        let de = d * self.embedding_dim;
        if !de.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "d·e = {de} is not divisible by M = {}",
                self.heads
            )));
        }
        if !(self.beta_scale > 0.0 && self.beta_scale.is_finite()) {
            return Err(ModelError::Config(format!(
                "beta_scale must be positive, got {}",
                self.beta_scale
            )));
        }
        let p = self.dropout;
        for (name, v) in [
            ("input", p.input),
            ("hidden", p.hidden),
            ("output", p.output),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::Config(format!(
                    "{name} dropout {v} outside [0, 1]"
                )));
            }
        }
        Ok(de / self.heads)
    }
}

/// A model input: encoded attribute values plus per-attribute mask flags.
/// Masked attributes are embedded with their mask token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub values: EncodedRow,
    pub masked: Vec<bool>,
}

impl MaskedSample {
    /// Inference input: only the target is masked.
    pub fn inference(schema: &TableSchema, values: EncodedRow) -> Self {
        let masked = (0..schema.len()).map(|j| j == schema.target()).collect();
        Self { values, masked }
    }
}

/// Which memory [`HopularModel::build_memory`] produces.
#[derive(Debug, Clone, Copy)]
pub enum MemoryMode<'a> {
    /// Every training sample with its target masked.
    Eval,
    /// As `Eval`, except that row `index` is the embedding of `query`, the
    /// masked version of training sample `index` currently being predicted.
    Train {
        index: usize,
        query: &'a MaskedSample,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopularModel {
    schema: TableSchema,
    config: ModelConfig,
    params: Params<Tensor>,
}

impl HopularModel {
    pub fn new(schema: TableSchema, config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let h = config.head_dim(schema.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(
            &schema,
            config.embedding_dim,
            config.blocks,
            config.heads,
            h,
            &mut rng,
        );
        Ok(Self {
            schema,
            config,
            params,
        })
    }

    /// Assembles a model from existing parameters after checking every shape.
    pub fn from_parts(
        schema: TableSchema,
        config: ModelConfig,
        params: Params<Tensor>,
    ) -> Result<Self, ModelError> {
        let h = config.head_dim(schema.len())?;
        let reference = Params::init(
            &schema,
            config.embedding_dim,
            config.blocks,
            config.heads,
            h,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        let (want, got) = (reference.iter(), params.iter());
        if want.len() != got.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, got {}",
                want.len(),
                got.len()
            )));
        }
        for ((name, w), g) in reference.names().iter().zip(&want).zip(&got) {
            if w.shape() != g.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    g.shape(),
                    w.shape()
                )));
            }
            if !g.is_finite() {
                return Err(ModelError::Config(format!(
                    "parameter {name} is not finite"
                )));
            }
        }
        Ok(Self {
            schema,
            config,
            params,
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<Tensor> {
        &mut self.params
    }

    pub fn head_dim(&self) -> usize {
        self.schema.len() * self.config.embedding_dim / self.config.heads
    }

    /// `beta_scale / √h`
    pub fn beta_eff(&self) -> f64 {
        self.config.beta_scale / (self.head_dim() as f64).sqrt()
    }

    fn dims(&self) -> Dims {
        Dims {
            d: self.schema.len(),
            e: self.config.embedding_dim,
            beta: self.beta_eff(),
        }
    }

    /// Registers every parameter on `tape`, as gradient leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Params<NodeId> {
        self.params.map(|_, t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    /// Embeds samples to `[B, d·e]`.
    pub fn embed_on_tape(
        &self,
        tape: &mut Tape,
        p: &Params<NodeId>,
        samples: &[MaskedSample],
    ) -> Result<NodeId, ModelError> {
        layers::embed(tape, &self.schema, &p.embedding, samples)
    }

    /// Embeds the training rows with their targets masked, giving `[n, d·e]`.
    pub fn memory_on_tape(
        &self,
        tape: &mut Tape,
        p: &Params<NodeId>,
        train: &[EncodedRow],
    ) -> Result<NodeId, ModelError> {
        if train.is_empty() {
            return Err(ModelError::Contract(
                "memory needs at least one training sample".into(),
            ));
        }
        let stored: Vec<MaskedSample> = train
            .iter()
            .map(|r| MaskedSample::inference(&self.schema, r.clone()))
            .collect();
        let x = self.embed_on_tape(tape, p, &stored)?;
        if self.config.detach_memory {
            let v = tape.value(x).clone();
            return Ok(tape.constant(v));
        }
        Ok(x)
    }

    /// Full forward pass of a query batch against `memory`. With `self_index`
    /// (training), query `b` is training sample `self_index[b]` and its stored
    /// row is handled per [`ModelConfig::self_column`]. Dropout is active iff
    /// `rng` is given.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        p: &Params<NodeId>,
        queries: &[MaskedSample],
        memory: NodeId,
        self_index: Option<&[usize]>,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Vec<NodeId>, ModelError> {
        let dims = self.dims();
        let de = dims.d * dims.e;
        if tape.value(memory).rank() != 2 || tape.value(memory).last_dim() != de {
            return Err(ModelError::Contract(format!(
                "memory shape {:?} does not have {de} columns",
                tape.value(memory).shape()
            )));
        }
        let y = self.embed_on_tape(tape, p, queries)?;
        let self_rows = self_index.map(|index| match self.config.self_column {
            SelfColumn::MaskPattern => SelfRows::Pattern { index, embedded: y },
            SelfColumn::Drop => SelfRows::Drop { index },
        });
        let mut xi = layers::dropout(
            tape,
            y,
            self.config.dropout.input,
            layers::reborrow(&mut rng),
        )?;
        for b in &p.blocks {
            xi = layers::block(
                tape,
                b,
                dims,
                self.config.dropout.hidden,
                xi,
                memory,
                y,
                self_rows,
                layers::reborrow(&mut rng),
            )?;
        }
        layers::summarize(tape, &p.summary, dims, xi, self.config.dropout.output, rng)
    }

    /// Memory as a plain tensor `[n, d·e]`; row `i` is column `x_i` of `X`.
    pub fn build_memory(
        &self,
        train: &[EncodedRow],
        mode: MemoryMode<'_>,
    ) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let x = self.memory_on_tape(&mut tape, &p, train)?;
        let mut x = tape.value(x).clone();
        if let MemoryMode::Train { index, query } = mode {
            if index >= train.len() {
                return Err(ModelError::Contract(format!(
                    "sample index {index} out of range for {} training samples",
                    train.len()
                )));
            }
            let q = self.embed_on_tape(&mut tape, &p, std::slice::from_ref(query))?;
            let de = x.last_dim();
            x.data_mut()[index * de..(index + 1) * de].copy_from_slice(tape.value(q).data());
        }
        Ok(x)
    }

    /// Embedding of one sample as a vector of length `d·e`.
    pub fn embed_sample(&self, sample: &MaskedSample) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let x = self.embed_on_tape(&mut tape, &p, std::slice::from_ref(sample))?;
        Ok(tape.value(x).reshape(&[tape.value(x).len()])?)
    }

    /// Evaluation-mode predictions against an explicit memory `[n, d·e]`.
    pub fn forward_with_memory(
        &self,
        queries: &[MaskedSample],
        memory: &Tensor,
    ) -> Result<Vec<Tensor>, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let m = tape.constant(memory.clone());
        let outs = self.forward_on_tape(&mut tape, &p, queries, m, None, None)?;
        Ok(outs.into_iter().map(|o| tape.value(o).clone()).collect())
    }

    /// Evaluation-mode predictions with the memory built from `train`.
    pub fn predict(
        &self,
        queries: &[MaskedSample],
        train: &[EncodedRow],
    ) -> Result<Vec<Tensor>, ModelError> {
        let memory = self.build_memory(train, MemoryMode::Eval)?;
        self.forward_with_memory(queries, &memory)
    }

    /// Summarization applied directly to the embedding, bypassing all blocks.
    pub fn summarize_embedding(&self, queries: &[MaskedSample]) -> Result<Vec<Tensor>, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let y = self.embed_on_tape(&mut tape, &p, queries)?;
        let outs = layers::summarize(&mut tape, &p.summary, self.dims(), y, 0.0, None)?;
        Ok(outs.into_iter().map(|o| tape.value(o).clone()).collect())
    }
}

fn as_batch(t: &Tensor) -> Result<(Tensor, bool), ModelError> {
    match t.rank() {
        1 => Ok((t.reshape(&[1, t.len()])?, true)),
        2 => Ok((t.clone(), false)),
        _ => Err(ModelError::Contract(format!(
            "expected a vector or matrix, got shape {:?}",
            t.shape()
        ))),
    }
}

fn unbatch(t: &Tensor, vector: bool) -> Result<Tensor, ModelError> {
    Ok(if vector {
        t.reshape(&[t.len()])?
    } else {
        t.clone()
    })
}

/// `W_S W_X X softmax(β Xᵀ W_Xᵀ W_ξ ξ)` for `xi` of length `d·e` (or a batch
/// `[B, d·e]`) against `memory` `[n, d·e]`.
pub fn hs_head_forward(
    head: &SampleHead<Tensor>,
    beta: f64,
    xi: &Tensor,
    memory: &Tensor,
) -> Result<Tensor, ModelError> {
    hs_module_forward(std::slice::from_ref(head), None, beta, xi, memory)
}

/// H_s module: `W_G · concat(heads)`. `combine = None` concatenates only,
/// which for a single head is the head itself.
pub fn hs_module_forward(
    heads: &[SampleHead<Tensor>],
    combine: Option<&Tensor>,
    beta: f64,
    xi: &Tensor,
    memory: &Tensor,
) -> Result<Tensor, ModelError> {
    let (xi, vector) = as_batch(xi)?;
    let mut tape = Tape::new();
    let x = tape.constant(xi);
    let m = tape.constant(memory.clone());
    let mut outs = Vec::with_capacity(heads.len());
    for h in heads {
        let h = SampleHead {
            w_xi: tape.constant(h.w_xi.clone()),
            w_x: tape.constant(h.w_x.clone()),
            w_s: tape.constant(h.w_s.clone()),
        };
        outs.push(layers::sample_head(&mut tape, &h, beta, x, m, None)?);
    }
    let mut out = tape.concat_cols(&outs)?;
    if let Some(g) = combine {
        let g = tape.constant(g.clone());
        out = tape.matmul_nt(out, g)?;
    }
    unbatch(tape.value(out), vector)
}

/// H_f module for one sample in row form: `xi` and `y` are `[d, e]` (row `j`
/// is attribute `j`, i.e. column `j` of Ξ and Y). Softmax runs over the `d`
/// rows of `y` for every row of `xi`. `combine = None` concatenates only.
pub fn hf_module_forward(
    heads: &[FeatureHead<Tensor>],
    combine: Option<&Tensor>,
    beta: f64,
    xi: &Tensor,
    y: &Tensor,
) -> Result<Tensor, ModelError> {
    if xi.rank() != 2 || xi.shape() != y.shape() {
        return Err(ModelError::Tensor(TensorError::Shape {
            op: "hf_module_forward",
            lhs: xi.shape().to_vec(),
            rhs: y.shape().to_vec(),
        }));
    }
    let (d, e) = (xi.shape()[0], xi.shape()[1]);
    let dims = Dims { d, e, beta };
    let mut tape = Tape::new();
    let x = tape.constant(xi.clone());
    let yy = tape.constant(y.clone());
    let mut outs = Vec::with_capacity(heads.len());
    for h in heads {
        let h = FeatureHead {
            w_xi: tape.constant(h.w_xi.clone()),
            w_y: tape.constant(h.w_y.clone()),
            w_f: tape.constant(h.w_f.clone()),
        };
        outs.push(layers::feature_head(&mut tape, &h, dims, x, yy)?);
    }
    let mut out = tape.concat_cols(&outs)?;
    if let Some(g) = combine {
        let g = tape.constant(g.clone());
        out = tape.matmul_nt(out, g)?;
    }
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests;
