//! Tape-level building blocks. Everything works in row form on batches: a
//! state batch is `[B, d·e]` and a memory is `[n, d·e]`, i.e. the transpose of
//! the column-stacked matrices used in the math. Attribute `j` owns columns
//! `j·e .. (j+1)·e`.

use rand::{Rng, RngCore};

use super::params::{
    BlockParams, EmbeddingParams, FeatureHead, OutputMap, SampleHead, ValueMap, TYPE_CATEGORICAL,
    TYPE_CONTINUOUS, TYPE_TARGET,
};
use super::{MaskedSample, ModelError};
use crate::data::{Encoded, TableSchema};
use crate::tensor::{NodeId, Tape, Tensor};

/// Score given to a dropped memory column. Finite so softmax accepts it, and
/// low enough that its weight underflows to exactly zero.
const DROPPED_SCORE: f64 = -1e30;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dims {
    pub d: usize,
    pub e: usize,
    pub beta: f64,
}

/// How the memory row of the query's own training sample is treated.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SelfRows<'a> {
    /// Row `index[b]` is replaced, for query `b`, by the query's own embedding.
    Pattern {
        index: &'a [usize],
        embedded: NodeId,
    },
    /// Row `index[b]` is excluded from query `b`'s softmax.
    Drop { index: &'a [usize] },
}

impl SelfRows<'_> {
    fn index(&self) -> &[usize] {
        match self {
            SelfRows::Pattern { index, .. } | SelfRows::Drop { index } => index,
        }
    }
}

/// Embeds a batch of masked samples to `[B, d·e]`.
pub(crate) fn embed(
    tape: &mut Tape,
    schema: &TableSchema,
    p: &EmbeddingParams<NodeId>,
    samples: &[MaskedSample],
) -> Result<NodeId, ModelError> {
    let b = samples.len();
    if b == 0 {
        return Err(ModelError::Contract("cannot embed an empty batch".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.values.len() != schema.len() || s.masked.len() != schema.len() {
            return Err(ModelError::Encoding(format!(
                "sample {i} has {} values and {} mask flags, schema has {} attributes",
                s.values.len(),
                s.masked.len(),
                schema.len()
            )));
        }
    }
    let mut parts = Vec::with_capacity(schema.len());
    for (j, attr) in schema.attributes().iter().enumerate() {
        let value = match (&p.values[j], attr.cardinality()) {
            (ValueMap::Categorical { table }, Some(card)) => {
                let mut idx = Vec::with_capacity(b);
                for (i, s) in samples.iter().enumerate() {
                    idx.push(match s.values[j].value {
                        _ if s.masked[j] => card + 1,
                        Encoded::Category(k) if k <= card => k,
                        other => {
                            return Err(ModelError::Encoding(format!(
                                "sample {i}, attribute {}: {other:?} is not a category of cardinality {card}",
                                attr.name
                            )))
                        }
                    });
                }
                tape.gather_rows(*table, &idx)?
            }
            (ValueMap::Continuous { scale, bias, mask }, None) => {
                let mut x = Vec::with_capacity(b);
                let mut m = Vec::with_capacity(b);
                for (i, s) in samples.iter().enumerate() {
                    match s.values[j].value {
                        Encoded::Continuous(v) if v.is_finite() => x.push(v),
                        other => {
                            return Err(ModelError::Encoding(format!(
                            "sample {i}, attribute {}: {other:?} is not a finite continuous value",
                            attr.name
                        )))
                        }
                    }
                    m.push(if s.masked[j] { 1.0 } else { 0.0 });
                }
                let keep = Tensor::vector(m.iter().map(|v| 1.0 - v).collect());
                let x = tape.constant(Tensor::new(&[b, 1], x)?);
                let lin = tape.matmul(x, *scale)?;
                let lin = tape.add_row(lin, *bias)?;
                let keep = tape.constant(keep);
                let lin = tape.scale_rows(lin, keep)?;
                let m = tape.constant(Tensor::new(&[b, 1], m)?);
                let tok = tape.matmul(m, *mask)?;
                tape.add(lin, tok)?
            }
            _ => {
                return Err(ModelError::Contract(format!(
                    "value map of attribute {} does not match its kind",
                    attr.name
                )))
            }
        };
        let kind = if attr.is_target {
            TYPE_TARGET
        } else if attr.is_categorical() {
            TYPE_CATEGORICAL
        } else {
            TYPE_CONTINUOUS
        };
        let pos = tape.gather_rows(p.position, &[j])?;
        let ty = tape.gather_rows(p.types, &[kind])?;
        let row = tape.add(pos, ty)?;
        parts.push(tape.add_row(value, row)?);
    }
    Ok(tape.concat_cols(&parts)?)
}

/// One H_s network on a query batch `[B, d·e]` against memory `[n, d·e]`.
pub(crate) fn sample_head(
    tape: &mut Tape,
    head: &SampleHead<NodeId>,
    beta: f64,
    xi: NodeId,
    memory: NodeId,
    self_rows: Option<SelfRows<'_>>,
) -> Result<NodeId, ModelError> {
    let n = tape.value(memory).rows();
    if n == 0 || tape.value(memory).is_empty() {
        return Err(ModelError::Contract(
            "sample-sample attention needs a non-empty memory".into(),
        ));
    }
    let q = tape.matmul_nt(xi, head.w_xi)?;
    let k = tape.matmul_nt(memory, head.w_x)?;
    let scores = tape.matmul_nt(q, k)?;
    let Some(self_rows) = self_rows else {
        let p = tape.softmax(scores, beta)?;
        let z = tape.matmul(p, k)?;
        return Ok(tape.matmul_nt(z, head.w_s)?);
    };

    let b = tape.value(xi).rows();
    let index = self_rows.index();
    if index.len() != b {
        return Err(ModelError::Contract(format!(
            "{} self indices for a batch of {b}",
            index.len()
        )));
    }
    if let Some(&bad) = index.iter().find(|&&i| i >= n) {
        return Err(ModelError::Contract(format!(
            "memory index {bad} out of range for {n} samples"
        )));
    }
    let flat: Vec<usize> = index.iter().enumerate().map(|(r, &i)| r * n + i).collect();
    match self_rows {
        SelfRows::Pattern { embedded, .. } => {
            let k_self = tape.matmul_nt(embedded, head.w_x)?;
            let qk = tape.mul(q, k_self)?;
            let s_self = tape.sum_last(qk)?;
            let scores = tape.replace_entries(scores, &flat, s_self)?;
            let p = tape.softmax(scores, beta)?;
            let p_self = tape.gather_entries(p, &flat)?;
            let zeros = tape.constant(Tensor::zeros(&[b]));
            let p_rest = tape.replace_entries(p, &flat, zeros)?;
            let z = tape.matmul(p_rest, k)?;
            let z_self = tape.scale_rows(k_self, p_self)?;
            let z = tape.add(z, z_self)?;
            Ok(tape.matmul_nt(z, head.w_s)?)
        }
        SelfRows::Drop { .. } => {
            let low = tape.constant(Tensor::filled(&[b], DROPPED_SCORE));
            let scores = tape.replace_entries(scores, &flat, low)?;
            let p = tape.softmax(scores, beta)?;
            let z = tape.matmul(p, k)?;
            Ok(tape.matmul_nt(z, head.w_s)?)
        }
    }
}

/// H_s module: heads combined by `W_G`.
pub(crate) fn sample_module(
    tape: &mut Tape,
    heads: &[SampleHead<NodeId>],
    combine: NodeId,
    beta: f64,
    xi: NodeId,
    memory: NodeId,
    self_rows: Option<SelfRows<'_>>,
) -> Result<NodeId, ModelError> {
    let outs = heads
        .iter()
        .map(|h| sample_head(tape, h, beta, xi, memory, self_rows))
        .collect::<Result<Vec<_>, _>>()?;
    let cat = tape.concat_cols(&outs)?;
    Ok(tape.matmul_nt(cat, combine)?)
}

/// One H_f network on attribute rows `[B·d, e]`, attending over the `d`
/// attribute embeddings `y` of the same sample. Returns `[B·d, e]`.
pub(crate) fn feature_head(
    tape: &mut Tape,
    head: &FeatureHead<NodeId>,
    dims: Dims,
    xi_rows: NodeId,
    y_rows: NodeId,
) -> Result<NodeId, ModelError> {
    let bd = tape.value(xi_rows).rows();
    let b = bd / dims.d;
    let q = tape.matmul_nt(xi_rows, head.w_xi)?;
    let h = tape.value(q).last_dim();
    let q = tape.reshape(q, &[b, dims.d, h])?;
    let k = tape.matmul_nt(y_rows, head.w_y)?;
    let k = tape.reshape(k, &[b, dims.d, h])?;
    let scores = tape.batch_matmul_nt(q, k)?;
    let p = tape.softmax(scores, dims.beta)?;
    let z = tape.batch_matmul(p, k)?;
    let z = tape.reshape(z, &[bd, h])?;
    Ok(tape.matmul_nt(z, head.w_f)?)
}

/// H_f module on a state batch `[B, d·e]`; returns `[B, d·e]`.
pub(crate) fn feature_module(
    tape: &mut Tape,
    heads: &[FeatureHead<NodeId>],
    combine: NodeId,
    dims: Dims,
    xi: NodeId,
    y: NodeId,
) -> Result<NodeId, ModelError> {
    let b = tape.value(xi).rows();
    let xi_rows = tape.reshape(xi, &[b * dims.d, dims.e])?;
    let y_rows = tape.reshape(y, &[b * dims.d, dims.e])?;
    let outs = heads
        .iter()
        .map(|h| feature_head(tape, h, dims, xi_rows, y_rows))
        .collect::<Result<Vec<_>, _>>()?;
    let cat = tape.concat_cols(&outs)?;
    let out = tape.matmul_nt(cat, combine)?;
    Ok(tape.reshape(out, &[b, dims.d * dims.e])?)
}

/// Reborrows an optional RNG for a nested call.
pub(crate) fn reborrow<'s>(rng: &'s mut Option<&mut dyn RngCore>) -> Option<&'s mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

/// Inverted dropout; `p ≥ 1` zeroes everything.
pub(crate) fn dropout(
    tape: &mut Tape,
    x: NodeId,
    p: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<NodeId, ModelError> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    let shape = tape.value(x).shape().to_vec();
    let len = tape.value(x).len();
    let mask = if p >= 1.0 {
        vec![0.0; len]
    } else {
        let keep = 1.0 / (1.0 - p);
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect()
    };
    let mask = tape.constant(Tensor::new(&shape, mask)?);
    Ok(tape.mul(x, mask)?)
}

/// One Hopular block: residual H_s update, then residual H_f update.
#[allow(clippy::too_many_arguments)]
pub(crate) fn block(
    tape: &mut Tape,
    p: &BlockParams<NodeId>,
    dims: Dims,
    p_hidden: f64,
    xi: NodeId,
    memory: NodeId,
    y: NodeId,
    self_rows: Option<SelfRows<'_>>,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<NodeId, ModelError> {
    let hs = sample_module(
        tape,
        &p.sample_heads,
        p.sample_combine,
        dims.beta,
        xi,
        memory,
        self_rows,
    )?;
    let hs = dropout(tape, hs, p_hidden, reborrow(&mut rng))?;
    let xi = tape.add(xi, hs)?;
    let hf = feature_module(tape, &p.feature_heads, p.feature_combine, dims, xi, y)?;
    let hf = dropout(tape, hf, p_hidden, reborrow(&mut rng))?;
    Ok(tape.add(xi, hf)?)
}

/// Maps each attribute slice of the state to its prediction: `[B, card]`
/// logits for categorical attributes, `[B, 1]` for continuous ones.
pub(crate) fn summarize(
    tape: &mut Tape,
    maps: &[OutputMap<NodeId>],
    dims: Dims,
    xi: NodeId,
    p_out: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<Vec<NodeId>, ModelError> {
    let xi = dropout(tape, xi, p_out, rng)?;
    let mut outs = Vec::with_capacity(maps.len());
    for (j, m) in maps.iter().enumerate() {
        let slice = tape.slice_cols(xi, j * dims.e, dims.e)?;
        let z = tape.matmul_nt(slice, m.weight)?;
        outs.push(tape.add_row(z, m.bias)?);
    }
    Ok(outs)
}
