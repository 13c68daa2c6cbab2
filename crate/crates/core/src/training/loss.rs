use serde::{Deserialize, Serialize};

use super::{LossPositions, TrainError};
use crate::data::{Encoded, EncodedRow, TableSchema};
use crate::tensor::{NodeId, Tape, Tensor};

/// `γ` at `epoch` of `total`: `γ₀·½(1 + cos(π·epoch/total))`.
pub fn gamma_schedule(epoch: usize, total: usize) -> f64 {
    gamma_schedule_from(1.0, epoch, total)
}

pub fn gamma_schedule_from(start: f64, epoch: usize, total: usize) -> f64 {
    let total = total.max(1);
    let t = epoch.min(total) as f64 / total as f64;
    start * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_f: f64,
    pub l_t: f64,
    pub gamma: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recombined(&self) -> f64 {
        self.gamma * self.l_f + (1.0 - self.gamma) * self.l_t
    }
}

/// Loss nodes on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub l_f: NodeId,
    pub l_t: NodeId,
    pub total: NodeId,
}

impl LossNodes {
    pub fn breakdown(&self, tape: &Tape, gamma: f64) -> LossBreakdown {
        LossBreakdown {
            l_f: tape.value(self.l_f).data()[0],
            l_t: tape.value(self.l_t).data()[0],
            gamma,
            total: tape.value(self.total).data()[0],
        }
    }
}

/// `L = γ·L_f + (1−γ)·L_t`. Both parts are means over their positions taken
/// jointly across the batch: cross-entropy for categorical attributes,
/// squared error for continuous ones. A part without positions is 0.
pub fn loss_on_tape(
    tape: &mut Tape,
    schema: &TableSchema,
    outputs: &[NodeId],
    truths: &[&EncodedRow],
    positions: &[LossPositions],
    gamma: f64,
) -> Result<LossNodes, TrainError> {
    if outputs.len() != schema.len() || truths.len() != positions.len() {
        return Err(TrainError::Contract(format!(
            "{} outputs for {} attributes, {} truths for {} position sets",
            outputs.len(),
            schema.len(),
            truths.len(),
            positions.len()
        )));
    }
    // Per attribute: (batch row, truth) pairs for features and for targets.
    let d = schema.len();
    let mut feat: Vec<Vec<(usize, Encoded)>> = vec![Vec::new(); d];
    let mut targ: Vec<Vec<(usize, Encoded)>> = vec![Vec::new(); d];
    for (b, (truth, pos)) in truths.iter().zip(positions).enumerate() {
        for &j in &pos.features {
            feat[j].push((b, truth[j].value));
        }
        for &j in &pos.targets {
            targ[j].push((b, truth[j].value));
        }
    }

    let part = |tape: &mut Tape, groups: &[Vec<(usize, Encoded)>]| -> Result<NodeId, TrainError> {
        let count: usize = groups.iter().map(Vec::len).sum();
        let mut sum: Option<NodeId> = None;
        for (j, group) in groups.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let out = outputs[j];
            let width = tape.value(out).last_dim();
            let term = match schema.attribute(j).cardinality() {
                Some(card) => {
                    let mut idx = Vec::with_capacity(group.len());
                    for &(b, v) in group {
                        match v {
                            Encoded::Category(k) if k < card => idx.push(b * width + k),
                            other => {
                                return Err(TrainError::Contract(format!(
                                    "attribute {}: truth {other:?} is not a category",
                                    schema.attribute(j).name
                                )))
                            }
                        }
                    }
                    let ls = tape.log_softmax(out)?;
                    let picked = tape.gather_entries(ls, &idx)?;
                    let s = tape.sum(picked);
                    tape.scale(s, -1.0)
                }
                None => {
                    let mut idx = Vec::with_capacity(group.len());
                    let mut y = Vec::with_capacity(group.len());
                    for &(b, v) in group {
                        match v {
                            Encoded::Continuous(x) => {
                                idx.push(b * width);
                                y.push(x);
                            }
                            other => {
                                return Err(TrainError::Contract(format!(
                                    "attribute {}: truth {other:?} is not continuous",
                                    schema.attribute(j).name
                                )))
                            }
                        }
                    }
                    let pred = tape.gather_entries(out, &idx)?;
                    let y = tape.constant(Tensor::vector(y));
                    let diff = tape.sub(pred, y)?;
                    let sq = tape.square(diff)?;
                    tape.sum(sq)
                }
            };
            sum = Some(match sum {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok(match sum {
            Some(s) => tape.scale(s, 1.0 / count as f64),
            None => tape.constant(Tensor::scalar(0.0)),
        })
    };
    let l_f = part(tape, &feat)?;
    let l_t = part(tape, &targ)?;
    let a = tape.scale(l_f, gamma);
    let b = tape.scale(l_t, 1.0 - gamma);
    let total = tape.add(a, b)?;
    Ok(LossNodes { l_f, l_t, total })
}

/// [`loss_on_tape`] evaluated on fixed predictions.
pub fn compute_loss(
    schema: &TableSchema,
    preds: &[Tensor],
    truths: &[&EncodedRow],
    positions: &[LossPositions],
    gamma: f64,
) -> Result<LossBreakdown, TrainError> {
    let mut tape = Tape::new();
    let outs: Vec<NodeId> = preds.iter().map(|p| tape.constant(p.clone())).collect();
    let nodes = loss_on_tape(&mut tape, schema, &outs, truths, positions, gamma)?;
    Ok(nodes.breakdown(&tape, gamma))
}
