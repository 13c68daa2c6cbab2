use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{gamma_schedule_from, loss_on_tape, LossBreakdown};
use super::masking::{apply_mask, LossPositions, MaskConfig};
use super::optim::{ema_update, Lamb, LambConfig};
use super::TrainError;
use crate::data::{Encoded, EncodedRow, Task};
use crate::model::{HopularModel, MaskedSample};
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub optimizer: LambConfig,
    /// Slow-weight rate, applied after every optimizer step.
    pub ema_alpha: f64,
    pub masking: MaskConfig,
    /// `γ` at epoch 0; annealed to 0 over `epochs`.
    pub gamma_start: f64,
    /// Training sets up to this size use one full batch per epoch.
    pub full_batch_limit: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            patience: 500,
            optimizer: LambConfig::default(),
            ema_alpha: 0.005,
            masking: MaskConfig::default(),
            gamma_start: 1.0,
            full_batch_limit: 2048,
            batch_size: 256,
            seed: 0,
        }
    }
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gamma: f64,
    pub l_f: f64,
    pub l_t: f64,
    pub loss: f64,
    /// Target loss of the slow weights on the validation rows.
    pub val_loss: f64,
    /// Accuracy (classification) or mean squared error in normalized units
    /// (regression) of the slow weights on the validation rows.
    pub val_metric: f64,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain numeric record")
    }
}

pub fn write_history<W: Write>(out: &mut W, history: &[EpochRecord]) -> std::io::Result<()> {
    for r in history {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Slow weights with the best validation loss.
    pub model: HopularModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    Class(usize),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub task: Task,
    /// Mean target loss over rows with a known target.
    pub loss: f64,
    pub accuracy: Option<f64>,
    /// In normalized target units.
    pub mse: Option<f64>,
    pub predictions: Vec<Prediction>,
}

impl Evaluation {
    pub fn metric(&self) -> f64 {
        self.accuracy.or(self.mse).unwrap_or(f64::NAN)
    }
}

const EVAL_CHUNK: usize = 256;

/// Inference on `rows` (only the target masked) with the training rows as memory.
pub fn evaluate(
    model: &HopularModel,
    train: &[EncodedRow],
    rows: &[EncodedRow],
) -> Result<Evaluation, TrainError> {
    let schema = model.schema();
    let t = schema.target();
    let task = schema.task();
    if rows.is_empty() {
        return Err(TrainError::Contract(
            "cannot evaluate an empty split".into(),
        ));
    }
    let memory = model.build_memory(train, crate::model::MemoryMode::Eval)?;
    let mut predictions = Vec::with_capacity(rows.len());
    let (mut loss, mut hits, mut sq, mut known) = (0.0, 0usize, 0.0, 0usize);
    for chunk in rows.chunks(EVAL_CHUNK) {
        let queries: Vec<MaskedSample> = chunk
            .iter()
            .map(|r| MaskedSample::inference(schema, r.clone()))
            .collect();
        let outs = model.forward_with_memory(&queries, &memory)?;
        let out = &outs[t];
        for (b, row) in chunk.iter().enumerate() {
            let logits = out.row(b);
            let pred = match task {
                Task::Classification => {
                    let mut best = 0;
                    for (k, v) in logits.iter().enumerate() {
                        if *v > logits[best] {
                            best = k;
                        }
                    }
                    Prediction::Class(best)
                }
                Task::Regression => Prediction::Value(logits[0]),
            };
            predictions.push(pred);
            if row[t].missing {
                continue;
            }
            known += 1;
            match (row[t].value, pred) {
                (Encoded::Category(k), Prediction::Class(c)) => {
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                    loss += lse - logits[k];
                    hits += usize::from(c == k);
                }
                (Encoded::Continuous(y), Prediction::Value(p)) => {
                    let e = (p - y) * (p - y);
                    loss += e;
                    sq += e;
                }
                _ => {
                    return Err(TrainError::Contract(
                        "target kind does not match the task".into(),
                    ))
                }
            }
        }
    }
    let denom = known.max(1) as f64;
    let (accuracy, mse) = match task {
        Task::Classification => (Some(hits as f64 / denom), None),
        Task::Regression => (None, Some(sq / denom)),
    };
    Ok(Evaluation {
        task,
        loss: loss / denom,
        accuracy,
        mse,
        predictions,
    })
}

fn names_of(model: &HopularModel) -> Vec<String> {
    model.params().names()
}

/// Trains `model` on `train`, early-stopping on the validation target loss
/// of the slow weights. `on_epoch` sees every history record as it is made.
pub fn fit(
    mut model: HopularModel,
    train: &[EncodedRow],
    val: &[EncodedRow],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome, TrainError> {
    cfg.masking.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config(
            "training and validation splits must be non-empty".into(),
        ));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(TrainError::Config(
            "epochs and batch size must be at least 1".into(),
        ));
    }
    if !(cfg.optimizer.lr >= 0.0 && cfg.optimizer.lr.is_finite()) {
        return Err(TrainError::Config(format!(
            "learning rate {} must be finite and non-negative",
            cfg.optimizer.lr
        )));
    }
    if !(0.0..=1.0).contains(&cfg.gamma_start) {
        return Err(TrainError::Config(format!(
            "initial gamma {} outside [0, 1]",
            cfg.gamma_start
        )));
    }
    let schema = model.schema().clone();
    let names = names_of(&model);
    let shapes: Vec<Vec<usize>> = model
        .params()
        .iter()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut opt = Lamb::new(cfg.optimizer, &shape_refs);
    let mut slow = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = if train.len() <= cfg.full_batch_limit {
        train.len()
    } else {
        cfg.batch_size
    };

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, slow.clone());
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let gamma = gamma_schedule_from(cfg.gamma_start, epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (bi, idx) in order.chunks(batch).enumerate() {
            let mut queries = Vec::with_capacity(idx.len());
            let mut positions: Vec<LossPositions> = Vec::with_capacity(idx.len());
            for &i in idx {
                let plan = cfg.masking.draw(&schema, &mut rng);
                let (q, pos) = apply_mask(&schema, train, i, &plan, &mut rng)?;
                queries.push(q);
                positions.push(pos);
            }
            let truths: Vec<&EncodedRow> = idx.iter().map(|&i| &train[i]).collect();

            let mut tape = Tape::new();
            let p = model.bind(&mut tape, true);
            let memory = model.memory_on_tape(&mut tape, &p, train)?;
            let outs = model.forward_on_tape(
                &mut tape,
                &p,
                &queries,
                memory,
                Some(idx),
                Some(&mut rng),
            )?;
            let nodes = loss_on_tape(&mut tape, &schema, &outs, &truths, &positions, gamma)?;
            let b = nodes.breakdown(&tape, gamma);
            if !b.total.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi,
                    breakdown: b,
                    detail: nonfinite_detail(&model, &names),
                });
            }
            let mut grads = tape.backward(nodes.total)?;
            let grads: Vec<Tensor> = p
                .iter()
                .iter()
                .zip(&shapes)
                .map(|(&&id, s)| grads.take(id).unwrap_or_else(|| Tensor::zeros(s)))
                .collect();
            drop(tape);
            opt.update(&mut model.params_mut().iter_mut(), &grads, &names)?;
            ema_update(
                &mut slow.params_mut().iter_mut(),
                &model.params().iter(),
                cfg.ema_alpha,
            )?;
            sums.0 += b.l_f;
            sums.1 += b.l_t;
            sums.2 += b.total;
            batches += 1;
        }
        let nb = batches as f64;
        let eval = evaluate(&slow, train, val)?;
        let record = EpochRecord {
            epoch,
            gamma,
            l_f: sums.0 / nb,
            l_t: sums.1 / nb,
            loss: sums.2 / nb,
            val_loss: eval.loss,
            val_metric: eval.metric(),
        };
        on_epoch(&record);
        history.push(record);
        if eval.loss < best.0 {
            best = (eval.loss, epoch, slow.clone());
        } else if epoch - best.1 >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(FitOutcome {
        model: best.2,
        history,
        best_epoch: best.1,
        best_val_loss: best.0,
        stopped_early,
    })
}

fn nonfinite_detail(model: &HopularModel, names: &[String]) -> String {
    let bad: Vec<&str> = model
        .params()
        .iter()
        .iter()
        .zip(names)
        .filter(|(t, _)| !t.is_finite())
        .map(|(_, n)| n.as_str())
        .collect();
    let norms: Vec<String> = model
        .params()
        .iter()
        .iter()
        .zip(names)
        .map(|(t, n)| format!("{n}={:.3e}", t.norm()))
        .collect();
    if bad.is_empty() {
        format!("all parameters finite; norms: {}", norms.join(", "))
    } else {
        format!("non-finite parameters: {}", bad.join(", "))
    }
}

/// Loss breakdown on a single batch without updating anything.
pub fn batch_loss(
    model: &HopularModel,
    train: &[EncodedRow],
    queries: &[MaskedSample],
    self_index: &[usize],
    positions: &[LossPositions],
    gamma: f64,
) -> Result<LossBreakdown, TrainError> {
    let schema = model.schema();
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, false);
    let memory = model.memory_on_tape(&mut tape, &p, train)?;
    let outs = model.forward_on_tape(&mut tape, &p, queries, memory, Some(self_index), None)?;
    let truths: Vec<&EncodedRow> = self_index.iter().map(|&i| &train[i]).collect();
    let nodes = loss_on_tape(&mut tape, schema, &outs, &truths, positions, gamma)?;
    Ok(nodes.breakdown(&tape, gamma))
}
