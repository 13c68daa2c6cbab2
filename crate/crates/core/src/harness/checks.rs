use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::data::{Encoded, EncodedRow, EncodedValue, TableSchema};
use crate::model::{Dropout, HopularModel, MaskedSample, ModelConfig, Params, SelfColumn};
use crate::tensor::{finite_diff_check_many, GradCheckReport, NodeId, Tensor};
use crate::training::{loss_on_tape, LossPositions};

/// Central-difference check of the full training loss (memory built on the
/// tape, self rows, masked features and target) with respect to every
/// parameter of a small model: 3 attributes, e = 4, one block, two heads,
/// four samples.
pub fn model_gradcheck(seed: u64, eps: f64) -> Result<GradCheckReport, HarnessError> {
    let schema =
        TableSchema::parse("a,continuous,false\nb,categorical,3,false\ny,categorical,2,true\n")?;
    let cfg = ModelConfig {
        embedding_dim: 4,
        blocks: 1,
        heads: 2,
        beta_scale: 2.0,
        dropout: Dropout::NONE,
        detach_memory: false,
        self_column: SelfColumn::MaskPattern,
    };
    let model = HopularModel::new(schema.clone(), cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let value = |v| EncodedValue {
        value: v,
        missing: false,
    };
    let train: Vec<EncodedRow> = (0..4)
        .map(|_| {
            vec![
                value(Encoded::Continuous(rng.random_range(-1.5..1.5))),
                value(Encoded::Category(rng.random_range(0..3))),
                value(Encoded::Category(rng.random_range(0..2))),
            ]
        })
        .collect();
    let mut queries = Vec::new();
    let mut positions = Vec::new();
    for (i, r) in train.iter().enumerate() {
        let mut q = MaskedSample::inference(&schema, r.clone());
        q.masked[i % 2] = true;
        queries.push(q);
        positions.push(LossPositions {
            features: vec![i % 2],
            targets: vec![2],
        });
    }
    let truths: Vec<&EncodedRow> = train.iter().collect();
    let index = [0, 1, 2, 3];
    let tensors: Vec<Tensor> = model.params().iter().into_iter().cloned().collect();
    let template = model.params();
    let report = finite_diff_check_many(
        |tape, ids| {
            let mut it = ids.iter();
            let p: Params<NodeId> = template.map(|_, _| *it.next().expect("one id per tensor"));
            let mem = model.memory_on_tape(tape, &p, &train)?;
            let outs = model.forward_on_tape(tape, &p, &queries, mem, Some(&index), None)?;
            let nodes = loss_on_tape(tape, &schema, &outs, &truths, &positions, 0.5)?;
            Ok::<_, HarnessError>(nodes.total)
        },
        &tensors,
        eps,
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_loss_gradients_agree() {
        let r = model_gradcheck(4, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(r.checked > 100);
    }
}
