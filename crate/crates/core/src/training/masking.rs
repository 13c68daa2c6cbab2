use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::data::{EncodedRow, TableSchema};
use crate::model::MaskedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskAction {
    Keep,
    Mask,
    Replace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub mask_prob: f64,
    pub replace_prob: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            mask_prob: 0.025,
            replace_prob: 0.175,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let (m, r) = (self.mask_prob, self.replace_prob);
        if !(0.0..=1.0).contains(&m) || !(0.0..=1.0).contains(&r) || m + r > 1.0 + 1e-12 {
            return Err(TrainError::Config(format!(
                "mask probability {m} and replace probability {r} must lie in [0, 1] with sum at most 1"
            )));
        }
        Ok(())
    }

    /// One action per feature. A single uniform draw per feature decides
    /// mask (`r < p_mask`), replace (`r < p_mask + p_replace`) or keep.
    /// The target is always masked and consumes no draw.
    pub fn draw<R: Rng + ?Sized>(&self, schema: &TableSchema, rng: &mut R) -> Vec<MaskAction> {
        (0..schema.len())
            .map(|j| {
                if j == schema.target() {
                    return MaskAction::Mask;
                }
                let r: f64 = rng.random();
                if r < self.mask_prob {
                    MaskAction::Mask
                } else if r < self.mask_prob + self.replace_prob {
                    MaskAction::Replace
                } else {
                    MaskAction::Keep
                }
            })
            .collect()
    }
}

/// Positions that enter the loss for one sample.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossPositions {
    /// Masked or replaced features with a known ground truth.
    pub features: Vec<usize>,
    /// Targets with a known ground truth.
    pub targets: Vec<usize>,
}

/// Applies `plan` to training sample `index` of `train`. Replaced features
/// take the value of the same attribute from a uniformly drawn other sample.
pub fn apply_mask<R: Rng + ?Sized>(
    schema: &TableSchema,
    train: &[EncodedRow],
    index: usize,
    plan: &[MaskAction],
    rng: &mut R,
) -> Result<(MaskedSample, LossPositions), TrainError> {
    let truth = train.get(index).ok_or_else(|| {
        TrainError::Contract(format!(
            "sample {index} out of range for {} rows",
            train.len()
        ))
    })?;
    if plan.len() != schema.len() {
        return Err(TrainError::Contract(format!(
            "mask plan has {} actions for {} attributes",
            plan.len(),
            schema.len()
        )));
    }
    let mut values = truth.clone();
    let mut masked = vec![false; schema.len()];
    let mut positions = LossPositions::default();
    for (j, action) in plan.iter().enumerate() {
        let is_target = j == schema.target();
        match action {
            MaskAction::Keep if is_target => {
                return Err(TrainError::Contract(
                    "the target must always be masked".into(),
                ));
            }
            MaskAction::Keep => continue,
            MaskAction::Mask => masked[j] = true,
            MaskAction::Replace => {
                if is_target {
                    return Err(TrainError::Contract("the target cannot be replaced".into()));
                }
                if train.len() < 2 {
                    return Err(TrainError::Masking(
                        "replace needs at least one other training sample".into(),
                    ));
                }
                let mut donor = rng.random_range(0..train.len() - 1);
                if donor >= index {
                    donor += 1;
                }
                values[j] = train[donor][j];
            }
        }
        if !truth[j].missing {
            if is_target {
                positions.targets.push(j);
            } else {
                positions.features.push(j);
            }
        }
    }
    Ok((MaskedSample { values, masked }, positions))
}
