//! Attribute masking, the feature/target objective with its cosine schedule,
//! LAMB with slow-weight averaging, and the epoch loop.

mod fit;
mod loss;
mod masking;
mod optim;

pub use fit::{
    batch_loss, evaluate, fit, write_history, EpochRecord, Evaluation, FitOutcome, Prediction,
    TrainConfig,
};
pub use loss::{
    compute_loss, gamma_schedule, gamma_schedule_from, loss_on_tape, LossBreakdown, LossNodes,
};
pub use masking::{apply_mask, LossPositions, MaskAction, MaskConfig};
pub use optim::{ema_update, Lamb, LambConfig, TRUST_CLAMP};

use thiserror::Error;

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("masking error: {0}")]
    Masking(String),
    #[error("optimizer error: {0}")]
    Optimizer(String),
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (L_f = {}, L_t = {}, gamma = {}): {detail}",
        breakdown.l_f, breakdown.l_t, breakdown.gamma
    )]
    NonFinite {
        epoch: usize,
        batch: usize,
        breakdown: LossBreakdown,
        detail: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Encoded, EncodedRow, EncodedValue, TableSchema};
    use crate::model::{Dropout, HopularModel, ModelConfig, SelfColumn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema() -> TableSchema {
        TableSchema::parse("x1,continuous,false\nx2,continuous,false\ny,categorical,2,true\n")
            .unwrap()
    }

    /// Two features, label = [x1 + x2 > 0], kept away from the boundary.
    fn separable(n: usize, seed: u64) -> Vec<EncodedRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        while rows.len() < n {
            let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            if (a + b).abs() < 0.4 {
                continue;
            }
            let v = |x| EncodedValue {
                value: Encoded::Continuous(x),
                missing: false,
            };
            rows.push(vec![
                v(a),
                v(b),
                EncodedValue {
                    value: Encoded::Category(usize::from(a + b > 0.0)),
                    missing: false,
                },
            ]);
        }
        rows
    }

    fn small_model(seed: u64) -> HopularModel {
        let cfg = ModelConfig {
            embedding_dim: 4,
            blocks: 1,
            heads: 2,
            beta_scale: 1.0,
            dropout: Dropout::NONE,
            detach_memory: false,
            self_column: SelfColumn::MaskPattern,
        };
        HopularModel::new(schema(), cfg, seed).unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            patience: epochs,
            optimizer: LambConfig {
                lr: 0.01,
                weight_decay: 0.0,
                ..LambConfig::default()
            },
            ema_alpha: 0.1,
            gamma_start: 0.5,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_a_separable_toy_set() {
        let data = separable(40, 1);
        let (train, val) = data.split_at(30);
        let out = fit(small_model(0), train, val, &quick(300), |_| {}).unwrap();
        let best = out.history.iter().map(|r| r.val_metric).fold(0.0, f64::max);
        assert_eq!(best, 1.0, "best validation accuracy {best}");
        for r in &out.history {
            let re = r.gamma * r.l_f + (1.0 - r.gamma) * r.l_t;
            assert!((re - r.loss).abs() <= 1e-12);
        }
        let first = out.history[0].loss;
        let later = out.history[99].loss;
        assert!(later < first, "{later} !< {first}");
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = separable(20, 2);
        let model = small_model(1);
        let mut cfg = quick(5);
        cfg.optimizer.lr = 0.0;
        let out = fit(model.clone(), &data[..15], &data[15..], &cfg, |_| {}).unwrap();
        assert_eq!(out.model.params(), model.params());
        let m0 = out.history[0].val_metric;
        assert!(out.history.iter().all(|r| r.val_metric == m0));
    }

    #[test]
    fn equal_seeds_give_identical_histories() {
        let data = separable(24, 3);
        let mut cfg = quick(20);
        cfg.masking = MaskConfig::default();
        let run = || {
            let out = fit(small_model(2), &data[..18], &data[18..], &cfg, |_| {}).unwrap();
            let mut buf = Vec::new();
            write_history(&mut buf, &out.history).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn early_stopping_returns_the_best_slow_weights() {
        let data = separable(24, 4);
        let mut cfg = quick(60);
        cfg.patience = 3;
        cfg.optimizer.lr = 0.2;
        let out = fit(small_model(3), &data[..18], &data[18..], &cfg, |_| {}).unwrap();
        let best = out
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_val_loss, best);
        assert_eq!(out.history[out.best_epoch].val_loss, best);
        let again = evaluate(&out.model, &data[..18], &data[18..]).unwrap();
        assert_eq!(again.loss, best);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = separable(10, 5);
        assert!(fit(small_model(0), &data[..8], &[], &quick(1), |_| {}).is_err());
        let mut cfg = quick(1);
        cfg.masking.mask_prob = 0.9;
        cfg.masking.replace_prob = 0.5;
        assert!(fit(small_model(0), &data[..8], &data[8..], &cfg, |_| {}).is_err());
    }
}
