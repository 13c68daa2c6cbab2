use serde::{Deserialize, Serialize};

use super::baselines::target_of;
use crate::data::{EncodedRow, Normalizer, TableSchema, Task};
use crate::training::Prediction;

/// Sample mean and its standard error (`s/√n`, zero for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Classification => "accuracy",
        Task::Regression => "mse_x1000",
    }
}

pub fn higher_is_better(task: Task) -> bool {
    task == Task::Classification
}

/// Accuracy for classification; 1000 × mean squared error on de-normalized
/// targets for regression. Rows with a missing target are skipped.
pub fn split_metric(
    schema: &TableSchema,
    normalizer: &Normalizer,
    rows: &[EncodedRow],
    preds: &[Prediction],
) -> f64 {
    let t = schema.target();
    let (mut acc, mut n) = (0.0, 0usize);
    for (row, pred) in rows.iter().zip(preds) {
        match (target_of(schema, row), pred) {
            (Some(Prediction::Class(y)), Prediction::Class(p)) => {
                acc += f64::from(u8::from(y == *p))
            }
            (Some(Prediction::Value(y)), Prediction::Value(p)) => {
                let e = normalizer.denormalize(t, *p) - normalizer.denormalize(t, y);
                acc += e * e;
            }
            (None, _) => continue,
            _ => acc += f64::NAN,
        }
        n += 1;
    }
    let mean = acc / n.max(1) as f64;
    match schema.task() {
        Task::Classification => mean,
        Task::Regression => 1000.0 * mean,
    }
}

/// A metric summarized over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub metric: String,
    pub value: f64,
    pub std_error: f64,
    pub replicates: Vec<f64>,
}

impl MetricsReport {
    pub fn new(task: Task, replicates: Vec<f64>) -> Self {
        let (value, std_error) = mean_and_se(&replicates);
        Self {
            task,
            metric: metric_name(task).into(),
            value,
            std_error,
            replicates,
        }
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} = {:.4} ± {:.4} (n = {})",
            self.metric,
            self.value,
            self.std_error,
            self.replicates.len()
        )
    }
}
