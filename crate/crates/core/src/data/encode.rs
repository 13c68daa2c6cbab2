use serde::{Deserialize, Serialize};

use super::{AttributeKind, DataError, Dataset, RawValue, TableSchema};

/// Model-ready value of one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Encoded {
    /// Category index; `cardinality` denotes the dedicated missing category.
    Category(usize),
    /// z-scored value; missing values are imputed with the training mean (0).
    Continuous(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodedValue {
    pub value: Encoded,
    pub missing: bool,
}

pub type EncodedRow = Vec<EncodedValue>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-continuous-attribute mean and (population) standard deviation,
/// estimated on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    stats: Vec<Option<ColumnStats>>,
}

impl Normalizer {
    pub fn fit(dataset: &Dataset, train_rows: &[usize]) -> Result<Self, DataError> {
        if train_rows.is_empty() {
            return Err(DataError::Config(
                "cannot fit normalization on an empty training split".into(),
            ));
        }
        let schema = dataset.schema();
        let mut stats = Vec::with_capacity(schema.len());
        for (j, attr) in schema.attributes().iter().enumerate() {
            if attr.kind != AttributeKind::Continuous {
                stats.push(None);
                continue;
            }
            let values: Vec<f64> = train_rows
                .iter()
                .filter_map(|&i| match dataset.row(i)[j] {
                    RawValue::Number(x) => Some(x),
                    _ => None,
                })
                .collect();
            if values.is_empty() {
                stats.push(Some(ColumnStats {
                    mean: 0.0,
                    std: 0.0,
                }));
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            stats.push(Some(ColumnStats {
                mean,
                std: var.sqrt(),
            }));
        }
        Ok(Self { stats })
    }

    pub fn stats(&self, j: usize) -> Option<ColumnStats> {
        self.stats[j]
    }

    /// Names of continuous attributes whose training standard deviation is zero.
    pub fn constant_columns(&self, schema: &TableSchema) -> Vec<String> {
        self.stats
            .iter()
            .zip(schema.attributes())
            .filter(|(s, _)| matches!(s, Some(c) if c.std == 0.0))
            .map(|(_, a)| a.name.clone())
            .collect()
    }

    pub fn normalize(&self, j: usize, x: f64) -> f64 {
        match self.stats[j] {
            Some(ColumnStats { std: 0.0, .. }) => 0.0,
            Some(ColumnStats { mean, std }) => (x - mean) / std,
            None => x,
        }
    }

    pub fn denormalize(&self, j: usize, z: f64) -> f64 {
        match self.stats[j] {
            Some(ColumnStats { mean, std }) => z * std + mean,
            None => z,
        }
    }

    /// Categorical values become indices (one-hot is realised by the
    /// embedding lookup); continuous values are z-scored.
    pub fn encode(&self, schema: &TableSchema, row: &[RawValue]) -> Result<EncodedRow, DataError> {
        if row.len() != schema.len() {
            return Err(DataError::Config(format!(
                "row has {} values, schema has {} attributes",
                row.len(),
                schema.len()
            )));
        }
        row.iter()
            .zip(schema.attributes())
            .enumerate()
            .map(|(j, (v, attr))| {
                Ok(match (attr.kind, *v) {
                    (AttributeKind::Categorical { cardinality }, RawValue::Category(k))
                        if k < cardinality =>
                    {
                        EncodedValue {
                            value: Encoded::Category(k),
                            missing: false,
                        }
                    }
                    (AttributeKind::Categorical { cardinality }, RawValue::Missing) => {
                        EncodedValue {
                            value: Encoded::Category(cardinality),
                            missing: true,
                        }
                    }
                    (AttributeKind::Continuous, RawValue::Number(x)) => EncodedValue {
                        value: Encoded::Continuous(self.normalize(j, x)),
                        missing: false,
                    },
                    (AttributeKind::Continuous, RawValue::Missing) => EncodedValue {
                        value: Encoded::Continuous(0.0),
                        missing: true,
                    },
                    (_, other) => {
                        return Err(DataError::Config(format!(
                            "attribute {}: value {other:?} does not match its kind",
                            attr.name
                        )))
                    }
                })
            })
            .collect()
    }

    pub fn encode_rows(
        &self,
        dataset: &Dataset,
        rows: &[usize],
    ) -> Result<Vec<EncodedRow>, DataError> {
        rows.iter()
            .map(|&i| self.encode(dataset.schema(), dataset.row(i)))
            .collect()
    }
}
