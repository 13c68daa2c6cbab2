use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::HarnessError;
use crate::data::{Attribute, AttributeKind, Dataset, RawValue, TableSchema};

/// Classification table with planted neighbourhood structure: `classes × 3`
/// prototypes in `[-2, 2]^features`, samples scattered around a random
/// prototype with standard deviation `noise`, each labelled with the class of
/// its nearest prototype.
pub fn planted_neighbors(
    n: usize,
    features: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, HarnessError> {
    if n == 0 || features == 0 || classes < 2 {
        return Err(HarnessError::Config(
            "need rows, features and at least two classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scatter = Normal::new(0.0, noise).map_err(|e| HarnessError::Config(e.to_string()))?;
    let prototypes: Vec<(Vec<f64>, usize)> = (0..classes * 3)
        .map(|k| {
            (
                (0..features).map(|_| rng.random_range(-2.0..2.0)).collect(),
                k % classes,
            )
        })
        .collect();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let (centre, _) = &prototypes[rng.random_range(0..prototypes.len())];
        let x: Vec<f64> = centre
            .iter()
            .map(|c| c + scatter.sample(&mut rng))
            .collect();
        let nearest = prototypes
            .iter()
            .map(|(p, c)| {
                (
                    p.iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>(),
                    *c,
                )
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("prototypes exist")
            .1;
        let mut row: Vec<RawValue> = x.into_iter().map(RawValue::Number).collect();
        row.push(RawValue::Category(nearest));
        rows.push(row);
    }
    let mut attributes: Vec<Attribute> = (0..features)
        .map(|j| Attribute {
            name: format!("x{j}"),
            kind: AttributeKind::Continuous,
            is_target: false,
            vocabulary: None,
        })
        .collect();
    attributes.push(Attribute {
        name: "label".into(),
        kind: AttributeKind::Categorical {
            cardinality: classes,
        },
        is_target: true,
        vocabulary: Some((0..classes).map(|c| c.to_string()).collect()),
    });
    Ok(Dataset::from_rows(TableSchema::new(attributes)?, rows)?)
}
