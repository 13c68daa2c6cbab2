use std::collections::BTreeMap;

use super::HarnessError;
use crate::data::{Encoded, EncodedRow, TableSchema};
use crate::training::Prediction;

/// Feature vector for distance computations: one-hot categoricals (with a
/// slot for missing), z-scored continuous values, target left out.
pub fn feature_vector(schema: &TableSchema, row: &EncodedRow) -> Vec<f64> {
    let mut out = Vec::new();
    for (j, (attr, v)) in schema.attributes().iter().zip(row).enumerate() {
        if j == schema.target() {
            continue;
        }
        match (attr.cardinality(), v.value) {
            (Some(card), Encoded::Category(k)) => {
                let mut onehot = vec![0.0; card + 1];
                onehot[k.min(card)] = 1.0;
                out.extend(onehot);
            }
            (_, Encoded::Continuous(x)) => out.push(x),
            (None, Encoded::Category(_)) => out.push(0.0),
        }
    }
    out
}

pub fn target_of(schema: &TableSchema, row: &EncodedRow) -> Option<Prediction> {
    let v = row[schema.target()];
    if v.missing {
        return None;
    }
    Some(match v.value {
        Encoded::Category(k) => Prediction::Class(k),
        Encoded::Continuous(x) => Prediction::Value(x),
    })
}

/// k-nearest-neighbour prediction by Euclidean distance. Equal distances are
/// ordered by row index. Classification takes a majority vote; a tied vote
/// goes to the tied class owning the lowest-index neighbour. Regression
/// averages the neighbours.
pub fn knn_predict(
    points: &[Vec<f64>],
    labels: &[Prediction],
    query: &[f64],
    k: usize,
) -> Result<Prediction, HarnessError> {
    if k == 0 || k > points.len() {
        return Err(HarnessError::Contract(format!(
            "k = {k} must lie in 1..={}",
            points.len()
        )));
    }
    if labels.len() != points.len() {
        return Err(HarnessError::Contract(
            "one label per point required".into(),
        ));
    }
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                p.iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
                i,
            )
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = &order[..k];
    match labels[nearest[0].1] {
        Prediction::Value(_) => {
            let mut s = 0.0;
            for &(_, i) in nearest {
                let Prediction::Value(y) = labels[i] else {
                    return Err(HarnessError::Contract("mixed label kinds".into()));
                };
                s += y;
            }
            Ok(Prediction::Value(s / k as f64))
        }
        Prediction::Class(_) => {
            // class -> (votes, lowest row index)
            let mut votes: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
            for &(_, i) in nearest {
                let Prediction::Class(c) = labels[i] else {
                    return Err(HarnessError::Contract("mixed label kinds".into()));
                };
                let e = votes.entry(c).or_insert((0, i));
                e.0 += 1;
                e.1 = e.1.min(i);
            }
            let (&c, _) = votes
                .iter()
                .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
                .expect("k >= 1");
            Ok(Prediction::Class(c))
        }
    }
}

/// Predictions of a k-NN baseline fitted on `train` for every row of `rows`.
pub fn knn_baseline(
    schema: &TableSchema,
    train: &[EncodedRow],
    rows: &[EncodedRow],
    k: usize,
) -> Result<Vec<Prediction>, HarnessError> {
    let (points, labels): (Vec<Vec<f64>>, Vec<Prediction>) = train
        .iter()
        .filter_map(|r| target_of(schema, r).map(|y| (feature_vector(schema, r), y)))
        .unzip();
    rows.iter()
        .map(|r| knn_predict(&points, &labels, &feature_vector(schema, r), k))
        .collect()
}

/// Most frequent training class (lowest index on ties), or the training mean.
pub fn majority_baseline(
    schema: &TableSchema,
    train: &[EncodedRow],
) -> Result<Prediction, HarnessError> {
    let labels: Vec<Prediction> = train.iter().filter_map(|r| target_of(schema, r)).collect();
    if labels.is_empty() {
        return Err(HarnessError::Contract("no labelled training rows".into()));
    }
    if let Prediction::Value(_) = labels[0] {
        let s: f64 = labels
            .iter()
            .map(|l| match l {
                Prediction::Value(v) => *v,
                Prediction::Class(_) => 0.0,
            })
            .sum();
        return Ok(Prediction::Value(s / labels.len() as f64));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for l in &labels {
        if let Prediction::Class(c) = l {
            *counts.entry(*c).or_default() += 1;
        }
    }
    let (&c, _) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("non-empty");
    Ok(Prediction::Class(c))
}

/// Share of rows whose known class equals the prediction.
pub fn accuracy(schema: &TableSchema, rows: &[EncodedRow], preds: &[Prediction]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (r, p) in rows.iter().zip(preds) {
        if let Some(Prediction::Class(y)) = target_of(schema, r) {
            total += 1;
            hits += usize::from(*p == Prediction::Class(y));
        }
    }
    hits as f64 / total.max(1) as f64
}
