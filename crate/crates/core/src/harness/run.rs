use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baselines::{knn_baseline, majority_baseline};
use super::metrics::{higher_is_better, split_metric, MetricsReport};
use super::{HarnessError, RunConfig};
use crate::data::{split, Dataset, EncodedRow, Normalizer, SplitIndices, SplitSpec};
use crate::model::{Checkpoint, HopularModel};
use crate::training::{evaluate, fit, write_history, EpochRecord, FitOutcome, Prediction};

/// A dataset split, normalized on its training part and encoded.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: SplitIndices,
    pub normalizer: Normalizer,
    pub train: Vec<EncodedRow>,
    pub val: Vec<EncodedRow>,
    pub test: Vec<EncodedRow>,
}

impl Prepared {
    pub fn new(dataset: Dataset, split: SplitIndices) -> Result<Self, HarnessError> {
        split.validate(dataset.len())?;
        let normalizer = Normalizer::fit(&dataset, &split.train)?;
        let train = normalizer.encode_rows(&dataset, &split.train)?;
        let val = normalizer.encode_rows(&dataset, &split.val)?;
        let test = normalizer.encode_rows(&dataset, &split.test)?;
        Ok(Self {
            dataset,
            split,
            normalizer,
            train,
            val,
            test,
        })
    }

    /// Stratified random split by `fractions`.
    pub fn with_fractions(
        dataset: Dataset,
        fractions: [f64; 3],
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let spec = SplitSpec::Fractions {
            train: fractions[0],
            val: fractions[1],
            test: fractions[2],
        };
        let indices = split(&dataset, &spec, seed)?;
        Self::new(dataset, indices)
    }

    pub fn metric(&self, rows: &[EncodedRow], preds: &[Prediction]) -> f64 {
        split_metric(self.dataset.schema(), &self.normalizer, rows, preds)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub fit: FitOutcome,
    pub val_metric: f64,
    pub test_metric: f64,
    pub test_predictions: Vec<Prediction>,
}

/// Trains one model with `cfg.seed` driving both initialization and training.
pub fn train_run(
    prepared: &Prepared,
    cfg: &RunConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunOutcome, HarnessError> {
    let model = HopularModel::new(prepared.dataset.schema().clone(), cfg.model(), cfg.seed)?;
    let outcome = fit(
        model,
        &prepared.train,
        &prepared.val,
        &cfg.training(),
        on_epoch,
    )?;
    let val = evaluate(&outcome.model, &prepared.train, &prepared.val)?;
    let test = evaluate(&outcome.model, &prepared.train, &prepared.test)?;
    Ok(RunOutcome {
        config: cfg.clone(),
        val_metric: prepared.metric(&prepared.val, &val.predictions),
        test_metric: prepared.metric(&prepared.test, &test.predictions),
        test_predictions: test.predictions,
        fit: outcome,
    })
}

/// `replicates` runs with seeds `cfg.seed`, `cfg.seed + 1`, ...
pub fn replicate_runs(
    prepared: &Prepared,
    cfg: &RunConfig,
    replicates: usize,
) -> Result<Vec<RunOutcome>, HarnessError> {
    (0..replicates as u64)
        .map(|r| {
            let c = RunConfig {
                seed: cfg.seed + r,
                ..cfg.clone()
            };
            train_run(prepared, &c, |_| {})
        })
        .collect()
}

pub fn report(prepared: &Prepared, runs: &[RunOutcome]) -> MetricsReport {
    MetricsReport::new(
        prepared.dataset.schema().task(),
        runs.iter().map(|r| r.test_metric).collect(),
    )
}

/// One grid point and its validation metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: RunConfig,
    pub val_metric: f64,
}

/// Trains every configuration of `cfg.grid()` and returns them with the best
/// (by validation metric, first on ties) first.
pub fn grid_search(prepared: &Prepared, cfg: &RunConfig) -> Result<Vec<GridPoint>, HarnessError> {
    let task = prepared.dataset.schema().task();
    let mut points = Vec::new();
    for c in cfg.grid() {
        let run = train_run(prepared, &c, |_| {})?;
        points.push(GridPoint {
            config: c,
            val_metric: run.val_metric,
        });
    }
    let better = |a: f64, b: f64| if higher_is_better(task) { a > b } else { a < b };
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if better(p.val_metric, points[best].val_metric) {
            best = i;
        }
    }
    points.swap(0, best);
    Ok(points)
}

/// Test metrics of the 1-NN and majority baselines.
pub fn baseline_metrics(prepared: &Prepared) -> Result<(f64, f64), HarnessError> {
    let schema = prepared.dataset.schema();
    let knn = knn_baseline(schema, &prepared.train, &prepared.test, 1)?;
    let majority = vec![majority_baseline(schema, &prepared.train)?; prepared.test.len()];
    Ok((
        prepared.metric(&prepared.test, &knn),
        prepared.metric(&prepared.test, &majority),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: Option<RunConfig>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
    pub results: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            seed: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            results: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), HarnessError> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `checkpoint{suffix}.json` and `history{suffix}.jsonl` into `dir`.
pub fn save_run(
    dir: &Path,
    suffix: &str,
    prepared: &Prepared,
    run: &RunOutcome,
    data_sha256: Option<&str>,
) -> Result<Vec<String>, HarnessError> {
    let mut ck = Checkpoint::new(&run.fit.model);
    ck.vocabularies = (0..prepared.dataset.schema().len())
        .map(|j| prepared.dataset.vocabulary(j).to_vec())
        .collect();
    ck.normalizer = Some(prepared.normalizer.clone());
    ck.split = Some(prepared.split.clone());
    ck.hyperparameters = serde_json::json!({
        "run": run.config,
        "best_epoch": run.fit.best_epoch,
        "data_sha256": data_sha256,
    });
    let ck_name = format!("checkpoint{suffix}.json");
    ck.save(&dir.join(&ck_name))?;
    let hist_name = format!("history{suffix}.jsonl");
    let mut buf = Vec::new();
    write_history(&mut buf, &run.fit.history).expect("in-memory write");
    write_file(&dir.join(&hist_name), &buf)?;
    Ok(vec![ck_name, hist_name])
}

/// `path` itself when it exists or is absolute, otherwise `path` under
/// `$HOPULAR_DATA_DIR` when that is set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("HOPULAR_DATA_DIR") {
        Some(dir) => Path::new(&dir).join(path),
        None => path.to_path_buf(),
    }
}
