//! The `hopular` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checks::model_gradcheck;
use super::oracles::{adaboost_suite, nw_suite};
use super::run::write_file;
use super::{
    baseline_metrics, grid_search, report, resolve_data_path, save_run, sha256_file, train_run,
    HarnessError, Manifest, Prepared, RunConfig,
};
use crate::data::{Dataset, SplitIndices, SplitPart, TableSchema};
use crate::hopfield::{
    ball_point, sphere_patterns, storage_capacity_bound, CapacityParams, PatternMemory,
    FIXED_POINT_MAX_ITER, FIXED_POINT_TOL,
};
use crate::model::Checkpoint;
use crate::tensor::Tensor;
use crate::training::evaluate;

#[derive(Debug, Parser)]
#[command(
    name = "hopular",
    version,
    about = "Modern Hopfield networks for tabular data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a table, write checkpoint(s), history and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a table.
    Evaluate(EvaluateArgs),
    /// Print the storage-capacity constants and bound.
    CapacityCheck(CapacityArgs),
    /// Iterate the Hopfield update from a query to a fixed point.
    Retrieve(RetrieveArgs),
    /// Compare analytic and numeric gradients of the training loss.
    Gradcheck(GradcheckArgs),
    /// Compare a sample-sample head with Nadaraya-Watson regression.
    OracleNw(OracleArgs),
    /// Compare the AdaBoost gradient with its Hopfield form.
    OracleAdaboost(OracleArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// CSV table with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema file; defaults to the table path with a `.schema` extension.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split file with `[train]`, `[val]` and `[test]` sections.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Search the (L, M, β-scale) grid on the validation split first.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, default_value = "hopular-run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split file; defaults to the split stored in the checkpoint.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub part: SplitPart,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long = "K", default_value_t = 3.0)]
    pub k: f64,
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 0.001)]
    pub p: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Headerless CSV with one pattern per row; random sphere patterns otherwise.
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    /// Comma-separated query; defaults to a perturbed first pattern.
    #[arg(long, allow_hyphen_values = true)]
    pub query: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Distance of the default query from the first pattern.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status: 0 on success, 1 on a failed run or check, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let raw: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(cli.command, raw) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            1
        }
    }
}

fn dispatch(command: Command, raw: Vec<String>) -> Result<bool, HarnessError> {
    match command {
        Command::Train(a) => train(a, raw),
        Command::Evaluate(a) => evaluate_cmd(a, raw),
        Command::CapacityCheck(a) => capacity(a, raw),
        Command::Retrieve(a) => retrieve(a, raw),
        Command::Gradcheck(a) => gradcheck(a, raw),
        Command::OracleNw(a) => oracle_nw(a, raw),
        Command::OracleAdaboost(a) => oracle_adaboost(a, raw),
    }
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn finish(manifest: &Manifest, out: Option<&Path>) -> Result<(), HarnessError> {
    if let Some(dir) = out {
        create_dir(dir)?;
        manifest.write(dir)?;
    }
    Ok(())
}

fn train(a: TrainArgs, raw: Vec<String>) -> Result<bool, HarnessError> {
    let data = resolve_data_path(&a.data);
    let schema_path = match &a.schema {
        Some(s) => resolve_data_path(s),
        None => data.with_extension("schema"),
    };
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if a.replicates == 0 {
        return Err(HarnessError::Config(
            "--replicates must be at least 1".into(),
        ));
    }
    let dataset = Dataset::load(&data, &schema_path)?;
    let prepared = match &a.split {
        Some(p) => Prepared::new(dataset, SplitIndices::load(p)?)?,
        None => Prepared::with_fractions(dataset, cfg.split, cfg.seed)?,
    };
    let constant = prepared
        .normalizer
        .constant_columns(prepared.dataset.schema());
    if !constant.is_empty() {
        eprintln!("warning: constant training columns {constant:?} are encoded as 0");
    }
    create_dir(&a.out)?;
    let mut manifest = Manifest::new("train", raw);
    manifest.add_input(&data)?;
    manifest.add_input(&schema_path)?;
    if let Some(p) = &a.config {
        manifest.add_input(p)?;
    }
    if let Some(p) = &a.split {
        manifest.add_input(p)?;
    }
    let data_sha = sha256_file(&data)?;

    if a.grid {
        let points = grid_search(&prepared, &cfg)?;
        let mut lines = String::new();
        for p in &points {
            lines.push_str(&serde_json::to_string(p).expect("grid point serializes"));
            lines.push('\n');
        }
        write_file(&a.out.join("grid.jsonl"), lines.as_bytes())?;
        manifest.outputs.push("grid.jsonl".into());
        cfg = points[0].config.clone();
        println!(
            "grid: selected L = {}, M = {}, beta scale = {} (validation {} = {:.4})",
            cfg.blocks,
            cfg.heads,
            cfg.beta_scale,
            super::metrics::metric_name(prepared.dataset.schema().task()),
            points[0].val_metric
        );
    }
    manifest.seed = Some(cfg.seed);
    manifest.config = Some(cfg.clone());
    write_file(&a.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    write_file(
        &a.out.join("split.txt"),
        prepared.split.to_text().as_bytes(),
    )?;
    manifest
        .outputs
        .extend(["config.toml".into(), "split.txt".into()]);

    let mut runs = Vec::with_capacity(a.replicates);
    for r in 0..a.replicates {
        let c = RunConfig {
            seed: cfg.seed + r as u64,
            ..cfg.clone()
        };
        let run = train_run(&prepared, &c, |_| {})?;
        let suffix = if r == 0 {
            String::new()
        } else {
            format!("-{r}")
        };
        manifest
            .outputs
            .extend(save_run(&a.out, &suffix, &prepared, &run, Some(&data_sha))?);
        println!(
            "replicate {r} (seed {}): best epoch {} of {}, validation {:.4}, test {:.4}",
            c.seed,
            run.fit.best_epoch,
            run.fit.history.len(),
            run.val_metric,
            run.test_metric
        );
        runs.push(run);
    }
    let metrics = report(&prepared, &runs);
    let (knn1, majority) = baseline_metrics(&prepared)?;
    println!("test {metrics}");
    println!("baselines: 1-NN {knn1:.4}, majority {majority:.4}");
    let results = serde_json::json!({
        "test": metrics,
        "baselines": { "knn1": knn1, "majority": majority },
    });
    write_file(
        &a.out.join("metrics.json"),
        serde_json::to_string_pretty(&results)
            .expect("metrics serialize")
            .as_bytes(),
    )?;
    manifest.outputs.push("metrics.json".into());
    manifest.results = results;
    manifest.write(&a.out)?;
    Ok(true)
}

fn evaluate_cmd(a: EvaluateArgs, raw: Vec<String>) -> Result<bool, HarnessError> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.model()?;
    let data = resolve_data_path(&a.data);
    // Pin the training vocabularies so tokens map to the same indices.
    let mut attributes = ck.schema.attributes().to_vec();
    for (attr, vocab) in attributes.iter_mut().zip(&ck.vocabularies) {
        if attr.is_categorical() && attr.vocabulary.is_none() && !vocab.is_empty() {
            attr.vocabulary = Some(vocab.clone());
        }
    }
    let text = std::fs::read_to_string(&data).map_err(|source| HarnessError::Io {
        path: data.display().to_string(),
        source,
    })?;
    let dataset = Dataset::parse(&text, TableSchema::new(attributes)?)?;
    let expected = ck
        .hyperparameters
        .get("data_sha256")
        .and_then(|v| v.as_str());
    let actual = sha256_file(&data)?;
    if expected.is_some_and(|e| e != actual) {
        eprintln!(
            "warning: {} differs from the table the checkpoint was trained on",
            data.display()
        );
    }
    let split = match (&a.split, &ck.split) {
        (Some(p), _) => SplitIndices::load(p)?,
        (None, Some(s)) => s.clone(),
        (None, None) => {
            return Err(HarnessError::Config(
                "checkpoint has no split; pass --split".into(),
            ))
        }
    };
    split.validate(dataset.len())?;
    let normalizer = ck
        .normalizer
        .clone()
        .ok_or_else(|| HarnessError::Config("checkpoint has no normalization statistics".into()))?;
    let train = normalizer.encode_rows(&dataset, &split.train)?;
    let rows = normalizer.encode_rows(&dataset, split.part(a.part))?;
    let eval = evaluate(&model, &train, &rows)?;
    let value = super::metrics::split_metric(model.schema(), &normalizer, &rows, &eval.predictions);
    let name = super::metrics::metric_name(model.schema().task());
    println!(
        "{name} = {value:.6} on {} {:?} rows (target loss {:.6})",
        rows.len(),
        a.part,
        eval.loss
    );
    let mut manifest = Manifest::new("evaluate", raw);
    manifest.add_input(&a.checkpoint)?;
    manifest.add_input(&data)?;
    manifest.results = serde_json::json!({ "metric": name, "value": value, "loss": eval.loss, "rows": rows.len() });
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let preds = serde_json::to_string(&eval.predictions).expect("predictions serialize");
        write_file(&dir.join("predictions.json"), preds.as_bytes())?;
        manifest.outputs.push("predictions.json".into());
    }
    finish(&manifest, a.out.as_deref())?;
    Ok(true)
}

fn capacity(a: CapacityArgs, raw: Vec<String>) -> Result<bool, HarnessError> {
    let cp = CapacityParams::new(a.p, a.k, a.d, a.beta)?;
    println!("a = {:.6}", cp.a);
    println!("b = {:.6}", cp.b);
    println!("c = {:.6}", cp.c);
    println!("a + ln b = {:.6}", cp.log_argument());
    println!("threshold = {:.6}", cp.threshold());
    println!("radius = {:.6}", cp.radius());
    let bound = storage_capacity_bound(&cp);
    let ok = bound.is_ok();
    match &bound {
        Ok(n) => println!("N = {n:.6}"),
        Err(e) => println!("no bound: {e}"),
    }
    let mut manifest = Manifest::new("capacity-check", raw);
    manifest.results = serde_json::json!({
        "a": cp.a, "b": cp.b, "c": cp.c, "log_argument": cp.log_argument(),
        "threshold": cp.threshold(), "bound": bound.ok(),
    });
    finish(&manifest, a.out.as_deref())?;
    Ok(ok)
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>, HarnessError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("{what}: cannot parse {t:?}")))
        })
        .collect()
}

fn retrieve(a: RetrieveArgs, raw: Vec<String>) -> Result<bool, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut manifest = Manifest::new("retrieve", raw);
    manifest.seed = Some(a.seed);
    let patterns = match &a.patterns {
        Some(p) => {
            manifest.add_input(p)?;
            let text = std::fs::read_to_string(p).map_err(|source| HarnessError::Io {
                path: p.display().to_string(),
                source,
            })?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| parse_floats(l, "pattern"))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => sphere_patterns(a.d, a.n, ((a.d.max(2) - 1) as f64).sqrt(), &mut rng),
    };
    let mem = PatternMemory::from_patterns(&patterns, a.beta)?;
    let query = match &a.query {
        Some(q) => parse_floats(q, "query")?,
        None => {
            let dir = ball_point(&vec![0.0; patterns[0].len()], 1.0, &mut rng);
            let n = dir
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            patterns[0]
                .iter()
                .zip(&dir)
                .map(|(p, v)| p + a.noise * v / n)
                .collect()
        }
    };
    let res = mem.retrieve(
        &Tensor::vector(query),
        FIXED_POINT_TOL,
        FIXED_POINT_MAX_ITER,
    )?;
    let nearest = (0..mem.len())
        .map(|i| {
            (
                res.xi_star
                    .sub(&mem.pattern(i))
                    .map(|d| d.norm())
                    .unwrap_or(f64::INFINITY),
                i,
            )
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("memory is non-empty");
    println!(
        "iterations = {}, converged = {}, final step = {:.3e}",
        res.iterations, res.converged, res.final_delta
    );
    println!(
        "energy {:.6} -> {:.6}",
        res.energies[0],
        res.energies.last().copied().unwrap_or(f64::NAN)
    );
    println!(
        "nearest pattern {} at distance {:.6e}",
        nearest.1, nearest.0
    );
    manifest.results = serde_json::json!({
        "iterations": res.iterations, "converged": res.converged, "energies": res.energies,
        "fixed_point": res.xi_star.data(), "nearest_pattern": nearest.1, "distance": nearest.0,
    });
    finish(&manifest, a.out.as_deref())?;
    Ok(res.converged)
}

fn gradcheck(a: GradcheckArgs, raw: Vec<String>) -> Result<bool, HarnessError> {
    let r = model_gradcheck(a.seed, a.eps)?;
    let ok = r.max_rel_error < a.tol;
    println!(
        "max relative error {:.3e} over {} entries (worst: input {}, element {}; analytic {:.6e}, numeric {:.6e}) {}",
        r.max_rel_error,
        r.checked,
        r.worst.0,
        r.worst.1,
        r.analytic,
        r.numeric,
        if ok { "ok" } else { "FAILED" }
    );
    let mut manifest = Manifest::new("gradcheck", raw);
    manifest.seed = Some(a.seed);
    manifest.results =
        serde_json::json!({ "max_rel_error": r.max_rel_error, "checked": r.checked, "passed": ok });
    finish(&manifest, a.out.as_deref())?;
    Ok(ok)
}

const NW_TOL: f64 = 1e-10;
const FD_TOL: f64 = 1e-6;

fn oracle_nw(a: OracleArgs, raw: Vec<String>) -> Result<bool, HarnessError> {
    let s = nw_suite(a.cases, a.seed, a.beta)?;
    let ok = s.max_deviation < NW_TOL;
    println!(
        "{} cases, max |H_s - NW| = {:.3e} {}",
        s.cases,
        s.max_deviation,
        if ok { "ok" } else { "FAILED" }
    );
    let mut manifest = Manifest::new("oracle-nw", raw);
    manifest.seed = Some(a.seed);
    manifest.results = serde_json::json!({ "summary": s, "passed": ok });
    finish(&manifest, a.out.as_deref())?;
    Ok(ok)
}

fn oracle_adaboost(a: OracleArgs, raw: Vec<String>) -> Result<bool, HarnessError> {
    let s = adaboost_suite(a.cases, a.seed, a.beta)?;
    let ok = s.max_deviation < NW_TOL && s.max_fd_relative < FD_TOL;
    println!(
        "{} cases, max |grad - (-H_s(-xi))| = {:.3e}, max relative finite-difference error = {:.3e} {}",
        s.cases,
        s.max_deviation,
        s.max_fd_relative,
        if ok { "ok" } else { "FAILED" }
    );
    let mut manifest = Manifest::new("oracle-adaboost", raw);
    manifest.seed = Some(a.seed);
    manifest.results = serde_json::json!({ "summary": s, "passed": ok });
    finish(&manifest, a.out.as_deref())?;
    Ok(ok)
}
