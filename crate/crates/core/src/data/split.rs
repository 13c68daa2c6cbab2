use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Task};

/// Row indices of the three partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    Fractions { train: f64, val: f64, test: f64 },
    Explicit(SplitIndices),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "val" | "validation" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(DataError::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl SplitIndices {
    pub fn part(&self, part: SplitPart) -> &[usize] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    /// Parses three sections headed `[train]`, `[val]` and `[test]`, each
    /// followed by zero-based row indices separated by whitespace or commas.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut sections: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = match name.trim() {
                    "train" => "train",
                    "val" | "validation" => "val",
                    "test" => "test",
                    other => {
                        return Err(DataError::Config(format!(
                            "unknown split section [{other}]"
                        )))
                    }
                };
                if sections.insert(name, Vec::new()).is_some() {
                    return Err(DataError::Config(format!("section [{name}] appears twice")));
                }
                current = Some(name);
                continue;
            }
            let section = current.ok_or_else(|| {
                DataError::Config(format!(
                    "split file line {}: index before any section header",
                    lineno + 1
                ))
            })?;
            for tok in line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
            {
                let idx = tok.parse().map_err(|_| {
                    DataError::Config(format!("split file line {}: bad index {tok:?}", lineno + 1))
                })?;
                sections.get_mut(section).expect("section exists").push(idx);
            }
        }
        let mut take = |name: &str| {
            sections
                .remove(name)
                .ok_or_else(|| DataError::Config(format!("split file lacks a [{name}] section")))
        };
        Ok(Self {
            train: take("train")?,
            val: take("val")?,
            test: take("test")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, idx) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            let _ = writeln!(out, "[{name}]");
            let line: Vec<String> = idx.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    /// Every row in exactly one partition, and no partition empty.
    pub fn validate(&self, n_rows: usize) -> Result<(), DataError> {
        for (name, idx) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            if idx.is_empty() {
                return Err(DataError::Config(format!("{name} split is empty")));
            }
        }
        let mut seen = vec![false; n_rows];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n_rows {
                return Err(DataError::Config(format!(
                    "row index {i} out of range for {n_rows} rows"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(DataError::Config(format!(
                    "row {i} assigned to more than one split"
                )));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(DataError::Config(format!(
                "row {i} is not assigned to any split"
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &s in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[s] += 1;
        left -= 1;
    }
    counts
}

/// Partitions the rows. Fraction splits are seeded and, for classification,
/// stratified: each class contributes `floor(n_c·f_s)` or one more row to
/// split `s`, while split sizes follow largest-remainder apportionment.
pub fn split(dataset: &Dataset, spec: &SplitSpec, seed: u64) -> Result<SplitIndices, DataError> {
    let n = dataset.len();
    let indices = match spec {
        SplitSpec::Explicit(idx) => idx.clone(),
        SplitSpec::Fractions { train, val, test } => {
            let fr = [*train, *val, *test];
            if fr.iter().any(|f| !(0.0..=1.0).contains(f))
                || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(DataError::Config(format!(
                    "split fractions {fr:?} must be in [0,1] and sum to 1"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut strata: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
            for i in 0..n {
                let key = match dataset.schema().task() {
                    Task::Classification => dataset.target_class(i),
                    Task::Regression => None,
                };
                strata.entry(key).or_default().push(i);
            }
            let targets = apportion(n, &fr);
            let mut assigned = [0usize; 3];
            let mut per_class: Vec<(Vec<usize>, [usize; 3], [f64; 3])> = Vec::new();
            for rows in strata.into_values() {
                let mut rows = rows;
                rows.shuffle(&mut rng);
                let exact: Vec<f64> = fr.iter().map(|f| f * rows.len() as f64).collect();
                let mut counts = [0usize; 3];
                for s in 0..3 {
                    counts[s] = exact[s].floor() as usize;
                    assigned[s] += counts[s];
                }
                let rem = [exact[0].fract(), exact[1].fract(), exact[2].fract()];
                per_class.push((rows, counts, rem));
            }
            // Hand out each class's leftover rows, one per split at most, to
            // the splits that are furthest below their target size.
            let mut order: Vec<usize> = (0..per_class.len()).collect();
            order.sort_by_key(|&c| {
                let (rows, counts, _) = &per_class[c];
                std::cmp::Reverse(rows.len() - counts.iter().sum::<usize>())
            });
            for c in order {
                let (rows, counts, rem) = &mut per_class[c];
                let leftover = rows.len() - counts.iter().sum::<usize>();
                let mut splits: Vec<usize> = (0..3).collect();
                splits.sort_by(|&a, &b| {
                    let da = targets[a] as i64 - assigned[a] as i64;
                    let db = targets[b] as i64 - assigned[b] as i64;
                    db.cmp(&da).then(rem[b].total_cmp(&rem[a])).then(a.cmp(&b))
                });
                for &s in splits.iter().take(leftover) {
                    counts[s] += 1;
                    assigned[s] += 1;
                }
            }
            let mut out = SplitIndices {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            };
            for (rows, counts, _) in &per_class {
                out.train.extend_from_slice(&rows[..counts[0]]);
                out.val
                    .extend_from_slice(&rows[counts[0]..counts[0] + counts[1]]);
                out.test.extend_from_slice(&rows[counts[0] + counts[1]..]);
            }
            for part in [&mut out.train, &mut out.val, &mut out.test] {
                part.sort_unstable();
            }
            out
        }
    };
    indices.validate(n)?;
    Ok(indices)
}
