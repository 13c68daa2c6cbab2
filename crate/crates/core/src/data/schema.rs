use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttributeKind {
    Categorical { cardinality: usize },
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    pub is_target: bool,
    /// Optional fixed token list for a categorical attribute; token `k` maps to index `k`.
    pub vocabulary: Option<Vec<String>>,
}

impl Attribute {
    pub fn cardinality(&self) -> Option<usize> {
        match self.kind {
            AttributeKind::Categorical { cardinality } => Some(cardinality),
            AttributeKind::Continuous => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, AttributeKind::Categorical { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
    Regression,
}

/// Ordered attribute descriptors with exactly one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    attributes: Vec<Attribute>,
    target: usize,
}

impl TableSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self, DataError> {
        let targets: Vec<usize> = attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_target)
            .map(|(i, _)| i)
            .collect();
        if targets.len() != 1 {
            return Err(DataError::Schema(format!(
                "exactly one target attribute required, found {}",
                targets.len()
            )));
        }
        for a in &attributes {
            if let AttributeKind::Categorical { cardinality } = a.kind {
                if cardinality < 2 {
                    return Err(DataError::Schema(format!(
                        "attribute {}: cardinality must be at least 2, got {cardinality}",
                        a.name
                    )));
                }
                if let Some(v) = &a.vocabulary {
                    if v.len() != cardinality {
                        return Err(DataError::Schema(format!(
                            "attribute {}: vocabulary has {} tokens but cardinality is {cardinality}",
                            a.name,
                            v.len()
                        )));
                    }
                }
            }
        }
        for (i, a) in attributes.iter().enumerate() {
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(DataError::Schema(format!(
                    "duplicate attribute name {}",
                    a.name
                )));
            }
        }
        Ok(Self {
            target: targets[0],
            attributes,
        })
    }

    /// Parses `name,kind[,cardinality],is_target[,tok|tok|...]` lines.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut attributes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| DataError::Schema(format!("schema line {}: {msg}", lineno + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let name = fields[0].to_string();
            if name.is_empty() {
                return Err(err("empty attribute name".into()));
            }
            let kind = fields.get(1).copied().unwrap_or("");
            let (kind, rest) = match kind {
                "categorical" => {
                    let card = fields
                        .get(2)
                        .ok_or_else(|| err("categorical attribute needs a cardinality".into()))?;
                    let cardinality = card
                        .parse()
                        .map_err(|_| err(format!("bad cardinality {card:?}")))?;
                    (AttributeKind::Categorical { cardinality }, &fields[3..])
                }
                "continuous" => (AttributeKind::Continuous, &fields[2..]),
                other => return Err(err(format!("unknown kind {other:?}"))),
            };
            let is_target = match rest.first().copied() {
                Some("true") => true,
                Some("false") => false,
                other => {
                    return Err(err(format!(
                        "is_target must be true or false, got {other:?}"
                    )))
                }
            };
            let vocabulary = match (rest.get(1), kind) {
                (None, _) => None,
                (Some(tokens), AttributeKind::Categorical { .. }) => {
                    Some(tokens.split('|').map(|t| t.trim().to_string()).collect())
                }
                (Some(_), AttributeKind::Continuous) => {
                    return Err(err("continuous attributes take no vocabulary".into()))
                }
            };
            if rest.len() > 2 {
                return Err(err("too many fields".into()));
            }
            attributes.push(Attribute {
                name,
                kind,
                is_target,
                vocabulary,
            });
        }
        Self::new(attributes)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Canonical text form, parseable by [`Self::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.attributes {
            out.push_str(&a.name);
            match a.kind {
                AttributeKind::Categorical { cardinality } => {
                    let _ = write!(out, ",categorical,{cardinality}");
                }
                AttributeKind::Continuous => out.push_str(",continuous"),
            }
            let _ = write!(out, ",{}", a.is_target);
            if let Some(v) = &a.vocabulary {
                let _ = write!(out, ",{}", v.join("|"));
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, j: usize) -> &Attribute {
        &self.attributes[j]
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn task(&self) -> Task {
        if self.attributes[self.target].is_categorical() {
            Task::Classification
        } else {
            Task::Regression
        }
    }
}
