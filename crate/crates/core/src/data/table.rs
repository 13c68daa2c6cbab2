use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttributeKind, DataError, TableSchema};

/// A typed cell of the raw table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RawValue {
    Category(usize),
    Number(f64),
    Missing,
}

/// Typed rows plus the token vocabulary of every categorical attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: TableSchema,
    rows: Vec<Vec<RawValue>>,
    vocabularies: Vec<Vec<String>>,
}

fn numeric_aware_cmp(a: &String, b: &String) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

impl Dataset {
    pub fn load(table: &Path, schema: &Path) -> Result<Self, DataError> {
        let schema = TableSchema::from_file(schema)?;
        let text = std::fs::read_to_string(table).map_err(|source| DataError::Io {
            path: table.display().to_string(),
            source,
        })?;
        Self::parse(&text, schema)
    }

    /// Parses comma-separated text with a header row naming every schema
    /// attribute in order. Empty fields are missing values.
    ///
    /// Categorical tokens map through the schema vocabulary when one is given;
    /// otherwise the distinct tokens (at most `cardinality`) are sorted and
    /// numbered.
    pub fn parse(text: &str, schema: TableSchema) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| DataError::Schema(format!("cannot read header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let names: Vec<&str> = schema
            .attributes()
            .iter()
            .map(|a| a.name.as_str())
            .collect();
        if header != names {
            return Err(DataError::Schema(format!(
                "header {header:?} does not match schema attributes {names:?}"
            )));
        }

        let mut cells: Vec<Vec<String>> = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| DataError::Parse {
                row,
                column: String::new(),
                message: e.to_string(),
            })?;
            if record.len() != names.len() {
                return Err(DataError::Parse {
                    row,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", names.len(), record.len()),
                });
            }
            cells.push(record.iter().map(str::to_string).collect());
        }

        let mut vocabularies = Vec::with_capacity(schema.len());
        for (j, attr) in schema.attributes().iter().enumerate() {
            let vocab = match (attr.kind, &attr.vocabulary) {
                (AttributeKind::Continuous, _) => Vec::new(),
                (AttributeKind::Categorical { .. }, Some(v)) => v.clone(),
                (AttributeKind::Categorical { cardinality }, None) => {
                    let mut seen: Vec<String> = Vec::new();
                    for (row, r) in cells.iter().enumerate() {
                        let tok = &r[j];
                        if tok.is_empty() || seen.contains(tok) {
                            continue;
                        }
                        if seen.len() == cardinality {
                            return Err(DataError::UnknownCategory {
                                row,
                                column: attr.name.clone(),
                                token: tok.clone(),
                            });
                        }
                        seen.push(tok.clone());
                    }
                    seen.sort_by(numeric_aware_cmp);
                    seen
                }
            };
            vocabularies.push(vocab);
        }

        let lookups: Vec<HashMap<&str, usize>> = vocabularies
            .iter()
            .map(|v| v.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect())
            .collect();
        let mut rows = Vec::with_capacity(cells.len());
        for (row, r) in cells.iter().enumerate() {
            let mut typed = Vec::with_capacity(r.len());
            for (j, (tok, attr)) in r.iter().zip(schema.attributes()).enumerate() {
                let v = if tok.is_empty() {
                    RawValue::Missing
                } else {
                    match attr.kind {
                        AttributeKind::Continuous => {
                            let x: f64 = tok.parse().map_err(|_| DataError::Parse {
                                row,
                                column: attr.name.clone(),
                                message: format!("cannot parse {tok:?} as a number"),
                            })?;
                            if !x.is_finite() {
                                return Err(DataError::Parse {
                                    row,
                                    column: attr.name.clone(),
                                    message: format!("non-finite value {tok:?}"),
                                });
                            }
                            RawValue::Number(x)
                        }
                        AttributeKind::Categorical { .. } => {
                            let k = lookups[j].get(tok.as_str()).ok_or_else(|| {
                                DataError::UnknownCategory {
                                    row,
                                    column: attr.name.clone(),
                                    token: tok.clone(),
                                }
                            })?;
                            RawValue::Category(*k)
                        }
                    }
                };
                typed.push(v);
            }
            rows.push(typed);
        }
        Ok(Self {
            schema,
            rows,
            vocabularies,
        })
    }

    /// Builds a dataset from already-typed rows.
    pub fn from_rows(schema: TableSchema, rows: Vec<Vec<RawValue>>) -> Result<Self, DataError> {
        let mut vocabularies = Vec::with_capacity(schema.len());
        for attr in schema.attributes() {
            vocabularies.push(match (attr.kind, &attr.vocabulary) {
                (AttributeKind::Categorical { .. }, Some(v)) => v.clone(),
                (AttributeKind::Categorical { cardinality }, None) => {
                    (0..cardinality).map(|k| k.to_string()).collect()
                }
                (AttributeKind::Continuous, _) => Vec::new(),
            });
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != schema.len() {
                return Err(DataError::Parse {
                    row,
                    column: String::new(),
                    message: format!("expected {} values, found {}", schema.len(), r.len()),
                });
            }
            for (v, attr) in r.iter().zip(schema.attributes()) {
                let ok = match (v, attr.kind) {
                    (RawValue::Missing, _) => true,
                    (RawValue::Number(x), AttributeKind::Continuous) => x.is_finite(),
                    (RawValue::Category(k), AttributeKind::Categorical { cardinality }) => {
                        *k < cardinality
                    }
                    _ => false,
                };
                if !ok {
                    return Err(DataError::Parse {
                        row,
                        column: attr.name.clone(),
                        message: format!("value {v:?} does not fit the attribute kind"),
                    });
                }
            }
        }
        Ok(Self {
            schema,
            rows,
            vocabularies,
        })
    }

    /// Writes the table back in the accepted CSV format.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.schema.attributes().iter().map(|a| a.name.as_str()))
            .expect("in-memory write");
        for r in &self.rows {
            let fields: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, v)| match v {
                    RawValue::Missing => String::new(),
                    RawValue::Number(x) => format!("{x:?}"),
                    RawValue::Category(k) => self.vocabularies[j][*k].clone(),
                })
                .collect();
            w.write_record(&fields).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<RawValue>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[RawValue] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn vocabulary(&self, j: usize) -> &[String] {
        &self.vocabularies[j]
    }

    /// Target value of row `i` when it is a category.
    pub fn target_class(&self, i: usize) -> Option<usize> {
        match self.rows[i][self.schema.target()] {
            RawValue::Category(k) => Some(k),
            _ => None,
        }
    }
}
