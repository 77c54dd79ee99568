//! Dataset schemas and CSV ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum ColumnRole {
    Numeric,
    Categorical {
        values: Vec<String>,
        /// Adds one extra indicator for values outside `values` instead of
        /// failing the encode.
        #[serde(default)]
        other_bucket: bool,
    },
    Label,
    /// Present in the file but not a feature (row ids, difficulty scores, ...).
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub role: ColumnRole,
}

/// Raw label value → {-1 normal, +1 attack}.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelMap {
    pub negative: Vec<String>,
    pub positive: Vec<String>,
    /// Class for values in neither list; `None` rejects such rows.
    pub unmapped: Option<i8>,
}

impl LabelMap {
    pub fn map(&self, raw: &str) -> Option<i8> {
        if self.negative.iter().any(|v| v == raw) {
            Some(-1)
        } else if self.positive.iter().any(|v| v == raw) {
            Some(1)
        } else {
            self.unmapped
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: String,
    #[serde(default)]
    pub has_header: bool,
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub labels: LabelMap,
}

impl DatasetSchema {
    pub fn from_json(s: &str) -> Result<Self> {
        let schema: DatasetSchema = serde_json::from_str(s)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Load(format!("schema {}: {e}", path.display())))?;
        DatasetSchema::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let n_labels = self
            .columns
            .iter()
            .filter(|c| c.role == ColumnRole::Label)
            .count();
        if n_labels > 1 {
            return Err(Error::Config(format!(
                "schema `{}` has {n_labels} label columns",
                self.name
            )));
        }
        if n_labels == 1 && self.labels.negative.is_empty() && self.labels.positive.is_empty() {
            return Err(Error::Config(format!(
                "schema `{}` has a label column but no label mapping",
                self.name
            )));
        }
        if let Some(v) = self.labels.unmapped {
            if v != 1 && v != -1 {
                return Err(Error::Config(format!("unmapped label class {v} is not ±1")));
            }
        }
        for c in &self.columns {
            if let ColumnRole::Categorical { values, .. } = &c.role {
                if values.is_empty() {
                    return Err(Error::Config(format!(
                        "categorical column `{}` lists no values",
                        c.name
                    )));
                }
            }
        }
        if self.feature_columns().next().is_none() {
            return Err(Error::Config(format!(
                "schema `{}` has no features",
                self.name
            )));
        }
        Ok(())
    }

    pub fn label_column(&self) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.role == ColumnRole::Label)
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.role, ColumnRole::Numeric | ColumnRole::Categorical { .. }))
    }

    /// Width after one-hot encoding.
    pub fn encoded_width(&self) -> usize {
        self.feature_columns()
            .map(|(_, c)| match &c.role {
                ColumnRole::Categorical {
                    values,
                    other_bucket,
                } => values.len() + usize::from(*other_bucket),
                _ => 1,
            })
            .sum()
    }
}

/// Bundled schemas for the public intrusion-detection datasets.
pub fn bundled_schema(name: &str) -> Result<DatasetSchema> {
    let text = match name.to_ascii_lowercase().as_str() {
        "kdd" | "kdd99" | "kdd-41" => include_str!("../../schemas/kdd.json"),
        "nsl-kdd" | "nslkdd" | "nsl-kdd-41" => include_str!("../../schemas/nsl_kdd.json"),
        "unsw" | "unsw-nb15" | "unsw-42" => include_str!("../../schemas/unsw_nb15.json"),
        "n-baiot" | "nbaiot" | "n-baiot-115" => include_str!("../../schemas/n_baiot.json"),
        other => return Err(Error::Config(format!("no bundled schema named `{other}`"))),
    };
    DatasetSchema::from_json(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based line number in the file.
    pub line: u64,
    pub reason: String,
}

/// Parsed rows whose shape matches the schema.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub schema: DatasetSchema,
    pub rows: Vec<Vec<String>>,
    pub rejects: Vec<Reject>,
}

impl RawTable {
    /// Distinct values seen in a column, sorted.
    pub fn vocabulary(&self, column: usize) -> Vec<String> {
        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        for r in &self.rows {
            seen.insert(&r[column], ());
        }
        seen.into_keys().map(str::to_string).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Loading fails once `rejects / (rows + rejects)` reaches this.
    pub max_reject_fraction: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_reject_fraction: 0.01,
        }
    }
}

fn check_row(schema: &DatasetSchema, fields: &[String]) -> std::result::Result<(), String> {
    if fields.len() != schema.columns.len() {
        return Err(format!(
            "{} fields, schema has {} columns",
            fields.len(),
            schema.columns.len()
        ));
    }
    for (f, c) in fields.iter().zip(&schema.columns) {
        match &c.role {
            ColumnRole::Numeric => match f.parse::<f64>() {
                Ok(v) if v.is_finite() => {}
                _ => return Err(format!("column `{}`: `{f}` is not a finite number", c.name)),
            },
            ColumnRole::Label => {
                if schema.labels.map(f).is_none() {
                    return Err(format!("column `{}`: unmapped label `{f}`", c.name));
                }
            }
            ColumnRole::Categorical { .. } | ColumnRole::Ignore => {}
        }
    }
    Ok(())
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<RawTable> {
    load_csv_with(path, schema, LoadOptions::default())
}

pub fn load_csv_with(path: &Path, schema: &DatasetSchema, opts: LoadOptions) -> Result<RawTable> {
    schema.validate()?;
    let file =
        std::fs::File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    load_reader(file, schema, opts).map_err(|e| match e {
        Error::Load(msg) => Error::Load(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn load_reader<R: std::io::Read>(
    reader: R,
    schema: &DatasetSchema,
    opts: LoadOptions,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    if schema.has_header {
        let header = rdr
            .headers()
            .map_err(|e| Error::Load(format!("header: {e}")))?
            .clone();
        if header.is_empty() {
            return Err(Error::Load("file is empty".into()));
        }
        if header.len() != schema.columns.len() {
            return Err(Error::Load(format!(
                "header has {} columns, schema `{}` expects {}",
                header.len(),
                schema.name,
                schema.columns.len()
            )));
        }
    }

    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejects.push(Reject {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        // A trailing blank line parses as one empty field.
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let fields: Vec<String> = record.iter().map(str::to_string).collect();
        match check_row(schema, &fields) {
            Ok(()) => rows.push(fields),
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }

    let total = rows.len() + rejects.len();
    if total == 0 {
        return Err(Error::Load("file is empty".into()));
    }
    if !rejects.is_empty() && rejects.len() as f64 / total as f64 >= opts.max_reject_fraction {
        let lines: Vec<String> = rejects
            .iter()
            .take(10)
            .map(|r| r.line.to_string())
            .collect();
        return Err(Error::Load(format!(
            "{} of {total} rows malformed (lines {}{}); first: {}",
            rejects.len(),
            lines.join(", "),
            if rejects.len() > 10 { ", ..." } else { "" },
            rejects[0].reason
        )));
    }
    for r in &rejects {
        log::info!("rejected line {}: {}", r.line, r.reason);
    }
    Ok(RawTable {
        schema: schema.clone(),
        rows,
        rejects,
    })
}
