//! Dataset ingestion, encoding, vertical splitting and synthetic data.

mod encode;
mod schema;
mod split;
mod synthetic;

use std::path::Path;

pub use encode::{encode_features, FeatureEncoder};
pub use schema::{
    bundled_schema, load_csv, load_csv_with, load_reader, ColumnRole, ColumnSpec, DatasetSchema,
    LabelMap, LoadOptions, RawTable, Reject,
};
pub use split::{
    feature_permutation, overlap_count, vertical_split, PartyViews, SealedLabels, SplitPlan,
};
pub use synthetic::{gen_synthetic, preset, SyntheticPreset, SyntheticSpec, PRESETS};

use crate::nn::Matrix;
use crate::{Error, Result};

/// Numeric feature matrix with optional ±1 labels (+1 = attack).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub name: String,
    pub x: Matrix,
    pub y: Option<Vec<i8>>,
    pub feature_names: Vec<String>,
}

impl EncodedDataset {
    pub fn new(name: &str, x: Matrix, y: Option<Vec<i8>>) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!(
                "dataset `{name}` has non-finite entries"
            )));
        }
        if let Some(y) = &y {
            if y.len() != x.rows() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} rows",
                    y.len(),
                    x.rows()
                )));
            }
            if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
                return Err(Error::Label(f64::from(bad)));
            }
        }
        let feature_names = (0..x.cols()).map(|f| format!("f{f}")).collect();
        Ok(EncodedDataset {
            name: name.to_string(),
            x,
            y,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Rows and columns picked out in the given order.
    pub fn subset(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows)?.select_cols(cols)?;
        let y = self
            .y
            .as_ref()
            .map(|y| rows.iter().map(|&r| y[r]).collect());
        Ok(EncodedDataset {
            name: self.name.clone(),
            x,
            y,
            feature_names: cols
                .iter()
                .map(|&c| self.feature_names[c].clone())
                .collect(),
        })
    }

    /// Writes `features..., label` with a header row, labels as
    /// `attack`/`normal`. [`EncodedDataset::csv_schema`] describes the file.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
        let mut header = self.feature_names.clone();
        if self.y.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
        for (i, row) in self.x.iter_rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(y) = &self.y {
                rec.push(if y[i] == 1 { "attack" } else { "normal" }.into());
            }
            w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Schema matching the output of [`EncodedDataset::write_csv`].
    pub fn csv_schema(&self) -> DatasetSchema {
        let mut columns: Vec<ColumnSpec> = self
            .feature_names
            .iter()
            .map(|n| ColumnSpec {
                name: n.clone(),
                role: ColumnRole::Numeric,
            })
            .collect();
        if self.y.is_some() {
            columns.push(ColumnSpec {
                name: "label".into(),
                role: ColumnRole::Label,
            });
        }
        DatasetSchema {
            name: self.name.clone(),
            has_header: true,
            columns,
            labels: LabelMap {
                negative: vec!["normal".into()],
                positive: vec!["attack".into()],
                unmapped: None,
            },
        }
    }
}

/// Loads a CSV file with its schema and encodes it in one step.
pub fn load_encoded(path: &Path, schema: &DatasetSchema) -> Result<EncodedDataset> {
    let raw = load_csv(path, schema)?;
    Ok(encode_features(&raw)?.0)
}
