use serde::{Deserialize, Serialize};

use super::schema::{ColumnRole, DatasetSchema, RawTable};
use super::EncodedDataset;
use crate::nn::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnCodec {
    MinMax {
        column: usize,
        min: f64,
        max: f64,
    },
    OneHot {
        column: usize,
        values: Vec<String>,
        other_bucket: bool,
    },
}

/// Fitted feature encoding: one-hot categoricals, min-max scaled numerics.
///
/// Fit on the training portion, then reuse for any other rows of the same
/// schema. Values outside the fitted range are clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    schema: DatasetSchema,
    codecs: Vec<ColumnCodec>,
}

impl FeatureEncoder {
    pub fn fit(raw: &RawTable) -> Result<Self> {
        let schema = &raw.schema;
        let mut codecs = Vec::new();
        for (column, spec) in schema.feature_columns() {
            match &spec.role {
                ColumnRole::Numeric => {
                    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                    for r in &raw.rows {
                        let v = parse_numeric(&spec.name, &r[column])?;
                        min = min.min(v);
                        max = max.max(v);
                    }
                    codecs.push(ColumnCodec::MinMax { column, min, max });
                }
                ColumnRole::Categorical {
                    values,
                    other_bucket,
                } => codecs.push(ColumnCodec::OneHot {
                    column,
                    values: values.clone(),
                    other_bucket: *other_bucket,
                }),
                ColumnRole::Label | ColumnRole::Ignore => unreachable!("not a feature column"),
            }
        }
        Ok(FeatureEncoder {
            schema: schema.clone(),
            codecs,
        })
    }

    pub fn width(&self) -> usize {
        self.codecs
            .iter()
            .map(|c| match c {
                ColumnCodec::MinMax { .. } => 1,
                ColumnCodec::OneHot {
                    values,
                    other_bucket,
                    ..
                } => values.len() + usize::from(*other_bucket),
            })
            .sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for c in &self.codecs {
            match c {
                ColumnCodec::MinMax { column, .. } => {
                    names.push(self.schema.columns[*column].name.clone())
                }
                ColumnCodec::OneHot {
                    column,
                    values,
                    other_bucket,
                } => {
                    let base = &self.schema.columns[*column].name;
                    names.extend(values.iter().map(|v| format!("{base}={v}")));
                    if *other_bucket {
                        names.push(format!("{base}=<other>"));
                    }
                }
            }
        }
        names
    }

    pub fn transform(&self, raw: &RawTable) -> Result<EncodedDataset> {
        let width = self.width();
        let mut data = Vec::with_capacity(raw.rows.len() * width);
        for r in &raw.rows {
            for c in &self.codecs {
                match c {
                    ColumnCodec::MinMax { column, min, max } => {
                        let name = &self.schema.columns[*column].name;
                        let v = parse_numeric(name, &r[*column])?;
                        let span = max - min;
                        let scaled = if span > 0.0 {
                            ((v - min) / span).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        data.push(scaled);
                    }
                    ColumnCodec::OneHot {
                        column,
                        values,
                        other_bucket,
                    } => {
                        let raw_value = &r[*column];
                        let hit = values.iter().position(|v| v == raw_value);
                        let slot = match (hit, other_bucket) {
                            (Some(i), _) => i,
                            (None, true) => values.len(),
                            (None, false) => {
                                return Err(Error::Encode {
                                    column: self.schema.columns[*column].name.clone(),
                                    value: raw_value.clone(),
                                })
                            }
                        };
                        let start = data.len();
                        data.resize(start + values.len() + usize::from(*other_bucket), 0.0);
                        data[start + slot] = 1.0;
                    }
                }
            }
        }
        let x = Matrix::from_vec(raw.rows.len(), width, data)?;
        let y = match self.schema.label_column() {
            Some(col) => Some(
                raw.rows
                    .iter()
                    .map(|r| {
                        self.schema
                            .labels
                            .map(&r[col])
                            .ok_or_else(|| Error::Encode {
                                column: self.schema.columns[col].name.clone(),
                                value: r[col].clone(),
                            })
                    })
                    .collect::<Result<Vec<i8>>>()?,
            ),
            None => None,
        };
        let mut ds = EncodedDataset::new(&self.schema.name, x, y)?;
        ds.feature_names = self.feature_names();
        Ok(ds)
    }
}

fn parse_numeric(column: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Encode {
            column: column.to_string(),
            value: s.to_string(),
        })
}

/// Fits an encoder on `raw` and encodes it.
pub fn encode_features(raw: &RawTable) -> Result<(EncodedDataset, FeatureEncoder)> {
    let enc = FeatureEncoder::fit(raw)?;
    let ds = enc.transform(raw)?;
    Ok((ds, enc))
}
