//! Versioned JSON model files (`.hsmodel.json`).
//!
//! Dictionaries are stored dense and column-major together with each
//! column's stored rows, so a loaded model keeps the exact sparsity pattern
//! training will respect. Floats are written in shortest round-trip form
//! on a single compact line.

use std::path::Path;

use hydrosep_core::shapes::Span;
use hydrosep_core::{AggregateModel, Device, DeviceModel, Dictionary};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const EXTENSION: &str = ".hsmodel.json";
/// Allowed deviation of a stored column norm from one.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDictionary {
    pub rows: usize,
    pub cols: usize,
    /// Dense values, column-major.
    pub values: Vec<f64>,
    /// Stored rows of each column.
    pub support: Vec<Vec<usize>>,
    /// Columns that are all zero.
    pub zero_columns: Vec<usize>,
}

impl StoredDictionary {
    pub fn from_dictionary(d: &Dictionary) -> Self {
        let (rows, cols) = (d.rows(), d.cols());
        let mut values = vec![0.0; rows * cols];
        let mut support = Vec::with_capacity(cols);
        for j in 0..cols {
            let (idx, vals) = d.column(j);
            for (&i, &v) in idx.iter().zip(vals) {
                values[j * rows + i] = v;
            }
            support.push(idx.to_vec());
        }
        StoredDictionary {
            rows,
            cols,
            values,
            support,
            zero_columns: d.zero_columns(),
        }
    }

    pub fn to_dictionary(&self, path: &Path) -> Result<Dictionary> {
        if self.values.len() != self.rows * self.cols || self.support.len() != self.cols {
            return Err(Error::schema(
                path,
                format!(
                    "dictionary of {}x{} has {} values",
                    self.rows,
                    self.cols,
                    self.values.len()
                ),
            ));
        }
        let mut d = Dictionary::empty(self.rows);
        for (j, rows) in self.support.iter().enumerate() {
            let col = &self.values[j * self.rows..(j + 1) * self.rows];
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.last().is_some_and(|&i| i >= self.rows)
            {
                return Err(Error::schema(
                    path,
                    format!("column {j} has an invalid support"),
                ));
            }
            let off_support = col
                .iter()
                .enumerate()
                .any(|(i, v)| *v != 0.0 && rows.binary_search(&i).is_err());
            if off_support {
                return Err(Error::schema(
                    path,
                    format!("column {j} has values outside its support"),
                ));
            }
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let flagged = self.zero_columns.contains(&j);
            if flagged && norm != 0.0 || !flagged && (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::schema(path, format!("column {j} has norm {norm}")));
            }
            d.push_column(rows.iter().map(|&i| (i, col[i])));
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub device: String,
    pub b: f64,
    pub alpha0: f64,
    pub beta0: f64,
    /// Event durations seen for the device; empty when unknown.
    pub span: Vec<usize>,
    pub dictionary: StoredDictionary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundEntry {
    pub devices: Vec<String>,
    pub block_widths: Vec<usize>,
    pub b_per_device: Vec<f64>,
    pub alpha0_bar: f64,
    pub beta0_bar: f64,
    pub dictionary: StoredDictionary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub devices: Vec<DeviceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compound: Option<CompoundEntry>,
}

impl ModelFile {
    pub fn new(models: &[(DeviceModel, Option<Span>)]) -> Self {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            devices: models
                .iter()
                .map(|(m, span)| DeviceEntry {
                    device: m.device.label().to_string(),
                    b: m.b,
                    alpha0: m.alpha0,
                    beta0: m.beta0,
                    span: span.as_ref().map(Span::to_vec).unwrap_or_default(),
                    dictionary: StoredDictionary::from_dictionary(&m.dictionary),
                })
                .collect(),
            compound: None,
        }
    }

    pub fn set_compound(&mut self, agg: &AggregateModel) {
        self.compound = Some(CompoundEntry {
            devices: agg.devices.iter().map(|d| d.label().to_string()).collect(),
            block_widths: agg.block_widths.clone(),
            b_per_device: agg.b_per_device.clone(),
            alpha0_bar: agg.alpha0_bar,
            beta0_bar: agg.beta0_bar,
            dictionary: StoredDictionary::from_dictionary(&agg.dictionary),
        });
    }

    pub fn device_models(&self, path: &Path) -> Result<Vec<DeviceModel>> {
        self.devices
            .iter()
            .map(|e| {
                Ok(DeviceModel {
                    device: parse_device(&e.device, path)?,
                    dictionary: e.dictionary.to_dictionary(path)?,
                    b: e.b,
                    alpha0: e.alpha0,
                    beta0: e.beta0,
                })
            })
            .collect()
    }

    pub fn compound_model(&self, path: &Path) -> Result<Option<AggregateModel>> {
        let Some(c) = &self.compound else {
            return Ok(None);
        };
        let devices = c
            .devices
            .iter()
            .map(|d| parse_device(d, path))
            .collect::<Result<Vec<Device>>>()?;
        let dict = c.dictionary.to_dictionary(path)?;
        let agg = AggregateModel::from_parts(
            dict,
            devices,
            c.block_widths.clone(),
            c.b_per_device.clone(),
            c.alpha0_bar,
            c.beta0_bar,
        )
        .map_err(|e| Error::schema(path, e.to_string()))?;
        Ok(Some(agg))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text =
            serde_json::to_string(self).map_err(|e| Error::schema(path, e.to_string()))?;
        text.push('\n');
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses and validates model text; `path` names the source in errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let version: Version = serde_json::from_str(text)
            .map_err(|e| Error::schema(path, format!("corrupt model file: {e}")))?;
        if version.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                path,
                format!(
                    "schema version {} is not supported (expected {SCHEMA_VERSION})",
                    version.schema_version
                ),
            ));
        }
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::schema(path, format!("corrupt model file: {e}")))?;
        file.device_models(path)?;
        file.compound_model(path)?;
        Ok(file)
    }
}

fn parse_device(label: &str, path: &Path) -> Result<Device> {
    label
        .parse()
        .map_err(|_| Error::schema(path, format!("unknown device `{label}`")))
}
