use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for LabelColumn {
    /// Bare integers are column indices, anything else a header name.
    fn from(s: &str) -> Self {
        s.parse().map_or_else(|_| LabelColumn::Name(s.to_string()), LabelColumn::Index)
    }
}

/// Reads a headed CSV into features and labels.
///
/// Labels are mapped to class indices in order of first appearance; every
/// other column must be numeric.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let label_idx = match label_column {
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(format!("label column '{name}' not found")))?,
        LabelColumn::Index(i) if *i < headers.len() => *i,
        LabelColumn::Index(i) => {
            return Err(csv_err(format!(
                "label column index {i} not found ({} columns)",
                headers.len()
            )))
        }
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut classes: HashMap<String, usize> = HashMap::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        // header is line 1
        let line = r + 2;
        if record.len() != headers.len() {
            return Err(csv_err(format!(
                "row {line}: {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if c == label_idx {
                let next = classes.len();
                labels.push(*classes.entry(cell.to_string()).or_insert(next));
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                csv_err(format!("row {line}, column '{}': non-numeric value '{cell}'", headers[c]))
            })?;
            if !v.is_finite() {
                return Err(csv_err(format!("row {line}, column '{}': non-finite value", headers[c])));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(csv_err("no data rows".into()));
    }
    let features = Matrix::new(labels.len(), headers.len() - 1, values)?;
    let mut ds = Dataset::new(features, labels, classes.len())?;
    ds.feature_names = Some(
        headers
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, h)| h)
            .collect(),
    );
    Ok(ds)
}
