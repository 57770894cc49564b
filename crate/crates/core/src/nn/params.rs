use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Ordered, named parameter tensors. Order is the layer order of the owning
/// model, weight before bias, and is preserved by every operation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Matrix)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Matrix) {
        self.entries.push((name.into(), tensor));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Matrix)] {
        &self.entries
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Matrix> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Matrix {
        &mut self.entries[index].1
    }

    pub fn into_entries(self) -> Vec<(String, Matrix)> {
        self.entries
    }

    pub fn num_values(&self) -> usize {
        self.tensors().map(|t| t.as_slice().len()).sum()
    }

    /// Errors unless `other` has the same names and shapes in the same order.
    pub fn check_aligned(&self, other: &ParamSet, context: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ParamMismatch(format!(
                "{context}: {} tensors vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::ParamMismatch(format!(
                    "{context}: {na} {:?} vs {nb} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Matrix::zeros(t.rows(), t.cols())))
                .collect(),
        }
    }
}

/// One stage of a feedforward model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    ReLU,
    Sigmoid,
    Softmax,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec::Dense { in_dim, out_dim }
    }
}

pub(crate) fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub(crate) fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

/// First Dense input width, if any Dense layer exists.
pub fn input_dim(specs: &[LayerSpec]) -> Option<usize> {
    specs.iter().find_map(|s| match s {
        LayerSpec::Dense { in_dim, .. } => Some(*in_dim),
        _ => None,
    })
}

/// Last Dense output width, if any Dense layer exists.
pub fn output_dim(specs: &[LayerSpec]) -> Option<usize> {
    specs.iter().rev().find_map(|s| match s {
        LayerSpec::Dense { out_dim, .. } => Some(*out_dim),
        _ => None,
    })
}

/// Checks that consecutive Dense layers chain.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    let mut width: Option<usize> = None;
    for (k, spec) in specs.iter().enumerate() {
        if let LayerSpec::Dense { in_dim, out_dim } = *spec {
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::dim(format!("layer {k}"), "non-zero widths", 0));
            }
            if let Some(w) = width {
                if w != in_dim {
                    return Err(Error::dim(format!("layer {k} in_dim"), w, in_dim));
                }
            }
            width = Some(out_dim);
        }
    }
    Ok(())
}

/// Checks that `params` holds exactly one weight and bias per Dense layer,
/// named and shaped for `specs`.
pub fn check_params(specs: &[LayerSpec], params: &ParamSet) -> Result<()> {
    let mut expected = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        if let LayerSpec::Dense { in_dim, out_dim } = *spec {
            expected.push((weight_name(k), (in_dim, out_dim)));
            expected.push((bias_name(k), (1, out_dim)));
        }
    }
    if expected.len() != params.len() {
        return Err(Error::ParamMismatch(format!(
            "expected {} tensors, got {}",
            expected.len(),
            params.len()
        )));
    }
    for ((name, shape), (pname, t)) in expected.iter().zip(params.entries()) {
        if name != pname || *shape != t.shape() {
            return Err(Error::ParamMismatch(format!(
                "expected {name} {shape:?}, got {pname} {:?}",
                t.shape()
            )));
        }
    }
    Ok(())
}

/// Re-keys parameters when a model's layers move by `offset` positions,
/// as happens when a server half is appended to a client half (or split
/// back off again, with a negative offset).
pub(crate) fn shift_layer_names(params: &ParamSet, offset: isize) -> ParamSet {
    let mut out = ParamSet::new();
    for (name, t) in params.entries() {
        let renamed = name
            .strip_prefix("layer")
            .and_then(|rest| rest.split_once('.'))
            .and_then(|(idx, suffix)| {
                idx.parse::<isize>()
                    .ok()
                    .map(|i| format!("layer{}.{suffix}", i + offset))
            })
            .unwrap_or_else(|| name.clone());
        out.push(renamed, t.clone());
    }
    out
}

/// `p - lr * g` for every tensor.
pub fn sgd_step(params: &ParamSet, grads: &ParamSet, lr: f64) -> Result<ParamSet> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr}")));
    }
    params.check_aligned(grads, "sgd_step")?;
    let mut out = ParamSet::new();
    for ((name, p), (_, g)) in params.entries().iter().zip(grads.entries()) {
        out.push(name.clone(), p.zip_map(g, |p, g| p - lr * g)?);
    }
    Ok(out)
}
