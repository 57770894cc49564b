use rand::Rng;

use super::matrix::Matrix;
use super::params::{bias_name, check_params, validate_specs, weight_name, LayerSpec, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Sigmoid,
    Softmax,
}

/// `input * weight + bias`, bias broadcast over rows.
pub fn dense_forward(input: &Matrix, weight: &Matrix, bias: &Matrix) -> Result<Matrix> {
    dense_forward_at(input, weight, bias, 0)
}

fn dense_forward_at(input: &Matrix, weight: &Matrix, bias: &Matrix, layer: usize) -> Result<Matrix> {
    if input.cols() != weight.rows() {
        return Err(Error::dim(
            format!("dense layer {layer} input"),
            format!("{} columns", weight.rows()),
            input.cols(),
        ));
    }
    if bias.shape() != (1, weight.cols()) {
        return Err(Error::dim(
            format!("dense layer {layer} bias"),
            format!("1x{}", weight.cols()),
            format!("{}x{}", bias.rows(), bias.cols()),
        ));
    }
    let mut data = input.matmul(weight)?.into_vec();
    let b = bias.as_slice();
    for row in data.chunks_mut(b.len().max(1)) {
        for (v, bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
    Matrix::new(input.rows(), weight.cols(), data)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation_forward(kind: Activation, input: &Matrix) -> Result<Matrix> {
    match kind {
        Activation::ReLU => input.map(|v| v.max(0.0)),
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Softmax => {
            let cols = input.cols();
            let mut out = Vec::with_capacity(input.as_slice().len());
            for r in 0..input.rows() {
                let row = input.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                out.extend(exps.iter().map(|e| e / sum));
            }
            Matrix::new(input.rows(), cols, out)
        }
    }
}

/// Cached layer inputs and outputs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn layer_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }

    pub fn layer_input(&self, k: usize) -> &Matrix {
        &self.inputs[k]
    }

    pub fn layer_output(&self, k: usize) -> &Matrix {
        &self.outputs[k]
    }
}

/// Runs `input` through every layer and keeps what backward needs.
pub fn model_forward(
    specs: &[LayerSpec],
    params: &ParamSet,
    input: &Matrix,
) -> Result<(Matrix, ForwardTrace)> {
    validate_specs(specs)?;
    check_params(specs, params)?;
    let mut inputs = Vec::with_capacity(specs.len());
    let mut outputs = Vec::with_capacity(specs.len());
    let mut current = input.clone();
    let mut p = params.tensors();
    for (k, spec) in specs.iter().enumerate() {
        let next = match spec {
            LayerSpec::Dense { .. } => {
                let w = p.next().expect("checked by check_params");
                let b = p.next().expect("checked by check_params");
                dense_forward_at(&current, w, b, k)?
            }
            LayerSpec::ReLU => activation_forward(Activation::ReLU, &current)?,
            LayerSpec::Sigmoid => activation_forward(Activation::Sigmoid, &current)?,
            LayerSpec::Softmax => activation_forward(Activation::Softmax, &current)?,
        };
        inputs.push(std::mem::replace(&mut current, next.clone()));
        outputs.push(next);
    }
    Ok((current, ForwardTrace { inputs, outputs }))
}

/// Reverse-mode pass from `grad_output` (gradient w.r.t. the model output).
/// Returns parameter gradients (aligned with `params`) and the gradient
/// w.r.t. the model input.
pub fn model_backward(
    specs: &[LayerSpec],
    params: &ParamSet,
    trace: &ForwardTrace,
    grad_output: &Matrix,
) -> Result<(ParamSet, Matrix)> {
    backward_range(specs, params, trace, grad_output, specs.len())
}

/// Backward pass that starts below the final activation layer.
///
/// `grad_pre_head` is the gradient w.r.t. the input of the last layer, as
/// produced by the fused sigmoid/BCE or softmax/CE loss.
pub fn model_backward_fused_head(
    specs: &[LayerSpec],
    params: &ParamSet,
    trace: &ForwardTrace,
    grad_pre_head: &Matrix,
) -> Result<(ParamSet, Matrix)> {
    match specs.last() {
        Some(LayerSpec::Sigmoid | LayerSpec::Softmax) => {}
        other => {
            return Err(Error::LossHead(format!(
                "fused backward needs a sigmoid or softmax head, found {other:?}"
            )))
        }
    }
    backward_range(specs, params, trace, grad_pre_head, specs.len() - 1)
}

fn backward_range(
    specs: &[LayerSpec],
    params: &ParamSet,
    trace: &ForwardTrace,
    grad: &Matrix,
    end: usize,
) -> Result<(ParamSet, Matrix)> {
    check_params(specs, params)?;
    if trace.layer_count() != specs.len() {
        return Err(Error::TraceMismatch(format!(
            "trace has {} layers, model has {}",
            trace.layer_count(),
            specs.len()
        )));
    }
    let expected_shape = if end == 0 {
        trace.inputs.first().map(Matrix::shape)
    } else {
        Some(trace.outputs[end - 1].shape())
    };
    if let Some(shape) = expected_shape {
        if grad.shape() != shape {
            return Err(Error::dim(
                "backward gradient",
                format!("{shape:?}"),
                format!("{:?}", grad.shape()),
            ));
        }
    }

    let tensors: Vec<&Matrix> = params.tensors().collect();
    let mut grads: Vec<Option<Matrix>> = vec![None; tensors.len()];
    // Tensor index of each Dense layer's weight.
    let mut slot = Vec::with_capacity(specs.len());
    let mut next_slot = 0;
    for spec in specs {
        slot.push(next_slot);
        if matches!(spec, LayerSpec::Dense { .. }) {
            next_slot += 2;
        }
    }

    let mut g = grad.clone();
    for k in (0..end).rev() {
        let input = &trace.inputs[k];
        let output = &trace.outputs[k];
        g = match specs[k] {
            LayerSpec::Dense { in_dim, out_dim } => {
                let w = tensors[slot[k]];
                if input.cols() != in_dim || g.cols() != out_dim {
                    return Err(Error::TraceMismatch(format!(
                        "layer {k} cached input width {} vs Dense({in_dim},{out_dim})",
                        input.cols()
                    )));
                }
                grads[slot[k]] = Some(input.transpose().matmul(&g)?);
                grads[slot[k] + 1] = Some(g.sum_rows());
                g.matmul(&w.transpose())?
            }
            LayerSpec::ReLU => g.zip_map(input, |g, x| if x > 0.0 { g } else { 0.0 })?,
            LayerSpec::Sigmoid => g.zip_map(output, |g, y| g * y * (1.0 - y))?,
            LayerSpec::Softmax => {
                let mut data = Vec::with_capacity(g.as_slice().len());
                for r in 0..g.rows() {
                    let gr = g.row(r);
                    let yr = output.row(r);
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    data.extend(gr.iter().zip(yr).map(|(gv, yv)| yv * (gv - dot)));
                }
                Matrix::new(g.rows(), g.cols(), data)?
            }
        };
    }

    let mut out = ParamSet::new();
    for ((name, t), gr) in params.entries().iter().zip(grads) {
        out.push(name.clone(), gr.unwrap_or_else(|| Matrix::zeros(t.rows(), t.cols())));
    }
    Ok((out, g))
}

/// Fan-based uniform init in `±sqrt(6 / (in + out))`, zero biases.
pub fn init_params<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<ParamSet> {
    validate_specs(specs)?;
    let mut params = ParamSet::new();
    for (k, spec) in specs.iter().enumerate() {
        if let LayerSpec::Dense { in_dim, out_dim } = *spec {
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let w: Vec<f64> = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            params.push(weight_name(k), Matrix::new(in_dim, out_dim, w)?);
            params.push(bias_name(k), Matrix::zeros(1, out_dim));
        }
    }
    Ok(params)
}

/// Layer specs plus their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub specs: Vec<LayerSpec>,
    pub params: ParamSet,
}

impl Model {
    pub fn new(specs: Vec<LayerSpec>, params: ParamSet) -> Result<Self> {
        validate_specs(&specs)?;
        check_params(&specs, &params)?;
        Ok(Model { specs, params })
    }

    pub fn init<R: Rng + ?Sized>(specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let params = init_params(&specs, rng)?;
        Ok(Model { specs, params })
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        model_forward(&self.specs, &self.params, input)
    }

    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.forward(input).map(|(out, _)| out)
    }
}
