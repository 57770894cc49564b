//! Client and server halves of a split model and the per-batch protocol
//! between them.
//!
//! One batch step is:
//!
//! 1. [`ClientNode::client_forward`] runs the client half and emits a
//!    detached [`ActivationBatch`]; the forward trace stays on the client.
//! 2. [`ServerNode::server_train_step`] finishes the forward pass, computes
//!    the loss, backpropagates to the cut and takes one SGD step on the
//!    server half. The cut-layer gradient comes from the same forward pass
//!    as the loss, i.e. before the server update.
//! 3. [`ClientNode::client_apply_gradient`] backpropagates the returned
//!    [`GradientBatch`] through the retained trace and takes one SGD step.

mod aggregate;

pub use aggregate::{broadcast_global, global_average};

use std::collections::HashMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    check_params, input_dim, loss_eval_fused, model_backward, model_backward_fused_head,
    model_forward, output_dim, sgd_step, shift_layer_names, validate_specs, ForwardTrace,
    LayerSpec, LossKind, Matrix, Model, ParamSet,
};

/// Cut-layer activations sent from a client to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    pub client_id: u32,
    pub batch_id: u32,
    pub activations: Matrix,
    pub labels: Matrix,
}

/// Cut-layer gradient returned by the server, with the batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch {
    pub client_id: u32,
    pub batch_id: u32,
    pub cut_grad: Matrix,
    pub loss: f64,
}

pub struct ClientNode {
    client_id: u32,
    specs: Vec<LayerSpec>,
    params: ParamSet,
    pub data: Dataset,
    pub lr: f64,
    pending: HashMap<u32, ForwardTrace>,
}

impl ClientNode {
    pub fn new(client_id: u32, half: Model, data: Dataset, lr: f64) -> Result<Self> {
        if let Some(d) = input_dim(&half.specs) {
            if d != data.dim() {
                return Err(Error::dim(
                    format!("client {client_id} input width"),
                    d,
                    data.dim(),
                ));
            }
        }
        check_lr(lr)?;
        Ok(ClientNode {
            client_id,
            specs: half.specs,
            params: half.params,
            data,
            lr,
            pending: HashMap::new(),
        })
    }

    pub fn client_id(&self) -> u32 {
        self.client_id
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn half(&self) -> Model {
        Model {
            specs: self.specs.clone(),
            params: self.params.clone(),
        }
    }

    /// Width of the activations this client emits.
    pub fn cut_width(&self) -> usize {
        output_dim(&self.specs).unwrap_or_else(|| self.data.dim())
    }

    pub fn pending_batches(&self) -> usize {
        self.pending.len()
    }

    /// Replaces the client half's parameters, keeping names and shapes.
    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        check_params(&self.specs, &params)?;
        self.params = params;
        Ok(())
    }

    pub fn client_forward(&mut self, x: &Matrix, y: &Matrix, batch_id: u32) -> Result<ActivationBatch> {
        if x.cols() != self.data.dim() {
            return Err(Error::dim(
                format!("client {} batch columns", self.client_id),
                self.data.dim(),
                x.cols(),
            ));
        }
        if x.rows() != y.rows() {
            return Err(Error::dim("batch labels", x.rows(), y.rows()));
        }
        let (activations, trace) = model_forward(&self.specs, &self.params, x)?;
        self.pending.insert(batch_id, trace);
        Ok(ActivationBatch {
            client_id: self.client_id,
            batch_id,
            activations,
            labels: y.clone(),
        })
    }

    pub fn client_apply_gradient(&mut self, gb: &GradientBatch) -> Result<()> {
        if gb.client_id != self.client_id {
            return Err(Error::Protocol(format!(
                "client {} received gradient addressed to client {}",
                self.client_id, gb.client_id
            )));
        }
        let trace = self.pending.remove(&gb.batch_id).ok_or(Error::UnknownBatch {
            client_id: self.client_id,
            batch_id: gb.batch_id,
        })?;
        let (grads, _) = model_backward(&self.specs, &self.params, &trace, &gb.cut_grad)?;
        self.params = sgd_step(&self.params, &grads, self.lr)?;
        Ok(())
    }
}

pub struct ServerNode {
    specs: Vec<LayerSpec>,
    params: ParamSet,
    pub loss_kind: LossKind,
    pub lr: f64,
}

impl ServerNode {
    pub fn new(half: Model, loss_kind: LossKind, lr: f64) -> Result<Self> {
        loss_kind.check_head(&half.specs)?;
        check_lr(lr)?;
        Ok(ServerNode {
            specs: half.specs,
            params: half.params,
            loss_kind,
            lr,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn half(&self) -> Model {
        Model {
            specs: self.specs.clone(),
            params: self.params.clone(),
        }
    }

    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        check_params(&self.specs, &params)?;
        self.params = params;
        Ok(())
    }

    pub fn server_train_step(&mut self, ab: &ActivationBatch) -> Result<GradientBatch> {
        if let Some(d) = input_dim(&self.specs) {
            if d != ab.activations.cols() {
                return Err(Error::dim("server cut width", d, ab.activations.cols()));
            }
        }
        let (pred, trace) = model_forward(&self.specs, &self.params, &ab.activations)?;
        let (loss, grad_pre_head) = loss_eval_fused(self.loss_kind, &pred, &ab.labels)?;
        let (grads, cut_grad) =
            model_backward_fused_head(&self.specs, &self.params, &trace, &grad_pre_head)?;
        self.params = sgd_step(&self.params, &grads, self.lr)?;
        Ok(GradientBatch {
            client_id: ab.client_id,
            batch_id: ab.batch_id,
            cut_grad,
            loss,
        })
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if lr >= 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("learning rate {lr}")))
    }
}

/// Concatenates a client half and a server half into one model. Server
/// parameter names are shifted past the client's layers.
pub fn compose_halves(client: &Model, server: &Model) -> Result<Model> {
    if let (Some(cut), Some(server_in)) = (output_dim(&client.specs), input_dim(&server.specs)) {
        if cut != server_in {
            return Err(Error::dim("cut width", server_in, cut));
        }
    }
    let mut specs = client.specs.clone();
    specs.extend_from_slice(&server.specs);
    validate_specs(&specs)?;
    let mut params = client.params.clone();
    for (name, t) in shift_layer_names(&server.params, client.specs.len() as isize).into_entries() {
        params.push(name, t);
    }
    Model::new(specs, params)
}

pub fn compose(client: &ClientNode, server: &ServerNode) -> Result<Model> {
    if let Some(server_in) = input_dim(&server.specs) {
        if client.cut_width() != server_in {
            return Err(Error::dim("cut width", server_in, client.cut_width()));
        }
    }
    compose_halves(&client.half(), &server.half())
}

/// Splits a composed parameter set back into client and server parts at
/// layer index `cut`.
pub fn split_params(composed: &ParamSet, cut: usize) -> (ParamSet, ParamSet) {
    let mut front = ParamSet::new();
    let mut back = ParamSet::new();
    for (name, t) in composed.entries() {
        let layer: usize = name
            .strip_prefix("layer")
            .and_then(|r| r.split('.').next())
            .and_then(|i| i.parse().ok())
            .unwrap_or(0);
        if layer < cut {
            front.push(name.clone(), t.clone());
        } else {
            back.push(name.clone(), t.clone());
        }
    }
    let back = shift_layer_names(&back, -(cut as isize));
    (front, back)
}
