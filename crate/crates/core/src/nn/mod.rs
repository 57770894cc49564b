//! Feedforward networks with manual backpropagation and plain SGD.

mod loss;
mod matrix;
mod model;
mod params;

pub use loss::{
    accuracy, loss_eval, loss_eval_fused, predicted_classes, targets, LossKind, PROB_CLAMP,
};
pub use matrix::Matrix;
pub use model::{
    activation_forward, dense_forward, init_params, model_backward, model_backward_fused_head,
    model_forward, Activation, ForwardTrace, Model,
};
pub use params::{
    check_params, input_dim, output_dim, sgd_step, validate_specs, LayerSpec, ParamSet,
};
pub(crate) use params::shift_layer_names;

/// Specs for a Dense/ReLU stack with the given widths. The last Dense layer
/// is followed by ReLU as well; callers add their own head.
pub fn dense_relu_stack(widths: &[usize]) -> Vec<LayerSpec> {
    widths
        .windows(2)
        .flat_map(|w| [LayerSpec::dense(w[0], w[1]), LayerSpec::ReLU])
        .collect()
}
