//! Compares backpropagated gradients of a small MLP against central finite
//! differences of its mean loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wssl::nn::{
    loss_eval, loss_eval_fused, model_backward_fused_head, targets, LayerSpec, LossKind, Matrix, Model,
};

const H: f64 = 1e-5;

fn loss(model: &Model, x: &Matrix, y: &Matrix) -> f64 {
    loss_eval(LossKind::CrossEntropy, &model.predict(x).unwrap(), y).unwrap().0
}

fn main() -> wssl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let specs = vec![
        LayerSpec::dense(4, 6),
        LayerSpec::ReLU,
        LayerSpec::dense(6, 3),
        LayerSpec::Softmax,
    ];
    let model = Model::init(specs, &mut rng)?;
    let x = Matrix::from_rows(&[
        vec![0.5, -1.0, 0.25, 2.0],
        vec![-0.3, 0.8, 1.1, -0.6],
        vec![1.4, 0.2, -0.9, 0.1],
    ])?;
    let y = targets(LossKind::CrossEntropy, &[2, 0, 1], 3)?;

    let (pred, trace) = model.forward(&x)?;
    let (value, grad) = loss_eval_fused(LossKind::CrossEntropy, &pred, &y)?;
    let (grads, _) = model_backward_fused_head(&model.specs, &model.params, &trace, &grad)?;
    println!("loss {value:.6}");

    let mut worst: f64 = 0.0;
    for (t, (name, g)) in grads.entries().iter().enumerate() {
        for i in 0..g.as_slice().len() {
            let (r, c) = (i / g.cols(), i % g.cols());
            let mut up = model.clone();
            let v = up.params.tensor_mut(t).get(r, c);
            up.params.tensor_mut(t).set(r, c, v + H)?;
            let mut down = model.clone();
            down.params.tensor_mut(t).set(r, c, v - H)?;
            let numeric = (loss(&up, &x, &y) - loss(&down, &x, &y)) / (2.0 * H);
            worst = worst.max((numeric - g.get(r, c)).abs());
        }
        println!("{name:<14} {:?} ok", g.shape());
    }
    println!("largest analytic/numeric gap: {worst:.3e}");
    Ok(())
}
