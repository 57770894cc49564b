//! One split-learning batch: the client sends detached activations, the
//! server trains its half and returns the cut-layer gradient, the client
//! finishes backpropagation locally.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wssl::data::synth_blobs;
use wssl::nn::{dense_relu_stack, LayerSpec, LossKind, Model};
use wssl::split::{compose, ClientNode, ServerNode};

fn main() -> wssl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = synth_blobs(64, 5, 2, 4.0, 1)?;

    let client_half = Model::init(dense_relu_stack(&[5, 8, 4]), &mut rng)?;
    let mut server_specs = dense_relu_stack(&[4, 4]);
    server_specs.extend([LayerSpec::dense(4, 1), LayerSpec::Sigmoid]);
    let server_half = Model::init(server_specs, &mut rng)?;

    let mut client = ClientNode::new(0, client_half, data.clone(), 0.1)?;
    let mut server = ServerNode::new(server_half, LossKind::BinaryCrossEntropy, 0.1)?;
    let y = wssl::nn::targets(LossKind::BinaryCrossEntropy, &data.labels, 2)?;

    for step in 0..5 {
        let ab = client.client_forward(&data.features, &y, step)?;
        println!("batch {step}: client sends {:?} activations", ab.activations.shape());
        let gb = server.server_train_step(&ab)?;
        println!("         server returns {:?} cut gradient, loss {:.5}", gb.cut_grad.shape(), gb.loss);
        client.client_apply_gradient(&gb)?;
    }

    let model = compose(&client, &server)?;
    let pred = model.predict(&data.features)?;
    let acc = wssl::nn::accuracy(LossKind::BinaryCrossEntropy, &pred, &data.labels);
    println!("composed model accuracy on the batch: {acc:.3}");
    Ok(())
}
