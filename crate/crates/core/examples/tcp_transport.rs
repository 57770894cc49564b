//! Frames over loopback TCP, then the same split-learning run over TCP and
//! in process.

use std::time::Duration;

use wssl::experiment::{run_wssl_detailed, ExperimentConfig, TransportKind};
use wssl::nn::Matrix;
use wssl::split::ActivationBatch;
use wssl::transport::{encode_frame, Endpoint, Message, TcpEndpoint, TcpHub};

fn main() -> wssl::Result<()> {
    let hub = TcpHub::bind(0)?;
    let mut client = TcpEndpoint::connect(hub.local_addr()?)?;
    let mut server = hub.accept()?;

    let msg = Message::Activation(ActivationBatch {
        client_id: 1,
        batch_id: 0,
        activations: Matrix::new(1, 1, vec![1.0])?,
        labels: Matrix::new(1, 1, vec![0.0])?,
    });
    let frame = encode_frame(&msg)?;
    println!("activation frame, {} bytes: {:02x?}", frame.len(), frame);
    client.send(&msg)?;
    assert_eq!(server.recv(Duration::from_secs(5))?, msg);
    println!("received intact over {}", hub.local_addr()?);

    let mut cfg = ExperimentConfig { n_clients: 2, rounds: 3, clients_per_round: Some(2), ..Default::default() };
    let local = run_wssl_detailed(&cfg)?;
    cfg.transport = TransportKind::Tcp { port: 0 };
    let remote = run_wssl_detailed(&cfg)?;
    println!(
        "global client half, in-process vs TCP: max difference {:e}",
        local.global_params.max_abs_diff(&remote.global_params)
    );
    Ok(())
}
