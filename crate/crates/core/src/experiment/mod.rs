//! Full training runs: data preparation, the split-learning loop, the
//! centralized baseline, and metrics output.

mod centralized;
mod config;
mod metrics;
mod wssl;

pub use centralized::{run_centralized, run_centralized_detailed, CentralizedRun};
pub use config::{DataSource, ExperimentConfig, TransportKind};
pub use metrics::{emit_metrics, format_sig6, metrics_csv, RoundReport, METRICS_HEADER};
pub use wssl::{partition_digests, run_wssl, run_wssl_detailed, WsslRun};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    load_csv, standard_scale_apply, standard_scale_fit, stratified_partition, synth_blobs,
    train_test_split, Dataset,
};
use crate::error::{Error, Result};
use crate::nn::{accuracy, dense_relu_stack, LayerSpec, LossKind, Model};

/// Independent RNG streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Split = 2,
    Partition = 3,
    Init = 4,
    Select = 5,
    Batch = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one stream, keyed by two extra indices (round and client id
/// for batch order).
pub fn derive_seed(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream as u64 ^ splitmix64(a ^ splitmix64(b))))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, 0, 0))
}

/// Scaled, split and partitioned data for one run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub validation: Dataset,
    pub partitions: Vec<Dataset>,
    pub loss_kind: LossKind,
}

impl PreparedData {
    pub fn class_count(&self) -> usize {
        self.train.class_count
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Csv { path, label_column } => load_csv(path, label_column),
        DataSource::Synth { n, d, classes, separation } => synth_blobs(
            *n,
            *d,
            *classes,
            *separation,
            derive_seed(cfg.seed, Stream::Data, 0, 0),
        ),
    }
}

/// Stratified train/validation split, scaling fit on train only, then a
/// stratified partition of train across the clients.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let full = load_dataset(cfg)?;
    if full.class_count < 2 {
        return Err(Error::Data(format!(
            "need at least 2 classes, found {}",
            full.class_count
        )));
    }
    let (train, validation) = train_test_split(
        &full,
        cfg.train_fraction,
        derive_seed(cfg.seed, Stream::Split, 0, 0),
    )?;
    let scaler = standard_scale_fit(&train);
    let train = standard_scale_apply(&scaler, &train)?;
    let validation = standard_scale_apply(&scaler, &validation)?;
    let partitions = stratified_partition(
        &train,
        cfg.n_clients,
        derive_seed(cfg.seed, Stream::Partition, 0, 0),
    )?;
    Ok(PreparedData {
        loss_kind: LossKind::for_classes(train.class_count),
        train,
        validation,
        partitions,
    })
}

/// Client and server layer specs for `input_dim` features.
pub fn architecture(
    cfg: &ExperimentConfig,
    input_dim: usize,
    class_count: usize,
) -> (Vec<LayerSpec>, Vec<LayerSpec>) {
    let kind = LossKind::for_classes(class_count);
    let mut client_widths = vec![input_dim];
    client_widths.extend(&cfg.client_hidden);
    let cut = *client_widths.last().unwrap();
    let client = dense_relu_stack(&client_widths);

    let mut server_widths = vec![cut];
    server_widths.extend(&cfg.server_hidden);
    let mut server = dense_relu_stack(&server_widths);
    server.push(LayerSpec::dense(
        *server_widths.last().unwrap(),
        kind.output_width(class_count),
    ));
    server.push(kind.head());
    (client, server)
}

/// Seeded initial halves; every client starts from the same client half.
pub fn init_halves(cfg: &ExperimentConfig, input_dim: usize, class_count: usize) -> Result<(Model, Model)> {
    let (client_specs, server_specs) = architecture(cfg, input_dim, class_count);
    let mut rng = stream_rng(cfg.seed, Stream::Init);
    let client = Model::init(client_specs, &mut rng)?;
    let server = Model::init(server_specs, &mut rng)?;
    Ok((client, server))
}

pub(crate) fn evaluate(model: &Model, kind: LossKind, ds: &Dataset) -> Result<f64> {
    let pred = model.predict(&ds.features)?;
    Ok(accuracy(kind, &pred, &ds.labels))
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
