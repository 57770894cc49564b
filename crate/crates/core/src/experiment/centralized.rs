use std::time::Instant;

use log::info;

use super::{derive_seed, evaluate, init_halves, mean, prepare_data, ExperimentConfig, RoundReport, Stream};
use crate::data::batch_iter;
use crate::error::Result;
use crate::nn::{loss_eval_fused, model_backward_fused_head, model_forward, Matrix, Model, ParamSet};
use crate::split::compose_halves;

#[derive(Debug, Clone)]
pub struct CentralizedRun {
    pub reports: Vec<RoundReport>,
    pub model: Model,
    /// Number of layers that belong to the client half of `model`.
    pub cut: usize,
}

/// The composed model trained by SGD on the pooled training split.
pub fn run_centralized(cfg: &ExperimentConfig) -> Result<Vec<RoundReport>> {
    Ok(run_centralized_detailed(cfg)?.reports)
}

pub fn run_centralized_detailed(cfg: &ExperimentConfig) -> Result<CentralizedRun> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let (client, server) = init_halves(cfg, data.dim(), data.class_count())?;
    let cut = client.specs.len();
    let mut model = compose_halves(&client, &server)?;
    let kind = data.loss_kind;

    let mut reports = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let started = Instant::now();
        let seed = derive_seed(cfg.seed, Stream::Batch, round as u64, 0);
        let mut losses = Vec::new();
        for batch in batch_iter(&data.train, cfg.batch_size, cfg.shuffle, seed) {
            let y = batch.targets(kind, data.class_count())?;
            let (pred, trace) = model_forward(&model.specs, &model.params, &batch.features)?;
            let (loss, g) = loss_eval_fused(kind, &pred, &y)?;
            let (grads, _) = model_backward_fused_head(&model.specs, &model.params, &trace, &g)?;
            model.params = sgd_by_side(&model.params, &grads, cut, cfg.client_lr, cfg.server_lr)?;
            losses.push(loss);
        }
        let val_accuracy = evaluate(&model, kind, &data.validation)?;
        let train_loss = mean(&losses);
        info!("centralized round {round}: loss {train_loss:.6} accuracy {val_accuracy:.4}");
        reports.push(RoundReport {
            round_index: round,
            selected_ids: Vec::new(),
            gammas: Vec::new(),
            train_loss,
            val_accuracy,
            wall_ms: if cfg.record_wall_clock { started.elapsed().as_millis() as u64 } else { 0 },
        });
    }
    Ok(CentralizedRun { reports, model, cut })
}

/// SGD with the client learning rate below layer `cut` and the server
/// learning rate from `cut` on. Equal rates make this plain SGD.
fn sgd_by_side(params: &ParamSet, grads: &ParamSet, cut: usize, client_lr: f64, server_lr: f64) -> Result<ParamSet> {
    params.check_aligned(grads, "centralized sgd")?;
    let mut out = ParamSet::new();
    for ((name, p), (_, g)) in params.entries().iter().zip(grads.entries()) {
        let layer: usize = name
            .strip_prefix("layer")
            .and_then(|r| r.split('.').next())
            .and_then(|i| i.parse().ok())
            .unwrap_or(usize::MAX);
        let lr = if layer < cut { client_lr } else { server_lr };
        let updated: Matrix = p.zip_map(g, |p, g| p - lr * g)?;
        out.push(name.clone(), updated);
    }
    Ok(out)
}
