mod common;

use common::*;
use wssl::data::{batch_iter, Dataset};
use wssl::experiment::{
    derive_seed, init_halves, metrics_csv, prepare_data, run_centralized, run_centralized_detailed, run_wssl,
    run_wssl_detailed, DataSource, ExperimentConfig, Stream,
};
use wssl::selection::ImportanceStrategy;
use wssl::split::{compose_halves, global_average, ClientNode, ServerNode};
use wssl::nn::Model;

#[test]
fn one_round_three_clients() {
    let reports = run_wssl(&small_config(3, 1, 0)).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].selected_ids, vec![0, 1, 2]);
    assert!((0.0..=1.0).contains(&reports[0].val_accuracy));
}

#[test]
fn first_round_always_lists_everyone() {
    for (alpha, seed) in [(2, 1), (4, 2), (5, 3)] {
        let reports = run_wssl(&small_config(alpha, 2, seed)).unwrap();
        assert_eq!(reports[0].selected_ids, (0..alpha as u32).collect::<Vec<_>>());
        assert_eq!(reports[1].selected_ids.len(), 1, "literal count takes one client");
    }
}

#[test]
fn single_client_matches_centralized() {
    let cfg = small_config(1, 4, 13);
    let split = run_wssl_detailed(&cfg).unwrap();
    let central = run_centralized_detailed(&cfg).unwrap();
    for (a, b) in split.reports.iter().zip(&central.reports) {
        assert!((a.train_loss - b.train_loss).abs() <= 1e-10);
        assert_eq!(a.val_accuracy, b.val_accuracy);
    }
    let client = Model { specs: central.model.specs[..central.cut].to_vec(), params: split.global_params.clone() };
    let server = Model { specs: central.model.specs[central.cut..].to_vec(), params: split.server_params.clone() };
    let composed = compose_halves(&client, &server).unwrap();
    let diff = composed.params.max_abs_diff(&central.model.params);
    assert!(diff <= 1e-10, "{diff:e}");
}

/// Plain synchronized training written directly against the nodes: every
/// client trains each round, halves are averaged with equal weights and
/// copied back.
fn fedavg_oracle(cfg: &ExperimentConfig) -> (Vec<wssl::nn::ParamSet>, wssl::nn::ParamSet) {
    let data = prepare_data(cfg).unwrap();
    let (client_half, server_half) = init_halves(cfg, data.dim(), data.class_count()).unwrap();
    let mut server = ServerNode::new(server_half, data.loss_kind, cfg.server_lr).unwrap();
    let mut clients: Vec<ClientNode> = data
        .partitions
        .iter()
        .enumerate()
        .map(|(i, p)| ClientNode::new(i as u32, client_half.clone(), p.clone(), cfg.client_lr).unwrap())
        .collect();
    for round in 0..cfg.rounds {
        let batches: Vec<Vec<_>> = clients
            .iter()
            .map(|c| {
                let seed = derive_seed(cfg.seed, Stream::Batch, round as u64, c.client_id() as u64);
                batch_iter(&c.data, cfg.batch_size, cfg.shuffle, seed).collect()
            })
            .collect();
        let longest = batches.iter().map(Vec::len).max().unwrap();
        for b in 0..longest {
            for (i, c) in clients.iter_mut().enumerate() {
                if let Some(batch) = batches[i].get(b) {
                    let y = batch.targets(data.loss_kind, data.class_count()).unwrap();
                    let ab = c.client_forward(&batch.features, &y, b as u32).unwrap();
                    let gb = server.server_train_step(&ab).unwrap();
                    c.client_apply_gradient(&gb).unwrap();
                }
            }
        }
        let all: Vec<_> = clients.iter().map(|c| c.params().clone()).collect();
        let avg = global_average(&all, &vec![1.0; all.len()]).unwrap();
        for c in &mut clients {
            c.set_params(avg.clone()).unwrap();
        }
    }
    (clients.iter().map(|c| c.params().clone()).collect(), server.params().clone())
}

#[test]
fn uniform_full_participation_is_synchronized_averaging() {
    let mut cfg = small_config(4, 3, 21);
    cfg.importance = ImportanceStrategy::Uniform;
    cfg.clients_per_round = Some(4);
    let run = run_wssl_detailed(&cfg).unwrap();
    assert!(run.client_spread.iter().all(|&s| s <= 1e-12), "{:?}", run.client_spread);
    for r in &run.reports {
        assert!(r.gammas.iter().all(|&g| (g - 0.25).abs() <= 1e-15));
    }
    let (clients, server) = fedavg_oracle(&cfg);
    for (a, b) in run.client_params.iter().zip(&clients) {
        assert!(a.max_abs_diff(b) <= 1e-12);
    }
    assert!(run.server_params.max_abs_diff(&server) <= 1e-12);
}

#[test]
fn without_broadcast_clients_drift_apart() {
    let mut cfg = small_config(3, 3, 5);
    cfg.clients_per_round = Some(3);
    let with = run_wssl_detailed(&cfg).unwrap();
    assert!(with.client_spread.iter().all(|&s| s == 0.0));
    cfg.broadcast_global = false;
    let without = run_wssl_detailed(&cfg).unwrap();
    assert!(without.client_spread.iter().all(|&s| s > 0.0), "{:?}", without.client_spread);
}

#[test]
fn identical_configs_give_identical_metrics() {
    let mut cfg = small_config(3, 4, 99);
    cfg.clients_per_round = Some(2);
    let a = metrics_csv(&run_wssl(&cfg).unwrap());
    let b = metrics_csv(&run_wssl(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);
    let c = metrics_csv(&run_centralized(&cfg).unwrap());
    assert_eq!(c, metrics_csv(&run_centralized(&cfg).unwrap()));
    cfg.seed = 100;
    assert_ne!(a, metrics_csv(&run_wssl(&cfg).unwrap()));
}

#[test]
fn accuracy_strategy_runs() {
    let mut cfg = small_config(3, 3, 4);
    cfg.importance = ImportanceStrategy::Accuracy;
    let reports = run_wssl(&cfg).unwrap();
    for r in &reports[1..] {
        assert!((r.gammas.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn pooled_partitions_are_the_training_set() {
    let cfg = small_config(5, 1, 8);
    let data = prepare_data(&cfg).unwrap();
    let sorted = |ds: &Dataset| {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.sort_by_key(|&i| ds.row_ids[i]);
        ds.subset(&order)
    };
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for p in &data.partitions {
        for i in 0..p.len() {
            rows.extend_from_slice(p.features.row(i));
            labels.push(p.labels[i]);
            ids.push(p.row_ids[i]);
        }
    }
    let mut pooled = Dataset::new(
        wssl::nn::Matrix::new(labels.len(), data.dim(), rows).unwrap(),
        labels,
        data.class_count(),
    )
    .unwrap();
    pooled.row_ids = ids;
    let (a, b) = (sorted(&pooled), sorted(&data.train));
    assert_eq!(a.features, b.features);
    assert_eq!(a.labels, b.labels);
}

#[test]
fn multiclass_runs_end_to_end() {
    let mut cfg = small_config(3, 3, 6);
    cfg.data = DataSource::Synth { n: 300, d: 5, classes: 4, separation: 5.0 };
    cfg.clients_per_round = Some(3);
    let reports = run_wssl(&cfg).unwrap();
    assert!(reports.last().unwrap().val_accuracy > 0.5);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(3, 0, 0);
    assert!(matches!(run_wssl(&cfg), Err(wssl::Error::Config(_))));
    cfg.rounds = 1;
    cfg.clients_per_round = Some(4);
    assert!(matches!(run_wssl(&cfg), Err(wssl::Error::Config(_))));
}
