//! Test-only oracles. Nothing here calls the split protocol or the
//! analytic backward pass it is used to check, except where noted.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wssl::nn::{
    loss_eval, model_forward, LayerSpec, LossKind, Matrix, Model, ParamSet,
};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Random MLP with `1..=max_dense` Dense layers of width `1..=max_dim`,
/// each followed by a random activation. Biases are randomized too.
pub fn random_mlp(rng: &mut ChaCha8Rng, max_dense: usize, max_dim: usize) -> (Model, usize) {
    let n_dense = rng.random_range(1..=max_dense);
    let mut widths = vec![rng.random_range(1..=max_dim)];
    for _ in 0..n_dense {
        widths.push(rng.random_range(1..=max_dim));
    }
    let mut specs = Vec::new();
    for (k, w) in widths.windows(2).enumerate() {
        specs.push(LayerSpec::dense(w[0], w[1]));
        let last = k + 1 == n_dense;
        match rng.random_range(0..if last { 4 } else { 3 }) {
            0 => specs.push(LayerSpec::ReLU),
            1 => specs.push(LayerSpec::Sigmoid),
            2 if w[1] >= 2 => specs.push(LayerSpec::Softmax),
            _ => {}
        }
    }
    let mut model = Model::init(specs, rng).unwrap();
    let n = model.params.len();
    for i in 0..n {
        let t = model.params.tensor_mut(i);
        let (r, c) = t.shape();
        *t = random_matrix(rng, r, c, 1.0);
    }
    (model, widths[0])
}

fn perturbed(params: &ParamSet, tensor: usize, index: usize, delta: f64) -> ParamSet {
    let mut p = params.clone();
    let t = p.tensor_mut(tensor);
    let (r, c) = (index / t.cols(), index % t.cols());
    let v = t.get(r, c);
    t.set(r, c, v + delta).unwrap();
    p
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Central-difference gradients of `f(params, x) = <forward(x), probe>`
/// w.r.t. every parameter and every input entry.
pub fn fd_gradients(model: &Model, x: &Matrix, probe: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let f = |p: &ParamSet, x: &Matrix| {
        let (out, _) = model_forward(&model.specs, p, x).unwrap();
        dot(&out, probe)
    };
    fd_core(&model.params, x, f)
}

/// Central-difference gradients of the mean loss of `model` on (x, target).
pub fn fd_loss_gradients(model: &Model, kind: LossKind, x: &Matrix, target: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let f = |p: &ParamSet, x: &Matrix| {
        let (out, _) = model_forward(&model.specs, p, x).unwrap();
        loss_eval(kind, &out, target).unwrap().0
    };
    fd_core(&model.params, x, f)
}

fn fd_core(params: &ParamSet, x: &Matrix, f: impl Fn(&ParamSet, &Matrix) -> f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut grads = Vec::new();
    for (ti, t) in params.tensors().enumerate() {
        let g = (0..t.as_slice().len())
            .map(|i| {
                let up = f(&perturbed(params, ti, i, FD_STEP), x);
                let down = f(&perturbed(params, ti, i, -FD_STEP), x);
                (up - down) / (2.0 * FD_STEP)
            })
            .collect();
        grads.push(g);
    }
    let input = (0..x.as_slice().len())
        .map(|i| {
            let (r, c) = (i / x.cols(), i % x.cols());
            let mut up = x.clone();
            up.set(r, c, x.get(r, c) + FD_STEP).unwrap();
            let mut down = x.clone();
            down.set(r, c, x.get(r, c) - FD_STEP).unwrap();
            (f(params, &up) - f(params, &down)) / (2.0 * FD_STEP)
        })
        .collect();
    (grads, input)
}

pub fn within_fd_tol(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() <= FD_ABS_FLOOR.max(FD_REL_TOL * scale)
}

/// Worst `(|a-n|, a, n)` over all pairs that fail the tolerance, if any.
pub fn first_violation(analytic: &[f64], numeric: &[f64]) -> Option<(f64, f64)> {
    analytic
        .iter()
        .zip(numeric)
        .find(|(a, n)| !within_fd_tol(**a, **n))
        .map(|(a, n)| (*a, *n))
}

/// Random client/server halves with a loss head. Returns the halves, the
/// input width and the class count.
pub fn random_split_pair(rng: &mut ChaCha8Rng) -> (Model, Model, LossKind, usize, usize) {
    let classes = rng.random_range(2..=4);
    let kind = LossKind::for_classes(classes);
    let in_dim = rng.random_range(1..=8);
    let mut client_specs = Vec::new();
    let mut width = in_dim;
    for _ in 0..rng.random_range(1..=2) {
        let next = rng.random_range(1..=8);
        client_specs.push(LayerSpec::dense(width, next));
        client_specs.push(if rng.random_bool(0.5) { LayerSpec::ReLU } else { LayerSpec::Sigmoid });
        width = next;
    }
    let mut server_specs = Vec::new();
    if rng.random_bool(0.5) {
        let next = rng.random_range(1..=8);
        server_specs.push(LayerSpec::dense(width, next));
        server_specs.push(LayerSpec::ReLU);
        width = next;
    }
    server_specs.push(LayerSpec::dense(width, kind.output_width(classes)));
    server_specs.push(kind.head());
    let client = Model::init(client_specs, rng).unwrap();
    let server = Model::init(server_specs, rng).unwrap();
    (client, server, kind, in_dim, classes)
}

/// One plain SGD step on `model` with the unfused loss gradient. Dense
/// layers before `cut` use `lr_front`, the rest `lr_back`.
pub fn monolithic_step(
    model: &Model,
    kind: LossKind,
    x: &Matrix,
    y: &Matrix,
    cut: usize,
    lr_front: f64,
    lr_back: f64,
) -> ParamSet {
    let (pred, trace) = model_forward(&model.specs, &model.params, x).unwrap();
    let (_, grad) = loss_eval(kind, &pred, y).unwrap();
    let (grads, _) = wssl::nn::model_backward(&model.specs, &model.params, &trace, &grad).unwrap();
    let mut out = ParamSet::new();
    for ((name, p), (_, g)) in model.params.entries().iter().zip(grads.entries()) {
        let layer: usize = name
            .strip_prefix("layer")
            .and_then(|s| s.split('.').next())
            .and_then(|s| s.parse().ok())
            .unwrap();
        let lr = if layer < cut { lr_front } else { lr_back };
        out.push(name.clone(), p.zip_map(g, |p, g| p - lr * g).unwrap());
    }
    out
}

/// Runs `steps` split batch steps and the same number of monolithic SGD
/// steps from identical starting points; returns the largest elementwise
/// parameter difference at the end.
pub fn split_vs_monolithic(seed: u64, steps: usize) -> f64 {
    use wssl::data::Dataset;
    use wssl::nn::targets;
    use wssl::split::{compose_halves, ClientNode, ServerNode};

    let mut r = rng(seed);
    let (client_half, server_half, kind, in_dim, classes) = random_split_pair(&mut r);
    let (lr_c, lr_s) = (r.random_range(0.01..0.5), r.random_range(0.01..0.5));
    let mut composed = compose_halves(&client_half, &server_half).unwrap();
    let cut = client_half.specs.len();
    let empty = Dataset::empty(in_dim, classes);
    let mut client = ClientNode::new(0, client_half, empty, lr_c).unwrap();
    let mut server = ServerNode::new(server_half, kind, lr_s).unwrap();

    for step in 0..steps {
        let b = r.random_range(1..=8);
        let x = random_matrix(&mut r, b, in_dim, 1.5);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..classes)).collect();
        let y = targets(kind, &labels, classes).unwrap();

        let ab = client.client_forward(&x, &y, step as u32).unwrap();
        let gb = server.server_train_step(&ab).unwrap();
        client.client_apply_gradient(&gb).unwrap();

        composed.params = monolithic_step(&composed, kind, &x, &y, cut, lr_c, lr_s);
    }
    let split = compose_halves(&client.half(), &server.half()).unwrap();
    split.params.max_abs_diff(&composed.params)
}

/// Draws `trials` single picks from `gammas` and returns, per id, the
/// count and the largest deviation from the mean in binomial standard
/// deviations.
pub fn draw_frequencies(gammas: &[f64], trials: usize, seed: u64) -> (Vec<usize>, f64) {
    let ids: Vec<u32> = (0..gammas.len() as u32).collect();
    let mut r = rng(seed);
    let mut counts = vec![0usize; gammas.len()];
    for _ in 0..trials {
        let pick = wssl::selection::weighted_sample_without_replacement(&ids, gammas, 1, &mut r).unwrap();
        counts[pick[0] as usize] += 1;
    }
    let worst = counts
        .iter()
        .zip(gammas)
        .map(|(&c, &g)| {
            let sigma = (trials as f64 * g * (1.0 - g)).sqrt();
            (c as f64 - trials as f64 * g).abs() / sigma
        })
        .fold(0.0, f64::max);
    (counts, worst)
}

/// Largest deviation, in samples, of any part's per-class count from its
/// proportional share `n_part * n_class / n_total`.
pub fn stratification_error(whole: &wssl::data::Dataset, parts: &[&wssl::data::Dataset]) -> f64 {
    let total = whole.len() as f64;
    let global = whole.class_counts();
    let mut worst: f64 = 0.0;
    for p in parts {
        let counts = p.class_counts();
        for (c, &g) in global.iter().enumerate() {
            let expected = p.len() as f64 * g as f64 / total;
            let got = counts.get(c).copied().unwrap_or(0) as f64;
            worst = worst.max((got - expected).abs());
        }
    }
    worst
}

/// Column means and population standard deviations.
pub fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let means: Vec<f64> = (0..m.cols()).map(|c| (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / n).collect();
    let stds = (0..m.cols())
        .map(|c| ((0..m.rows()).map(|r| (m.get(r, c) - means[c]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    (means, stds)
}

/// Property-test generators for wire messages.
pub mod gen {
    use proptest::prelude::*;
    use wssl::data::PartitionDigest;
    use wssl::nn::{Matrix, ParamSet};
    use wssl::split::{ActivationBatch, GradientBatch};
    use wssl::transport::{Control, ControlKind, ImportanceReport, Message, ParamsMessage};

    pub fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
            -10.0f64..10.0,
        ]
    }

    pub fn matrix() -> impl Strategy<Value = Matrix> {
        (0usize..6, 0usize..6).prop_flat_map(|(r, c)| {
            prop::collection::vec(finite(), r * c).prop_map(move |v| Matrix::new(r, c, v).unwrap())
        })
    }

    fn same_rows(rows: usize) -> impl Strategy<Value = Matrix> {
        (0usize..5).prop_flat_map(move |c| {
            prop::collection::vec(finite(), rows * c).prop_map(move |v| Matrix::new(rows, c, v).unwrap())
        })
    }

    fn params() -> impl Strategy<Value = ParamSet> {
        prop::collection::vec(("\\PC{0,12}", matrix()), 0..5).prop_map(|entries| {
            let mut p = ParamSet::new();
            for (n, m) in entries {
                p.push(n, m);
            }
            p
        })
    }

    fn control_kind() -> impl Strategy<Value = ControlKind> {
        prop_oneof![
            Just(ControlKind::Join),
            Just(ControlKind::RoundStart),
            Just(ControlKind::RoundEnd),
            Just(ControlKind::Shutdown),
        ]
    }

    pub fn message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (any::<u32>(), any::<u32>(), matrix())
                .prop_flat_map(|(c, b, a)| {
                    let rows = a.rows();
                    (Just(c), Just(b), Just(a), same_rows(rows))
                })
                .prop_map(|(client_id, batch_id, activations, labels)| {
                    Message::Activation(ActivationBatch { client_id, batch_id, activations, labels })
                }),
            (any::<u32>(), any::<u32>(), matrix(), finite()).prop_map(|(client_id, batch_id, cut_grad, loss)| {
                Message::Gradient(GradientBatch { client_id, batch_id, cut_grad, loss })
            }),
            (any::<u32>(), any::<u32>(), params())
                .prop_map(|(client_id, round, params)| Message::Params(ParamsMessage { client_id, round, params })),
            (any::<u32>(), any::<u32>(), finite(), finite()).prop_map(|(client_id, round, beta, gamma)| {
                Message::ImportanceReport(ImportanceReport { client_id, round, beta, gamma })
            }),
            (any::<u32>(), any::<[u8; 32]>(), any::<u64>()).prop_map(|(client_id, digest, row_count)| {
                Message::Digest(PartitionDigest { client_id, digest, row_count })
            }),
            (control_kind(), any::<u32>(), any::<u32>())
                .prop_map(|(kind, client_id, round)| Message::Control(Control { kind, client_id, round })),
        ]
    }
}

/// Small, fast experiment config on synthetic blobs.
pub fn small_config(n_clients: usize, rounds: usize, seed: u64) -> wssl::experiment::ExperimentConfig {
    wssl::experiment::ExperimentConfig {
        data: wssl::experiment::DataSource::Synth { n: 400, d: 6, classes: 2, separation: 3.0 },
        n_clients,
        rounds,
        batch_size: 32,
        seed,
        ..Default::default()
    }
}

/// Largest parameter difference between two finished split runs.
pub fn run_distance(a: &wssl::experiment::WsslRun, b: &wssl::experiment::WsslRun) -> f64 {
    let clients = a
        .client_params
        .iter()
        .zip(&b.client_params)
        .map(|(x, y)| x.max_abs_diff(y))
        .fold(0.0, f64::max);
    clients
        .max(a.global_params.max_abs_diff(&b.global_params))
        .max(a.server_params.max_abs_diff(&b.server_params))
}

/// Writes a gait-shaped CSV: `features` numeric columns then a binary
/// `label` column with string values.
pub fn write_gait_like_csv(path: &std::path::Path, rows: usize, features: usize, seed: u64) {
    use std::io::Write;
    let ds = wssl::data::synth_blobs(rows, features, 2, 3.0, seed).unwrap();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    let header: Vec<String> = (0..features).map(|i| format!("f{i}")).chain(["label".to_string()]).collect();
    writeln!(f, "{}", header.join(",")).unwrap();
    for r in 0..ds.len() {
        let vals: Vec<String> = ds.features.row(r).iter().map(|v| format!("{v:.6}")).collect();
        let label = if ds.labels[r] == 0 { "normal" } else { "impaired" };
        writeln!(f, "{},{label}", vals.join(",")).unwrap();
    }
}
