//! Per-round client selection.
//!
//! Round 0 takes every client. Later rounds score each client (`beta`),
//! normalize the scores (`gamma`), decide how many clients to take, and
//! draw that many without replacement with probability proportional to
//! `gamma`.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{accuracy, loss_eval, targets, LossKind, Model};
use crate::split::{compose_halves, ClientNode, ServerNode};

/// Added to the validation loss before inverting.
pub const INVERSE_LOSS_EPS: f64 = 1e-8;
/// Added to validation accuracy so a useless client keeps a non-zero score.
pub const ACCURACY_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceStrategy {
    /// `1 / (validation loss + 1e-8)`
    #[default]
    InverseLoss,
    /// `validation accuracy + 1e-3`
    Accuracy,
    /// Every client scores 1.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRecord {
    pub client_id: u32,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub round_index: usize,
    pub selected_ids: Vec<u32>,
    pub k: usize,
    pub records: Vec<ImportanceRecord>,
    pub warnings: Vec<String>,
}

impl SelectionOutcome {
    pub fn gammas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gamma).collect()
    }

    pub fn gamma_of(&self, client_id: u32) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.client_id == client_id)
            .map(|r| r.gamma)
    }
}

/// Scores a client half by evaluating it composed with the server half on
/// the validation set.
pub fn importance_of(
    strategy: ImportanceStrategy,
    client_half: &Model,
    server_half: &Model,
    loss_kind: LossKind,
    validation: &Dataset,
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::Data("importance needs a non-empty validation set".into()));
    }
    let composed = compose_halves(client_half, server_half)?;
    let pred = composed.predict(&validation.features)?;
    match strategy {
        ImportanceStrategy::InverseLoss => {
            let y = targets(loss_kind, &validation.labels, validation.class_count)?;
            let (loss, _) = loss_eval(loss_kind, &pred, &y)?;
            Ok(1.0 / (loss + INVERSE_LOSS_EPS))
        }
        ImportanceStrategy::Accuracy => {
            Ok(accuracy(loss_kind, &pred, &validation.labels) + ACCURACY_EPS)
        }
        ImportanceStrategy::Uniform => Ok(1.0),
    }
}

pub fn compute_importance(
    strategy: ImportanceStrategy,
    client: &ClientNode,
    server: &ServerNode,
    validation: &Dataset,
) -> Result<f64> {
    importance_of(strategy, &client.half(), &server.half(), server.loss_kind, validation)
}

/// `gamma_i = beta_i / sum(beta)`.
pub fn normalize_weights(betas: &[f64]) -> Result<Vec<f64>> {
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(Error::InvalidArgument(format!("importance weight {b}")));
    }
    let sum: f64 = betas.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidArgument("importance weights are all zero".into()));
    }
    Ok(betas.iter().map(|b| b / sum).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectCount {
    pub k: usize,
    pub warning: Option<String>,
}

/// Number of clients to take this round: `max(round(alpha * mean(gamma)), 1)`.
///
/// With normalized weights `mean(gamma) = 1 / alpha`, so this is always 1.
/// `override_count` replaces the formula and is clamped to `[1, alpha]`.
pub fn select_count(alpha: usize, gammas: &[f64], override_count: Option<usize>) -> Result<SelectCount> {
    if alpha == 0 {
        return Err(Error::InvalidArgument("alpha must be >= 1".into()));
    }
    if let Some(o) = override_count {
        let k = o.clamp(1, alpha);
        let warning = (k != o).then(|| {
            let msg = format!("clients_per_round {o} clamped to {k} (alpha = {alpha})");
            warn!("{msg}");
            msg
        });
        return Ok(SelectCount { k, warning });
    }
    if gammas.is_empty() {
        return Err(Error::InvalidArgument("no weights to average".into()));
    }
    let mean = gammas.iter().sum::<f64>() / gammas.len() as f64;
    let k = ((alpha as f64 * mean).round() as usize).max(1).min(alpha);
    Ok(SelectCount { k, warning: None })
}

/// Draws `k` distinct ids by successive weighted draws, renormalizing over
/// the ids not yet taken. Once only zero-weight ids remain, they are drawn
/// uniformly.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    ids: &[u32],
    gammas: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    if ids.len() != gammas.len() {
        return Err(Error::dim("sampling weights", ids.len(), gammas.len()));
    }
    if k > ids.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {k} clients from a population of {}",
            ids.len()
        )));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidArgument(format!("sampling weight {g}")));
    }
    let mut pool: Vec<(u32, f64)> = ids.iter().copied().zip(gammas.iter().copied()).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let pos = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, (_, w)) in pool.iter().enumerate() {
                acc += w;
                if *w > 0.0 && target < acc {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target == acc at the end
            chosen.unwrap_or_else(|| pool.iter().rposition(|(_, w)| *w > 0.0).unwrap())
        } else {
            rng.random_range(0..pool.len())
        };
        picked.push(pool.remove(pos).0);
    }
    Ok(picked)
}

/// Selection from already computed raw importance weights.
pub fn select_with_betas<R: Rng + ?Sized>(
    round_index: usize,
    betas: &[f64],
    override_count: Option<usize>,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    let alpha = betas.len();
    if alpha == 0 {
        return Err(Error::InvalidArgument("no clients".into()));
    }
    let ids: Vec<u32> = (0..alpha as u32).collect();
    let gammas = normalize_weights(betas)?;
    let count = select_count(alpha, &gammas, override_count)?;
    let selected_ids = weighted_sample_without_replacement(&ids, &gammas, count.k, rng)?;
    Ok(SelectionOutcome {
        round_index,
        selected_ids,
        k: count.k,
        records: ids
            .iter()
            .zip(betas.iter().zip(&gammas))
            .map(|(&client_id, (&beta, &gamma))| ImportanceRecord { client_id, beta, gamma })
            .collect(),
        warnings: count.warning.into_iter().collect(),
    })
}

/// Every client, with uniform weights.
pub fn select_all(alpha: usize) -> SelectionOutcome {
    let gamma = 1.0 / alpha as f64;
    SelectionOutcome {
        round_index: 0,
        selected_ids: (0..alpha as u32).collect(),
        k: alpha,
        records: (0..alpha as u32)
            .map(|client_id| ImportanceRecord { client_id, beta: 1.0, gamma })
            .collect(),
        warnings: Vec::new(),
    }
}

/// One round of selection over client halves indexed by client id.
#[allow(clippy::too_many_arguments)]
pub fn select_round<R: Rng + ?Sized>(
    round_index: usize,
    client_halves: &[Model],
    server: &ServerNode,
    validation: &Dataset,
    strategy: ImportanceStrategy,
    override_count: Option<usize>,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    if client_halves.is_empty() {
        return Err(Error::InvalidArgument("no clients".into()));
    }
    if round_index == 0 {
        return Ok(select_all(client_halves.len()));
    }
    let server_half = server.half();
    let betas = client_halves
        .iter()
        .map(|h| importance_of(strategy, h, &server_half, server.loss_kind, validation))
        .collect::<Result<Vec<_>>>()?;
    select_with_betas(round_index, &betas, override_count, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_weights(&[1.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(normalize_weights(&[3.0, 1.0]).unwrap(), vec![0.75, 0.25]);
        assert!(normalize_weights(&[0.0, 0.0]).is_err());
        assert!(normalize_weights(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn literal_count_is_one() {
        let gammas = normalize_weights(&[5.0, 1.0, 0.5, 2.0, 9.0, 1.0, 1.0, 3.0, 0.1, 7.0]).unwrap();
        assert_eq!(select_count(10, &gammas, None).unwrap().k, 1);
        assert_eq!(select_count(10, &gammas, Some(10)).unwrap().k, 10);
        assert_eq!(select_count(1, &[1.0], None).unwrap().k, 1);
    }

    #[test]
    fn override_is_clamped_with_warning() {
        let c = select_count(4, &[0.25; 4], Some(9)).unwrap();
        assert_eq!(c.k, 4);
        assert!(c.warning.is_some());
        assert_eq!(select_count(4, &[0.25; 4], Some(0)).unwrap().k, 1);
    }

    #[test]
    fn full_draw_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids = [0, 1, 2, 3, 4];
        let mut d = weighted_sample_without_replacement(&ids, &[0.1, 0.0, 0.5, 0.4, 0.0], 5, &mut rng).unwrap();
        d.sort_unstable();
        assert_eq!(d, ids);
    }

    #[test]
    fn degenerate_weight_always_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d = weighted_sample_without_replacement(&[0, 1, 2], &[1.0, 0.0, 0.0], 1, &mut rng).unwrap();
            assert_eq!(d, vec![0]);
        }
    }

    #[test]
    fn sampling_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(weighted_sample_without_replacement(&[0, 1], &[0.5, 0.5], 3, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[0, 1], &[0.5], 1, &mut rng).is_err());
    }

    #[test]
    fn round_zero_takes_everyone() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = select_all(6);
        assert_eq!(out.selected_ids, vec![0, 1, 2, 3, 4, 5]);
        assert!((out.gammas().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let later = select_with_betas(1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], None, &mut rng).unwrap();
        assert_eq!(later.selected_ids.len(), 1);
        let full = select_with_betas(1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Some(6), &mut rng).unwrap();
        assert_eq!(full.selected_ids.len(), 6);
    }
}
