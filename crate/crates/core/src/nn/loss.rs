use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::LayerSpec;
use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Pairs with a single-column sigmoid head.
    BinaryCrossEntropy,
    /// Pairs with a softmax head over two or more classes.
    CrossEntropy,
}

impl LossKind {
    pub fn for_classes(class_count: usize) -> Self {
        if class_count <= 2 {
            LossKind::BinaryCrossEntropy
        } else {
            LossKind::CrossEntropy
        }
    }

    pub fn head(self) -> LayerSpec {
        match self {
            LossKind::BinaryCrossEntropy => LayerSpec::Sigmoid,
            LossKind::CrossEntropy => LayerSpec::Softmax,
        }
    }

    pub fn output_width(self, class_count: usize) -> usize {
        match self {
            LossKind::BinaryCrossEntropy => 1,
            LossKind::CrossEntropy => class_count,
        }
    }

    pub fn check_head(self, specs: &[LayerSpec]) -> Result<()> {
        if specs.last() != Some(&self.head()) {
            return Err(Error::LossHead(format!(
                "{self:?} needs a {:?} head, model ends with {:?}",
                self.head(),
                specs.last()
            )));
        }
        Ok(())
    }

    fn check_shapes(self, pred: &Matrix, target: &Matrix) -> Result<()> {
        if pred.shape() != target.shape() {
            return Err(Error::dim(
                "loss target",
                format!("{:?}", pred.shape()),
                format!("{:?}", target.shape()),
            ));
        }
        match self {
            LossKind::BinaryCrossEntropy if pred.cols() != 1 => {
                Err(Error::LossHead(format!("BCE needs 1 output column, got {}", pred.cols())))
            }
            LossKind::CrossEntropy if pred.cols() < 2 => {
                Err(Error::LossHead(format!("CE needs >= 2 output columns, got {}", pred.cols())))
            }
            _ => Ok(()),
        }
    }

    fn check_probabilities(self, pred: &Matrix) -> Result<()> {
        if pred.as_slice().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidArgument("predictions outside [0,1]".into()));
        }
        if self == LossKind::CrossEntropy {
            for r in 0..pred.rows() {
                let s: f64 = pred.row(r).iter().sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "row {r} of predictions sums to {s}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn mean_loss(kind: LossKind, pred: &Matrix, target: &Matrix) -> f64 {
    let b = pred.rows().max(1) as f64;
    let total: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| {
            let p = clamp(p);
            match kind {
                LossKind::BinaryCrossEntropy => -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()),
                LossKind::CrossEntropy => -t * p.ln(),
            }
        })
        .sum();
    (total / b).max(0.0)
}

/// Mean-over-batch loss and its gradient w.r.t. the predictions.
pub fn loss_eval(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    kind.check_shapes(pred, target)?;
    kind.check_probabilities(pred)?;
    let b = pred.rows().max(1) as f64;
    let grad = pred.zip_map(target, |p, t| {
        let p = clamp(p);
        match kind {
            LossKind::BinaryCrossEntropy => (-t / p + (1.0 - t) / (1.0 - p)) / b,
            LossKind::CrossEntropy => -t / p / b,
        }
    })?;
    Ok((mean_loss(kind, pred, target), grad))
}

/// Mean-over-batch loss and the gradient w.r.t. the head's input, using
/// `pred - target` for the sigmoid/BCE and softmax/CE pairings.
pub fn loss_eval_fused(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    kind.check_shapes(pred, target)?;
    kind.check_probabilities(pred)?;
    let b = pred.rows().max(1) as f64;
    let grad = pred.zip_map(target, |p, t| (p - t) / b)?;
    Ok((mean_loss(kind, pred, target), grad))
}

/// Builds the target matrix for class-index labels.
pub fn targets(kind: LossKind, labels: &[usize], class_count: usize) -> Result<Matrix> {
    match kind {
        LossKind::BinaryCrossEntropy => {
            if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
                return Err(Error::LossHead(format!("binary target label {bad}")));
            }
            Matrix::new(labels.len(), 1, labels.iter().map(|&l| l as f64).collect())
        }
        LossKind::CrossEntropy => {
            let mut m = Matrix::zeros(labels.len(), class_count);
            for (r, &l) in labels.iter().enumerate() {
                if l >= class_count {
                    return Err(Error::LossHead(format!("label {l} >= {class_count} classes")));
                }
                m.set(r, l, 1.0)?;
            }
            Ok(m)
        }
    }
}

/// Predicted class per row.
pub fn predicted_classes(kind: LossKind, pred: &Matrix) -> Vec<usize> {
    (0..pred.rows())
        .map(|r| match kind {
            LossKind::BinaryCrossEntropy => usize::from(pred.get(r, 0) >= 0.5),
            LossKind::CrossEntropy => pred
                .row(r)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0,
        })
        .collect()
}

pub fn accuracy(kind: LossKind, pred: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted_classes(kind, pred)
        .iter()
        .zip(labels)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn bce_perfect_prediction_is_tiny() {
        let t = col(&[1.0, 0.0, 1.0]);
        let (loss, _) = loss_eval(LossKind::BinaryCrossEntropy, &t, &t).unwrap();
        assert!(loss <= 1e-10, "{loss}");
    }

    #[test]
    fn bce_half_is_ln2() {
        let (loss, grad) = loss_eval(LossKind::BinaryCrossEntropy, &col(&[0.5]), &col(&[1.0])).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((grad.get(0, 0) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn ce_uniform_is_ln_k() {
        for k in 2..7 {
            let pred = Matrix::new(3, k, vec![1.0 / k as f64; 3 * k]).unwrap();
            let target = targets(LossKind::CrossEntropy, &[0, k - 1, 1], k).unwrap();
            let (loss, _) = loss_eval(LossKind::CrossEntropy, &pred, &target).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_perfect_one_hot_is_tiny() {
        let t = targets(LossKind::CrossEntropy, &[2, 0], 3).unwrap();
        let (loss, _) = loss_eval(LossKind::CrossEntropy, &t, &t).unwrap();
        assert!(loss <= 1e-10);
    }

    #[test]
    fn shape_and_head_errors() {
        let p = Matrix::new(1, 2, vec![0.5, 0.5]).unwrap();
        assert!(loss_eval(LossKind::BinaryCrossEntropy, &p, &p).is_err());
        assert!(loss_eval(LossKind::CrossEntropy, &col(&[0.5]), &col(&[1.0])).is_err());
        assert!(loss_eval(LossKind::BinaryCrossEntropy, &col(&[0.5]), &col(&[1.0, 0.0])).is_err());
        let bad = Matrix::new(1, 2, vec![0.9, 0.9]).unwrap();
        assert!(loss_eval(LossKind::CrossEntropy, &bad, &p).is_err());
    }

    #[test]
    fn fused_grad_is_pred_minus_target_over_batch() {
        let (_, g) =
            loss_eval_fused(LossKind::BinaryCrossEntropy, &col(&[0.25, 0.5]), &col(&[1.0, 0.0])).unwrap();
        assert_eq!(g.as_slice(), &[-0.375, 0.25]);
    }

    #[test]
    fn accuracy_counts_hits() {
        let pred = col(&[0.9, 0.2, 0.6, 0.4]);
        assert_eq!(accuracy(LossKind::BinaryCrossEntropy, &pred, &[1, 0, 0, 0]), 0.75);
    }
}
