use super::Dataset;
use crate::nn::Matrix;

pub const STD_FLOOR: f64 = 1e-12;

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn standard_scale_fit(train: &Dataset) -> ScalerParams {
    let x = &train.features;
    let n = x.rows().max(1) as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    ScalerParams { mean, std }
}

/// `(x - mean) / max(std, 1e-12)` per column.
pub fn standard_scale_apply(params: &ScalerParams, ds: &Dataset) -> crate::Result<Dataset> {
    let x = &ds.features;
    if x.cols() != params.mean.len() {
        return Err(crate::Error::dim("scaler columns", params.mean.len(), x.cols()));
    }
    let mut data = Vec::with_capacity(x.as_slice().len());
    for r in 0..x.rows() {
        for ((v, m), s) in x.row(r).iter().zip(&params.mean).zip(&params.std) {
            let scaled = if *s < STD_FLOOR { 0.0 } else { (v - m) / s };
            data.push(scaled);
        }
    }
    Ok(Dataset {
        features: Matrix::new(x.rows(), x.cols(), data)?,
        ..ds.clone()
    })
}
