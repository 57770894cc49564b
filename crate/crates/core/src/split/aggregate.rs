use super::ClientNode;
use crate::error::{Error, Result};
use crate::nn::{Matrix, ParamSet};

/// Weighted average of aligned parameter sets. Weights are renormalized to
/// sum to one over the provided list.
pub fn global_average(params_list: &[ParamSet], weights: &[f64]) -> Result<ParamSet> {
    let first = params_list
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot average an empty parameter list".into()))?;
    if weights.len() != params_list.len() {
        return Err(Error::dim("averaging weights", params_list.len(), weights.len()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidArgument(format!("averaging weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("averaging weights are all zero".into()));
    }
    for p in &params_list[1..] {
        first.check_aligned(p, "global_average")?;
    }

    let mut acc: Vec<Vec<f64>> = first
        .tensors()
        .map(|t| vec![0.0; t.as_slice().len()])
        .collect();
    for (params, w) in params_list.iter().zip(weights) {
        let w = w / total;
        for (sum, t) in acc.iter_mut().zip(params.tensors()) {
            for (s, v) in sum.iter_mut().zip(t.as_slice()) {
                *s += w * v;
            }
        }
    }
    let mut out = ParamSet::new();
    for ((name, t), values) in first.entries().iter().zip(acc) {
        out.push(name.clone(), Matrix::new(t.rows(), t.cols(), values)?);
    }
    Ok(out)
}

/// Sets every client's half to `global`. Nothing is changed unless all
/// clients accept the shapes.
pub fn broadcast_global(global: &ParamSet, clients: &mut [ClientNode]) -> Result<()> {
    for c in clients.iter() {
        c.params().check_aligned(global, "broadcast_global")?;
    }
    for c in clients.iter_mut() {
        c.set_params(global.clone())?;
    }
    Ok(())
}
