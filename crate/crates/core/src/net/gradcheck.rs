//! Central finite-difference check of the analytic gradients.

use super::{loss, loss_and_grad, ModelParams, SeqInput, SequenceModelConfig};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    /// `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`
    pub rel_error: f64,
    pub max_abs_diff: f64,
}

/// Compares backprop gradients with `(L(θ+ε) − L(θ−ε)) / 2ε` for every
/// parameter, reporting one line per tensor.
pub fn check_gradients(
    config: &SequenceModelConfig,
    params: &ModelParams,
    input: &SeqInput,
    targets: &[usize],
    eps: f64,
) -> Result<Vec<TensorCheck>> {
    let mut analytic = params.zeros_like();
    loss_and_grad(config, params, input, targets, &mut analytic)?;
    let names: Vec<String> = params.tensors().into_iter().map(|t| t.0).collect();
    let analytic: Vec<Vec<f64>> = analytic.tensors().into_iter().map(|t| t.2.to_vec()).collect();

    let mut probe = params.clone();
    let mut report = Vec::with_capacity(names.len());
    for (k, name) in names.into_iter().enumerate() {
        let n = analytic[k].len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.tensors_mut()[k][i];
            probe.tensors_mut()[k][i] = orig + eps;
            let plus = loss(config, &probe, input, targets)?;
            probe.tensors_mut()[k][i] = orig - eps;
            let minus = loss(config, &probe, input, targets)?;
            probe.tensors_mut()[k][i] = orig;
            *slot = (plus - minus) / (2.0 * eps);
        }
        let a = &analytic[k];
        let diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_n = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = norm_a + norm_n;
        let rel_error = if denom > 0.0 { diff / denom } else { 0.0 };
        let max_abs_diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        report.push(TensorCheck { name, rel_error, max_abs_diff });
    }
    Ok(report)
}
