//! Adam and AdaGrad.

use serde::{Deserialize, Serialize};

use super::ModelParams;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Element-wise bias-corrected Adam step at (1-based) step `t`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn adam_update_slice(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        param[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Element-wise AdaGrad step: `p -= lr g / (sqrt(accum) + eps)`.
#[inline]
pub fn adagrad_update_slice(param: &mut [f64], grad: &[f64], accum: &mut [f64], lr: f64, eps: f64) {
    for i in 0..param.len() {
        let g = grad[i];
        accum[i] += g * g;
        param[i] -= lr * g / (accum[i].sqrt() + eps);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64) -> AdamState {
        let lens: Vec<usize> = params.tensors().iter().map(|t| t.2.len()).collect();
        AdamState::for_lengths(&lens, lr)
    }

    pub fn for_lengths(lens: &[usize], lr: f64) -> AdamState {
        AdamState {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            t: 0,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), self.m.len(), "tensor count");
        self.t += 1;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            adam_update_slice(p, g, &mut self.m[k], &mut self.v[k], self.lr, self.beta1, self.beta2, self.eps, self.t);
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        let g: Vec<&[f64]> = grads.tensors().into_iter().map(|t| t.2).collect();
        self.step(params.tensors_mut(), g);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdagradState {
    pub lr: f64,
    pub eps: f64,
    pub accum: Vec<Vec<f64>>,
}

impl AdagradState {
    pub fn for_lengths(lens: &[usize], lr: f64) -> AdagradState {
        AdagradState { lr, eps: 1e-8, accum: lens.iter().map(|&n| vec![0.0; n]).collect() }
    }

    pub fn new(params: &ModelParams, lr: f64) -> AdagradState {
        let lens: Vec<usize> = params.tensors().iter().map(|t| t.2.len()).collect();
        AdagradState::for_lengths(&lens, lr)
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            adagrad_update_slice(p, g, &mut self.accum[k], self.lr, self.eps);
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        let g: Vec<&[f64]> = grads.tensors().into_iter().map(|t| t.2).collect();
        self.step(params.tensors_mut(), g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_lr() {
        let mut state = AdamState::for_lengths(&[1], 0.01);
        let mut p = vec![1.0];
        state.step(vec![p.as_mut_slice()], vec![&[0.3]]);
        // mhat = g, vhat = g^2 after bias correction
        let expected = 0.01 * 0.3 / (0.3 + 1e-8);
        assert!(((1.0 - p[0]) - expected).abs() < 1e-15);
        assert!(((1.0 - p[0]) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn adagrad_second_step() {
        let mut state = AdagradState::for_lengths(&[1], 0.1);
        let mut p = vec![0.0];
        state.step(vec![p.as_mut_slice()], vec![&[1.0]]);
        let after_one = p[0];
        state.step(vec![p.as_mut_slice()], vec![&[1.0]]);
        let delta = (p[0] - after_one).abs();
        assert!((delta - 0.1 / 2f64.sqrt()).abs() < 1e-8);
        assert!((delta - 0.0707).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.25, -3.0];
        let mut adam = AdamState::for_lengths(&[2], 0.01);
        adam.step(vec![p.as_mut_slice()], vec![&[0.0, 0.0]]);
        assert_eq!(p, vec![0.25, -3.0]);
        let mut ada = AdagradState::for_lengths(&[2], 0.1);
        ada.step(vec![p.as_mut_slice()], vec![&[0.0, 0.0]]);
        assert_eq!(p, vec![0.25, -3.0]);
    }
}
