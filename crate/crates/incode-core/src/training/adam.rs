//! Bias-corrected Adam over a flat parameter vector.

use super::params::ParamLayout;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update in place. A non-finite gradient aborts with the name of
/// the parameter block it belongs to.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    layout: &ParamLayout,
) -> Result<()> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient for {}",
            layout.block_of(idx)
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_layout() -> ParamLayout {
        ParamLayout::from_blocks(vec![("x".to_string(), 1)])
    }

    #[test]
    fn first_step_has_unit_lr_magnitude() {
        let mut state = AdamState::new(1);
        let mut p = [1.0];
        adam_step(&mut state, &mut p, &[0.37], 0.01, &scalar_layout()).unwrap();
        // First step: m_hat = g, v_hat = g^2, so the move is ~lr * sign(g).
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradients_leave_parameters_untouched() {
        let mut state = AdamState::new(3);
        let mut p = [1.0, -2.0, 0.5];
        let layout = ParamLayout::from_blocks(vec![("x".to_string(), 3)]);
        for _ in 0..10 {
            adam_step(&mut state, &mut p, &[0.0; 3], 0.1, &layout).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn three_steps_on_quadratic_match_hand_trace() {
        // Objective f(x) = x^2 starting at x0 = 1 with lr 0.1; gradients 2x.
        // The reference trace below re-derives every quantity explicitly.
        let (beta1, beta2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        let mut x_ref: f64 = 1.0;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * x_ref;
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            let m_hat = m / (1.0 - beta1.powi(t));
            let v_hat = v / (1.0 - beta2.powi(t));
            x_ref -= lr * m_hat / (v_hat.sqrt() + eps);
            expected.push(x_ref);
        }

        let mut state = AdamState::new(1);
        let mut p = [1.0];
        for step in 0..3 {
            let g = [2.0 * p[0]];
            adam_step(&mut state, &mut p, &g, lr, &scalar_layout()).unwrap();
            assert!(
                (p[0] - expected[step]).abs() < 1e-10,
                "step {step}: {} vs {}",
                p[0],
                expected[step]
            );
        }
    }

    #[test]
    fn nan_gradient_names_the_block() {
        let layout = ParamLayout::from_blocks(vec![
            ("composer.layer0.weights".to_string(), 2),
            ("harmonizer.layer1.bias".to_string(), 2),
        ]);
        let mut state = AdamState::new(4);
        let mut p = [0.0; 4];
        let g = [0.0, 0.0, 0.0, f64::NAN];
        let err = adam_step(&mut state, &mut p, &g, 0.1, &layout).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("harmonizer.layer1.bias"), "{msg}");
    }
}
