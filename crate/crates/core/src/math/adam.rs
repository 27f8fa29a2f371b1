use crate::error::{CoreError, Result};

/// First/second moment estimates for one parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// One bias-corrected Adam descent step, applied in place to `params`.
pub fn adam_step_in_place(
    state: &mut AdamState,
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
) -> Result<()> {
    if params.len() != grad.len() || params.len() != state.dim() {
        return Err(CoreError::Shape(format!(
            "adam: params {}, grad {}, moments {}",
            params.len(),
            grad.len(),
            state.dim()
        )));
    }
    if !(lr > 0.0) {
        return Err(CoreError::config("lr", "learning rate must be positive"));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(CoreError::NumericFault(format!(
            "non-finite gradient entry {i} in adam step"
        )));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - b2.powi(state.t.min(i32::MAX as u64) as i32);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Functional form of [`adam_step_in_place`].
pub fn adam_step(state: &mut AdamState, params: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    let mut out = params.to_vec();
    adam_step_in_place(state, &mut out, grad, lr)?;
    Ok(out)
}
