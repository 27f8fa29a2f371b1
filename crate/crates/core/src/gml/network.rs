use rand::Rng;

use crate::error::{CoreError, Result};
use crate::math::{adam_step_in_place, AdamState};

/// Single-hidden-layer perceptron `out = W2·max(0, W1·x + b1) + b2`.
///
/// Parameters live in one flat vector `[W1 | b1 | W2 | b2]` so a single
/// [`AdamState`] covers all of them. `W1` is stored column-major (one
/// contiguous run per input), `W2` row-major (one run per output).
#[derive(Clone, Debug)]
pub struct SubNetwork {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
    adam: AdamState,
}

impl SubNetwork {
    /// Weights uniform in `±1/√fan_in`, zero biases.
    pub fn new<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut net = SubNetwork::zeros(input, hidden, output);
        let a1 = 1.0 / (input as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let (w1, rest) = net.params.split_at_mut(hidden * input);
        for w in w1 {
            *w = rng.gen_range(-a1..a1);
        }
        let w2 = &mut rest[hidden..hidden + output * hidden];
        for w in w2 {
            *w = rng.gen_range(-a2..a2);
        }
        net
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        let n = hidden * input + hidden + output * hidden + output;
        SubNetwork {
            input,
            hidden,
            output,
            params: vec![0.0; n],
            adam: AdamState::new(n),
        }
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn output_width(&self) -> usize {
        self.output
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        (b1, w2, b2)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input {
            return Err(CoreError::Shape(format!(
                "sub-network expects {} inputs, got {}",
                self.input,
                x.len()
            )));
        }
        Ok(())
    }

    /// Forward pass; `pre` receives the hidden pre-activations.
    pub fn forward_into(&self, x: &[f64], pre: &mut Vec<f64>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (b1o, w2o, b2o) = self.offsets();
        let p = &self.params;
        pre.clear();
        pre.extend_from_slice(&p[b1o..b1o + self.hidden]);
        for (i, &v) in x.iter().enumerate() {
            let col = &p[i * self.hidden..(i + 1) * self.hidden];
            for (h, w) in pre.iter_mut().zip(col) {
                *h += w * v;
            }
        }
        let act: Vec<f64> = pre.iter().map(|&h| h.max(0.0)).collect();
        Ok((0..self.output)
            .map(|o| {
                let row = &p[w2o + o * self.hidden..w2o + (o + 1) * self.hidden];
                p[b2o + o] + dot(row, &act)
            })
            .collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.hidden);
        self.forward_into(x, &mut pre)
    }

    /// Adds `∂(grad_out · out)/∂params` to `grads`, given the input and the
    /// pre-activations recorded by [`forward_into`](Self::forward_into).
    pub fn accumulate_param_grad(
        &self,
        x: &[f64],
        pre: &[f64],
        grad_out: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        self.check_input(x)?;
        if grad_out.len() != self.output || pre.len() != self.hidden || grads.len() != self.n_params()
        {
            return Err(CoreError::Shape("sub-network backward buffers".into()));
        }
        let (_, w2o, b2o) = self.offsets();
        let p = &self.params;
        let mut dact = vec![0.0; self.hidden];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads[b2o + o] += g;
            let w_row = &p[w2o + o * self.hidden..w2o + (o + 1) * self.hidden];
            let g_row = &mut grads[w2o + o * self.hidden..w2o + (o + 1) * self.hidden];
            for j in 0..self.hidden {
                let a = pre[j].max(0.0);
                g_row[j] += g * a;
                dact[j] += g * w_row[j];
            }
        }
        for (d, &h) in dact.iter_mut().zip(pre) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        self.add_first_layer(x, &dact, grads);
        Ok(())
    }

    /// Adds the first-layer gradients for one input given the masked
    /// hidden adjoint.
    fn add_first_layer(&self, x: &[f64], dpre: &[f64], grads: &mut [f64]) {
        let b1o = self.hidden * self.input;
        for (gb, d) in grads[b1o..b1o + self.hidden].iter_mut().zip(dpre) {
            *gb += d;
        }
        for (i, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let col = &mut grads[i * self.hidden..(i + 1) * self.hidden];
            for (g, d) in col.iter_mut().zip(dpre) {
                *g += d * v;
            }
        }
    }

    /// [`accumulate_param_grad`](Self::accumulate_param_grad) summed over
    /// several `(input, pre-activations)` pairs that share one `grad_out`.
    pub fn accumulate_shared_grad(
        &self,
        samples: &[(&[f64], &[f64])],
        grad_out: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        if grad_out.len() != self.output || grads.len() != self.n_params() {
            return Err(CoreError::Shape("sub-network backward buffers".into()));
        }
        for (x, pre) in samples {
            self.check_input(x)?;
            if pre.len() != self.hidden {
                return Err(CoreError::Shape("sub-network backward buffers".into()));
            }
        }
        if samples.is_empty() || grad_out.iter().all(|&g| g == 0.0) {
            return Ok(());
        }
        let (_, w2o, b2o) = self.offsets();
        let p = &self.params;
        let mut act_sum = vec![0.0; self.hidden];
        for (_, pre) in samples {
            for (a, &h) in act_sum.iter_mut().zip(pre.iter()) {
                *a += h.max(0.0);
            }
        }
        let mut dact = vec![0.0; self.hidden];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads[b2o + o] += g * samples.len() as f64;
            let w_row = &p[w2o + o * self.hidden..w2o + (o + 1) * self.hidden];
            let g_row = &mut grads[w2o + o * self.hidden..w2o + (o + 1) * self.hidden];
            for j in 0..self.hidden {
                g_row[j] += g * act_sum[j];
                dact[j] += g * w_row[j];
            }
        }
        let mut dpre = vec![0.0; self.hidden];
        for (x, pre) in samples {
            for ((d, &a), &h) in dpre.iter_mut().zip(&dact).zip(pre.iter()) {
                *d = if h > 0.0 { a } else { 0.0 };
            }
            self.add_first_layer(x, &dpre, grads);
        }
        Ok(())
    }

    pub fn apply_adam(&mut self, grads: &[f64], lr: f64) -> Result<()> {
        adam_step_in_place(&mut self.adam, &mut self.params, grads, lr)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Independent accumulators let the compiler vectorise the reduction.
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}
