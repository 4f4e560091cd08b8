//! Minimal dense neural-network substrate: multilayer perceptrons with
//! hand-derived reverse-mode gradients and an Adam optimizer.
//!
//! Everything is `f64`. Hidden layers apply `tanh`, the output layer is
//! identity, so a freshly zeroed final layer makes the whole net the zero
//! map regardless of earlier layers.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A dense feed-forward network. Weights are row-major `(out_dim, in_dim)`
/// per layer; biases are one vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Intermediate activations captured by [`Mlp::forward`], consumed by
/// [`Mlp::backward`]. `post[i]` is the input to layer `i`; `post.last()` is
/// the network output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    post: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("cache is never empty")
    }
}

/// Parameter gradients shape-congruent to an [`Mlp`], plus the gradient with
/// respect to the network input.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub d_weights: Vec<Vec<f64>>,
    pub d_biases: Vec<Vec<f64>>,
    pub d_input: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights (`U[-r, r]`, `r = sqrt(6 / (fan_in + fan_out))`),
    /// zero biases. Identical `(layer_dims, seed)` pairs produce bit-identical
    /// parameters.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::invalid("mlp needs at least input and output dims"));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("all layer dims must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for win in layer_dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-r, r);
            weights.push((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self { layer_dims: layer_dims.to_vec(), weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Zeroes the final layer so the net computes the zero map. Used by the
    /// flow to start as an exact identity transform.
    pub fn zero_final_layer(&mut self) {
        for w in self.weights.last_mut().unwrap() {
            *w = 0.0;
        }
        for b in self.biases.last_mut().unwrap() {
            *b = 0.0;
        }
    }

    /// Runs the net, returning the output and the cache needed by
    /// [`Mlp::backward`].
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "mlp input length {} != expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.num_layers();
        let mut post = Vec::with_capacity(n_layers + 1);
        post.push(input.to_vec());
        for i in 0..n_layers {
            let (rows, cols) = (self.layer_dims[i + 1], self.layer_dims[i]);
            let w = &self.weights[i];
            let x = post.last().unwrap();
            let mut out = self.biases[i].clone();
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for (wv, xv) in row.iter().zip(x.iter()) {
                    acc += wv * xv;
                }
                out[r] += acc;
            }
            if i + 1 < n_layers {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            post.push(out);
        }
        let output = post.last().unwrap().clone();
        Ok((output, MlpCache { post }))
    }

    /// Reverse-mode gradients of `upstream . output` with respect to every
    /// parameter and the input. `cache` must come from a forward pass on the
    /// same network.
    pub fn backward(&self, cache: &MlpCache, upstream: &[f64]) -> Result<MlpGradients> {
        let n_layers = self.num_layers();
        if cache.post.len() != n_layers + 1 {
            return Err(Error::invalid("stale cache: layer count mismatch"));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::invalid(format!(
                "upstream length {} != output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        for (i, p) in cache.post.iter().enumerate() {
            if p.len() != self.layer_dims[i] {
                return Err(Error::invalid("stale cache: activation shape mismatch"));
            }
        }
        let mut d_weights: Vec<Vec<f64>> =
            self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut d_biases: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();

        let mut delta = upstream.to_vec();
        for i in (0..n_layers).rev() {
            let (rows, cols) = (self.layer_dims[i + 1], self.layer_dims[i]);
            // tanh'(z) = 1 - tanh(z)^2, recovered from the cached activation.
            if i + 1 < n_layers {
                let act = &cache.post[i + 1];
                for (d, a) in delta.iter_mut().zip(act.iter()) {
                    *d *= 1.0 - a * a;
                }
            }
            let x = &cache.post[i];
            let dw = &mut d_weights[i];
            for r in 0..rows {
                let dr = delta[r];
                d_biases[i][r] = dr;
                let row = &mut dw[r * cols..(r + 1) * cols];
                for (slot, xv) in row.iter_mut().zip(x.iter()) {
                    *slot = dr * xv;
                }
            }
            let w = &self.weights[i];
            let mut next = vec![0.0; cols];
            for r in 0..rows {
                let dr = delta[r];
                let row = &w[r * cols..(r + 1) * cols];
                for (nv, wv) in next.iter_mut().zip(row.iter()) {
                    *nv += dr * wv;
                }
            }
            delta = next;
        }
        Ok(MlpGradients { d_weights, d_biases, d_input: delta })
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Appends all parameters (per layer: weights then biases) to `out`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(self.biases.iter()) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }

    /// Reads parameters back in [`Mlp::flatten_into`] order.
    pub fn unflatten_from(&mut self, src: &mut impl Iterator<Item = f64>) {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for slot in w.iter_mut().chain(b.iter_mut()) {
                *slot = src.next().expect("parameter vector too short");
            }
        }
    }

    pub(crate) fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub(crate) fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub(crate) fn from_raw(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if layer_dims.len() < 2
            || weights.len() != layer_dims.len() - 1
            || biases.len() != layer_dims.len() - 1
        {
            return Err(Error::invalid("inconsistent mlp description"));
        }
        for (i, win) in layer_dims.windows(2).enumerate() {
            if weights[i].len() != win[0] * win[1] || biases[i].len() != win[1] {
                return Err(Error::invalid(format!("layer {i} parameter shape mismatch")));
            }
        }
        if weights.iter().chain(biases.iter()).flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite mlp parameters"));
        }
        Ok(Self { layer_dims, weights, biases })
    }
}

impl MlpGradients {
    /// Appends gradients in the same order as [`Mlp::flatten_into`].
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.d_weights.iter().zip(self.d_biases.iter()) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }

    /// Adds gradients into a flat accumulator slice, returning how many
    /// entries were consumed.
    pub fn accumulate_into(&self, acc: &mut [f64]) -> usize {
        let mut i = 0;
        for (w, b) in self.d_weights.iter().zip(self.d_biases.iter()) {
            for g in w.iter().chain(b.iter()) {
                acc[i] += g;
                i += 1;
            }
        }
        i
    }
}

/// Bias-corrected Adam state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. Rejects non-finite gradients without touching the
    /// parameters or the moment accumulators.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam state sized for {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite gradient in adam update"));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
