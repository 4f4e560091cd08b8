//! Joint likelihood training of the flow parameters and the latent dynamics.
//!
//! The loss is the negative mean per-timestep log-likelihood of the scored
//! range (the first `k` observations only ever serve as context):
//!
//! ```text
//! nll_t = D/2 ln(2 pi) + ||z_t - mu_t||^2 / 2 - logdet_t
//! ```
//!
//! with `z_t = F(x_t | W_t)` and `mu_t` unrolled from `mu_0` through the
//! dynamics. Gradients reach the flow through `z` and `logdet`, and reach
//! `A`/`b` through the entire mean recursion (backpropagation through time).
//! In the mini-batch regime the recursion carries the final mean of one
//! batch into the next as a constant, truncating the gradient at the batch
//! boundary; a single batch covering everything recovers the sequential
//! loss and gradients exactly.

use serde::{Deserialize, Serialize};

use crate::dynamics::{LgLdm, Mu0Policy};
use crate::error::{Error, Result};
use crate::flow::{ContextWindow, FlowModel};
use crate::nn::AdamState;
use crate::series::TimeSeries;

const LN_2PI: f64 = 1.8378770664093453;

/// Training regime: one update per full pass, or one update per contiguous
/// mini-batch of scored timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Sequential,
    Minibatch { batch_size: usize },
}

impl Default for Regime {
    fn default() -> Self {
        Regime::Sequential
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// temporal context length k
    pub context: usize,
    /// number of coupling layers L
    pub layers: usize,
    pub hidden_layers: usize,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub regime: Regime,
    pub learn_b: bool,
    pub scale_clamp: f64,
    pub mu0_policy: Mu0Policy,
    /// initial transition matrix is `a_init * I`
    pub a_init: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            context: 20,
            layers: 6,
            hidden_layers: 1,
            hidden_size: 64,
            learning_rate: 0.003,
            epochs: 600,
            regime: Regime::Minibatch { batch_size: 128 },
            learn_b: true,
            scale_clamp: 2.0,
            mu0_policy: Mu0Policy::Zero,
            a_init: 0.9,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, series_len: usize) -> Result<()> {
        if self.context == 0 || self.layers == 0 || self.hidden_size == 0 {
            return Err(Error::invalid("context, layers and hidden_size must be >= 1"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.scale_clamp <= 0.0 {
            return Err(Error::invalid("scale clamp must be positive"));
        }
        if series_len <= self.context + 1 {
            return Err(Error::invalid(format!(
                "series length {series_len} too short for context {}",
                self.context
            )));
        }
        if let Regime::Minibatch { batch_size } = self.regime {
            let scored = series_len - self.context;
            if batch_size == 0 || batch_size > scored {
                return Err(Error::invalid(format!(
                    "batch size {batch_size} must be in [1, {scored}]"
                )));
            }
        }
        Ok(())
    }

    fn hidden_dims(&self) -> Vec<usize> {
        vec![self.hidden_size; self.hidden_layers]
    }
}

/// Flow + dynamics pair under training or loaded from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub flow: FlowModel,
    pub ldm: LgLdm,
}

impl Model {
    /// Fresh model per the config: identity flow, `A = a_init * I`, `b = 0`.
    pub fn init(config: &TrainConfig, dims: usize) -> Result<Self> {
        let flow = FlowModel::new(
            dims,
            config.context,
            config.layers,
            &config.hidden_dims(),
            config.scale_clamp,
            config.seed,
        )?;
        let mut ldm = LgLdm::identity_scaled(dims, config.a_init);
        ldm.learn_b = config.learn_b;
        ldm.mu0_policy = config.mu0_policy;
        Ok(Self { flow, ldm })
    }

    pub fn param_count(&self) -> usize {
        let d = self.ldm.dims();
        self.flow.param_count() + d * d + d
    }

    /// Flat layout: flow parameters, then `A` row-major, then `b`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.flow.flatten_into(&mut out);
        out.extend_from_slice(self.ldm.a());
        out.extend_from_slice(self.ldm.b());
        out
    }

    pub fn unflatten(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "parameter vector length {} != expected {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut it = params.iter().copied();
        self.flow.unflatten_from(&mut it);
        for slot in self.ldm.a_mut() {
            *slot = it.next().unwrap();
        }
        for slot in self.ldm.b_mut() {
            *slot = it.next().unwrap();
        }
        Ok(())
    }
}

/// Loss value plus flat gradient (laid out like [`Model::flatten`]).
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// final unrolled mean, the carried state for a successor mini-batch
    pub carried_mu: Vec<f64>,
}

fn context_at(series: &TimeSeries, t: usize, k: usize) -> Result<ContextWindow> {
    ContextWindow::from_rows(&series.rows()[t - k..t])
}

/// Per-timestep negative log-likelihood terms over a contiguous scored range
/// `[t_start, t_end)`, with means unrolled from `mu_carry` (one dynamics step
/// before each scored observation). Forward-only shared core.
fn nll_terms_range(
    model: &Model,
    series: &TimeSeries,
    k: usize,
    t_start: usize,
    t_end: usize,
    mu_carry: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dims = series.dims() as f64;
    let mut mus = Vec::with_capacity(t_end - t_start);
    let mut terms = Vec::with_capacity(t_end - t_start);
    let mut mu = mu_carry.to_vec();
    for t in t_start..t_end {
        mu = model.ldm.step(&mu)?;
        let ctx = context_at(series, t, k)?;
        let (z, logdet) = model.flow.normalize(series.row(t), &ctx)?;
        let sq: f64 = z.iter().zip(mu.iter()).map(|(zv, mv)| (zv - mv).powi(2)).sum();
        terms.push(0.5 * dims * LN_2PI + 0.5 * sq - logdet);
        mus.push(mu.clone());
    }
    Ok((terms, mus))
}

/// Loss and gradients over one contiguous batch of scored timesteps.
/// `mu_carry` is treated as a constant, so gradients to the dynamics are
/// truncated at the batch boundary.
fn loss_grad_range(
    model: &Model,
    series: &TimeSeries,
    k: usize,
    t_start: usize,
    t_end: usize,
    mu_carry: &[f64],
) -> Result<LossGrad> {
    let dims = series.dims();
    let count = t_end - t_start;
    let inv_n = 1.0 / count as f64;
    let mut grad = vec![0.0; model.param_count()];
    let flow_params = model.flow.param_count();
    let (a_off, b_off) = (flow_params, flow_params + dims * dims);

    // forward: means, latents, caches
    let mut mu = mu_carry.to_vec();
    let mut mus = Vec::with_capacity(count);
    let mut loss = 0.0;
    // adjoints of mu_t accumulate the direct term; the recursion closes in
    // the reverse sweep below
    let mut d_mu_direct = vec![vec![0.0; dims]; count];
    for (i, t) in (t_start..t_end).enumerate() {
        mu = model.ldm.step(&mu)?;
        let ctx = context_at(series, t, k)?;
        let (z, logdet, cache) = model.flow.normalize_cached(series.row(t), &ctx)?;
        let mut sq = 0.0;
        let mut d_z = vec![0.0; dims];
        for d in 0..dims {
            let r = z[d] - mu[d];
            sq += r * r;
            d_z[d] = r * inv_n;
            d_mu_direct[i][d] = -r * inv_n;
        }
        loss += (0.5 * dims as f64 * LN_2PI + 0.5 * sq - logdet) * inv_n;
        let (_, flow_grads) = model.flow.backward(&cache, &d_z, -inv_n)?;
        flow_grads.accumulate_into(&mut grad[..flow_params]);
        mus.push(mu.clone());
    }
    if !loss.is_finite() {
        return Err(Error::numeric(format!("non-finite loss over [{t_start}, {t_end})")));
    }

    // backpropagation through time over mu_i = A mu_{i-1} + b
    let a = model.ldm.a();
    let mut carry = vec![0.0; dims];
    for i in (0..count).rev() {
        let total: Vec<f64> =
            (0..dims).map(|d| d_mu_direct[i][d] + carry[d]).collect();
        let prev: &[f64] = if i == 0 { mu_carry } else { &mus[i - 1] };
        for r in 0..dims {
            for c in 0..dims {
                grad[a_off + r * dims + c] += total[r] * prev[c];
            }
            grad[b_off + r] += total[r];
        }
        // carry = A^T total
        let mut next = vec![0.0; dims];
        for r in 0..dims {
            for c in 0..dims {
                next[c] += a[r * dims + c] * total[r];
            }
        }
        carry = next;
    }

    Ok(LossGrad { loss, grad, carried_mu: mus.last().cloned().unwrap_or_else(|| mu_carry.to_vec()) })
}

/// Sequential loss over the whole scored range with full BPTT.
pub fn loss_sequential(model: &Model, series: &TimeSeries, k: usize) -> Result<LossGrad> {
    if series.len() <= k {
        return Err(Error::invalid("series shorter than context"));
    }
    let mu0 = model.ldm.mu_init();
    loss_grad_range(model, series, k, k, series.len(), &mu0)
}

/// Sequential loss value only (no gradient work).
pub fn loss_value(model: &Model, series: &TimeSeries, k: usize) -> Result<f64> {
    let (terms, _) = nll_terms_range(model, series, k, k, series.len(), &model.ldm.mu_init())?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Mini-batch loss: the scored sub-range `[t_start, t_start + len)` with the
/// mean carried in from the predecessor batch.
pub fn loss_minibatch(
    model: &Model,
    series: &TimeSeries,
    k: usize,
    t_start: usize,
    len: usize,
    carried_mu: &[f64],
) -> Result<LossGrad> {
    if t_start < k || t_start + len > series.len() || len == 0 {
        return Err(Error::invalid(format!(
            "batch [{t_start}, {}) outside scored range [{k}, {})",
            t_start + len,
            series.len()
        )));
    }
    loss_grad_range(model, series, k, t_start, t_start + len, carried_mu)
}

/// A serialized training artifact: model parameters, config echo, loss
/// trace and the carried mean state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: usize,
    pub config: TrainConfig,
    pub flow: FlowModelSpec,
    pub ldm_a: Vec<f64>,
    pub ldm_b: Vec<f64>,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
    pub carried_mu: Vec<f64>,
    pub spectral_radius: f64,
}

/// Raw, serde-friendly description of a flow; validated when turned back
/// into a [`FlowModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowModelSpec {
    pub dims: usize,
    pub context: usize,
    pub clamp: f64,
    pub layers: Vec<CouplingSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub mask: Vec<bool>,
    pub scale_dims: Vec<usize>,
    pub scale_weights: Vec<Vec<f64>>,
    pub scale_biases: Vec<Vec<f64>>,
    pub translate_dims: Vec<usize>,
    pub translate_weights: Vec<Vec<f64>>,
    pub translate_biases: Vec<Vec<f64>>,
}

impl FlowModelSpec {
    pub fn from_model(flow: &FlowModel) -> Self {
        let layers = flow
            .layers()
            .iter()
            .map(|layer| CouplingSpec {
                mask: layer.mask().to_vec(),
                scale_dims: layer.scale_net().layer_dims().to_vec(),
                scale_weights: layer.scale_net().weights().to_vec(),
                scale_biases: layer.scale_net().biases().to_vec(),
                translate_dims: layer.translate_net().layer_dims().to_vec(),
                translate_weights: layer.translate_net().weights().to_vec(),
                translate_biases: layer.translate_net().biases().to_vec(),
            })
            .collect();
        Self {
            dims: flow.dims(),
            context: flow.context_len(),
            clamp: flow.layers()[0].clamp(),
            layers,
        }
    }

    pub fn into_model(self) -> Result<FlowModel> {
        use crate::flow::CouplingLayer;
        use crate::nn::Mlp;
        let mut layers = Vec::with_capacity(self.layers.len());
        for spec in self.layers {
            let scale = Mlp::from_raw(spec.scale_dims, spec.scale_weights, spec.scale_biases)?;
            let translate =
                Mlp::from_raw(spec.translate_dims, spec.translate_weights, spec.translate_biases)?;
            layers.push(CouplingLayer::from_parts(spec.mask, scale, translate, self.clamp)?);
        }
        FlowModel::from_layers(layers, self.dims, self.context)
    }
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn from_model(model: &Model, config: &TrainConfig, final_loss: f64, loss_history: Vec<f64>, carried_mu: Vec<f64>) -> Self {
        let rho = crate::dynamics::spectral_radius(model.ldm.a(), model.ldm.dims())
            .unwrap_or(f64::NAN);
        Self {
            format_version: Self::FORMAT_VERSION,
            dims: model.flow.dims(),
            config: config.clone(),
            flow: FlowModelSpec::from_model(&model.flow),
            ldm_a: model.ldm.a().to_vec(),
            ldm_b: model.ldm.b().to_vec(),
            final_loss,
            loss_history,
            carried_mu,
            spectral_radius: rho,
        }
    }

    pub fn into_model(self) -> Result<(Model, TrainConfig)> {
        if self.format_version != Self::FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        let flow = self.flow.into_model()?;
        let ldm = LgLdm::from_parts(
            self.dims,
            self.ldm_a,
            self.ldm_b,
            self.config.learn_b,
            self.config.mu0_policy,
        )?;
        Ok((Model { flow, ldm }, self.config))
    }
}

/// Outcome of [`train`]: the model, per-epoch loss trace, and the carried
/// mean from the last pass.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    pub carried_mu: Vec<f64>,
}

/// Runs the configured number of epochs with Adam. Sequential regime: one
/// update per pass. Mini-batch regime: one update per batch, means carried
/// across batch boundaries within a pass and reset each pass. If the loss
/// turns non-finite the last finite state is returned as an error payload
/// via the diagnostic message.
pub fn train(config: &TrainConfig, series: &TimeSeries) -> Result<TrainOutcome> {
    config.validate(series.len())?;
    let dims = series.dims();
    if dims < 2 {
        return Err(Error::invalid(
            "training needs dims >= 2; duplicate univariate input first",
        ));
    }
    let mut model = Model::init(config, dims)?;
    let k = config.context;
    let scored = series.len() - k;
    let mut params = model.flatten();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let flow_params = model.flow.param_count();
    let b_off = flow_params + dims * dims;

    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut carried_mu = model.ldm.mu_init();
    for epoch in 0..config.epochs {
        let epoch_loss = match config.regime {
            Regime::Sequential => {
                let lg = loss_sequential(&model, series, k).map_err(|e| {
                    Error::numeric(format!("epoch {epoch}: {e}; aborting with last finite state"))
                })?;
                apply_update(&mut model, &mut params, &mut adam, &lg.grad, b_off, dims, config.learn_b)?;
                carried_mu = lg.carried_mu;
                lg.loss
            }
            Regime::Minibatch { batch_size } => {
                let mut mu = model.ldm.mu_init();
                let mut acc = 0.0;
                let mut start = k;
                let mut batches = 0;
                while start < series.len() {
                    let len = batch_size.min(series.len() - start);
                    let lg = loss_minibatch(&model, series, k, start, len, &mu).map_err(|e| {
                        Error::numeric(format!(
                            "epoch {epoch} batch at {start}: {e}; aborting with last finite state"
                        ))
                    })?;
                    apply_update(&mut model, &mut params, &mut adam, &lg.grad, b_off, dims, config.learn_b)?;
                    mu = lg.carried_mu;
                    acc += lg.loss * len as f64;
                    batches += 1;
                    start += len;
                }
                carried_mu = mu;
                let _ = batches;
                acc / scored as f64
            }
        };
        loss_history.push(epoch_loss);
    }
    let final_loss = if config.epochs == 0 {
        loss_value(&model, series, k)?
    } else {
        *loss_history.last().unwrap()
    };
    Ok(TrainOutcome { model, loss_history, final_loss, carried_mu })
}

fn apply_update(
    model: &mut Model,
    params: &mut [f64],
    adam: &mut AdamState,
    grad: &[f64],
    b_off: usize,
    dims: usize,
    learn_b: bool,
) -> Result<()> {
    let mut g = grad.to_vec();
    if !learn_b {
        for slot in &mut g[b_off..b_off + dims] {
            *slot = 0.0;
        }
    }
    adam.step(params, &g)?;
    if !learn_b {
        // keep b bit-exact at its initial value
        for slot in &mut params[b_off..b_off + dims] {
            *slot = 0.0;
        }
    }
    model.unflatten(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_base, SignalSpec};

    fn tiny_series(t: usize, dims: usize, seed: u64) -> TimeSeries {
        let spec = SignalSpec {
            dims,
            length: t,
            frequencies: (0..dims).map(|d| 0.01 + 0.005 * d as f64).collect(),
            amplitudes: vec![1.0; dims],
            phases: (0..dims).map(|d| 0.3 * d as f64).collect(),
            noise_sigma: 0.3,
            seed,
        };
        generate_base(&spec).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            context: 3,
            layers: 2,
            hidden_layers: 1,
            hidden_size: 8,
            learning_rate: 0.01,
            epochs: 5,
            regime: Regime::Sequential,
            learn_b: true,
            scale_clamp: 5.0,
            mu0_policy: Mu0Policy::Zero,
            a_init: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn identity_flow_loss_is_gaussian_nll() {
        // zero flow (identity), A = 0, b = 0: the loss is the plain
        // standard-normal NLL of the raw observations
        let series = tiny_series(40, 2, 1);
        let config = tiny_config();
        let mut model = Model::init(&config, 2).unwrap();
        let zeros = vec![0.0; model.param_count()];
        model.unflatten(&zeros).unwrap();
        let lg = loss_sequential(&model, &series, 3).unwrap();
        let k = 3;
        let scored = series.len() - k;
        let expected: f64 = (k..series.len())
            .map(|t| {
                let sq: f64 = series.row(t).iter().map(|v| v * v).sum();
                LN_2PI + 0.5 * sq
            })
            .sum::<f64>()
            / scored as f64;
        assert!((lg.loss - expected).abs() < 1e-10, "{} vs {expected}", lg.loss);
    }

    #[test]
    fn gradients_match_finite_differences_sequential() {
        // tiny instance: D=2, T=30, k=3, L=2, hidden 8
        let series = tiny_series(30, 2, 2);
        let config = tiny_config();
        let mut model = Model::init(&config, 2).unwrap();
        // nudge away from the zeroed-final-layer init so every path is active
        let mut params = model.flatten();
        let mut rng_state = 0x9e3779b97f4a7c15_u64;
        for p in params.iter_mut() {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *p += ((rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.2;
        }
        model.unflatten(&params).unwrap();

        let lg = loss_sequential(&model, &series, 3).unwrap();
        let h = 1e-5;
        for i in (0..params.len()).step_by(7) {
            let mut probe = model.clone();
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[i] += h;
            minus[i] -= h;
            probe.unflatten(&plus).unwrap();
            let lp = loss_value(&probe, &series, 3).unwrap();
            probe.unflatten(&minus).unwrap();
            let lm = loss_value(&probe, &series, 3).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(1e-6);
            assert!(
                (lg.grad[i] - fd).abs() / denom < 1e-4,
                "param {i}: analytic {} vs fd {fd}",
                lg.grad[i]
            );
        }
    }

    #[test]
    fn single_batch_recovers_sequential_loss() {
        let series = tiny_series(50, 2, 3);
        let config = tiny_config();
        let mut model = Model::init(&config, 2).unwrap();
        let mut params = model.flatten();
        for (i, p) in params.iter_mut().enumerate() {
            *p += (i as f64 * 0.618).sin() * 0.1;
        }
        model.unflatten(&params).unwrap();
        let k = 3;
        let seq = loss_sequential(&model, &series, k).unwrap();
        let mb = loss_minibatch(&model, &series, k, k, series.len() - k, &model.ldm.mu_init())
            .unwrap();
        assert!((seq.loss - mb.loss).abs() < 1e-10);
        for (a, b) in seq.grad.iter().zip(mb.grad.iter()) {
            assert!((a - b).abs() < 1e-12, "gradient mismatch {a} vs {b}");
        }
    }

    #[test]
    fn two_half_batches_average_to_sequential_loss() {
        let series = tiny_series(43, 2, 4); // scored = 40
        let config = tiny_config();
        let mut model = Model::init(&config, 2).unwrap();
        let mut params = model.flatten();
        for (i, p) in params.iter_mut().enumerate() {
            *p += (i as f64 * 0.37).cos() * 0.1;
        }
        model.unflatten(&params).unwrap();
        let k = 3;
        let scored = series.len() - k;
        let half = scored / 2;
        let seq = loss_sequential(&model, &series, k).unwrap();
        let b1 = loss_minibatch(&model, &series, k, k, half, &model.ldm.mu_init()).unwrap();
        let b2 = loss_minibatch(&model, &series, k, k + half, scored - half, &b1.carried_mu)
            .unwrap();
        let mean = 0.5 * (b1.loss + b2.loss);
        assert!((mean - seq.loss).abs() < 1e-10, "{mean} vs {}", seq.loss);
    }

    #[test]
    fn first_batch_mean_steps_from_mu_init() {
        // mu_1 = A*0 + b = b for the first scored term
        let series = tiny_series(20, 2, 5);
        let config = tiny_config();
        let mut model = Model::init(&config, 2).unwrap();
        let n = model.param_count();
        let mut params = vec![0.0; n];
        params[n - 2] = 0.7; // b[0]
        params[n - 1] = -0.3; // b[1]
        model.unflatten(&params).unwrap();
        let (_, mus) =
            nll_terms_range(&model, &series, 3, 3, series.len(), &model.ldm.mu_init()).unwrap();
        assert_eq!(mus[0], vec![0.7, -0.3]);
    }

    #[test]
    fn gradients_match_finite_differences_minibatch() {
        // truncation at the boundary is part of the definition: the carried
        // mean is constant, so finite differences of the batch loss with the
        // same carried mean must agree
        let series = tiny_series(30, 2, 6);
        let config = tiny_config();
        let mut model = Model::init(&config, 2).unwrap();
        let mut params = model.flatten();
        for (i, p) in params.iter_mut().enumerate() {
            *p += (i as f64 * 0.21).sin() * 0.15;
        }
        model.unflatten(&params).unwrap();
        let carried = vec![0.4, -0.2];
        let lg = loss_minibatch(&model, &series, 3, 10, 12, &carried).unwrap();
        let h = 1e-5;
        for i in (0..params.len()).step_by(11) {
            let mut probe = model.clone();
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[i] += h;
            minus[i] -= h;
            probe.unflatten(&plus).unwrap();
            let lp = loss_minibatch(&probe, &series, 3, 10, 12, &carried).unwrap().loss;
            probe.unflatten(&minus).unwrap();
            let lm = loss_minibatch(&probe, &series, 3, 10, 12, &carried).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (lg.grad[i] - fd).abs() / fd.abs().max(1e-6) < 1e-4,
                "param {i}: {} vs {fd}",
                lg.grad[i]
            );
        }
    }

    #[test]
    fn loss_depends_on_time_order() {
        let series = tiny_series(60, 2, 7);
        let config = tiny_config();
        let mut model = Model::init(&config, 2).unwrap();
        let mut params = model.flatten();
        for (i, p) in params.iter_mut().enumerate() {
            *p += (i as f64 * 0.173).sin() * 0.2;
        }
        // a non-trivial b makes the mean trajectory time-dependent
        let n = params.len();
        params[n - 1] = 0.5;
        params[n - 2] = -0.4;
        model.unflatten(&params).unwrap();
        let reversed = TimeSeries::new(
            series.rows().iter().rev().cloned().collect(),
            None,
        )
        .unwrap();
        let a = loss_sequential(&model, &series, 3).unwrap().loss;
        let b = loss_sequential(&model, &reversed, 3).unwrap().loss;
        assert!((a - b).abs() > 1e-8, "loss insensitive to time order: {a} vs {b}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let series = tiny_series(40, 2, 8);
        let mut config = tiny_config();
        config.epochs = 0;
        let outcome = train(&config, &series).unwrap();
        let fresh = Model::init(&config, 2).unwrap();
        assert_eq!(outcome.model.flatten(), fresh.flatten());
        assert!(outcome.loss_history.is_empty());
    }

    #[test]
    fn training_reduces_loss_below_identity_baseline() {
        let series = tiny_series(120, 2, 9);
        let mut config = tiny_config();
        config.epochs = 60;
        config.learning_rate = 0.02;
        let outcome = train(&config, &series).unwrap();
        let init_model = Model::init(&config, 2).unwrap();
        let init_loss = loss_value(&init_model, &series, config.context).unwrap();
        assert!(
            outcome.final_loss < init_loss,
            "final {} !< init {init_loss}",
            outcome.final_loss
        );
    }

    #[test]
    fn frozen_b_stays_exactly_zero() {
        let series = tiny_series(60, 2, 10);
        let mut config = tiny_config();
        config.learn_b = false;
        config.epochs = 20;
        let outcome = train(&config, &series).unwrap();
        assert_eq!(outcome.model.ldm.b(), &[0.0, 0.0]);
    }

    #[test]
    fn training_is_deterministic() {
        let series = tiny_series(50, 2, 11);
        let mut config = tiny_config();
        config.epochs = 10;
        config.regime = Regime::Minibatch { batch_size: 16 };
        let a = train(&config, &series).unwrap();
        let b = train(&config, &series).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model.flatten(), b.model.flatten());
    }

    #[test]
    fn checkpoint_roundtrips_through_json() {
        let series = tiny_series(40, 2, 12);
        let mut config = tiny_config();
        config.epochs = 3;
        let outcome = train(&config, &series).unwrap();
        let ckpt = Checkpoint::from_model(
            &outcome.model,
            &config,
            outcome.final_loss,
            outcome.loss_history.clone(),
            outcome.carried_mu.clone(),
        );
        let json = serde_json::to_string(&ckpt).unwrap();
        let parsed: Checkpoint = serde_json::from_str(&json).unwrap();
        let (restored, cfg) = parsed.into_model().unwrap();
        assert_eq!(cfg, config);
        assert_eq!(restored.flatten(), outcome.model.flatten());
    }

    #[test]
    fn config_validation_rejects_bad_batch() {
        let mut config = tiny_config();
        config.regime = Regime::Minibatch { batch_size: 100 };
        assert!(config.validate(50).is_err());
        config.regime = Regime::Minibatch { batch_size: 0 };
        assert!(config.validate(50).is_err());
    }
}
