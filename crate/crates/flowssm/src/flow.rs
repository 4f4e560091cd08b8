//! Conditional RealNVP-style normalizing flow: a stack of affine coupling
//! layers with alternating masks, each conditioned on a flattened window of
//! past observations.
//!
//! Every layer splits the coordinates into a pass-through set `a` and a
//! transformed set `b`:
//!
//! ```text
//! y_a = x_a
//! y_b = x_b * exp(s(x_a, ctx)) + t(x_a, ctx)
//! ```
//!
//! with the scale output soft-clamped through `c * tanh(s / c)` so the
//! Jacobian stays bounded during likelihood training. The log-determinant of
//! one layer is just the sum of the clamped scales, so the total log-det of
//! the stack is exact and cheap.

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpCache, MlpGradients};

/// A fixed-length window of past observations `x_{t-k..t-1}`, flattened
/// time-major (oldest timestep first) into the conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    flat: Vec<f64>,
    k: usize,
    dims: usize,
}

impl ContextWindow {
    /// Flattens `rows` (oldest first, one row per timestep) into a window.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("context window needs k >= 1"));
        }
        let dims = rows[0].len();
        if dims == 0 || rows.iter().any(|r| r.len() != dims) {
            return Err(Error::invalid("context rows must share a positive dimension"));
        }
        let mut flat = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            flat.extend_from_slice(row);
        }
        Ok(Self { flat, k: rows.len(), dims })
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> usize {
        self.dims
    }
}

/// One affine coupling layer. `mask[i] = true` marks coordinate `i` as
/// pass-through; the scale and translate nets map
/// `(|a| + k * D) -> |b|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    mask: Vec<bool>,
    scale_net: Mlp,
    translate_net: Mlp,
    clamp: f64,
}

/// Cached intermediates of one coupling forward pass, enough to backprop
/// without re-running the nets.
#[derive(Debug, Clone)]
pub struct CouplingCache {
    x: Vec<f64>,
    scale_cache: MlpCache,
    translate_cache: MlpCache,
    s_raw: Vec<f64>,
    s_clamped: Vec<f64>,
}

/// Parameter gradients for one coupling layer.
#[derive(Debug, Clone)]
pub struct CouplingGradients {
    pub scale: MlpGradients,
    pub translate: MlpGradients,
}

impl CouplingLayer {
    pub fn new(mask: Vec<bool>, context_len: usize, hidden: &[usize], clamp: f64, seed: u64) -> Result<Self> {
        let dims = mask.len();
        let n_a = mask.iter().filter(|&&m| m).count();
        let n_b = dims - n_a;
        if dims >= 2 && (n_a == 0 || n_b == 0) {
            return Err(Error::invalid("mask must keep and transform at least one coordinate"));
        }
        if n_b == 0 {
            return Err(Error::invalid("mask transforms no coordinate"));
        }
        if clamp <= 0.0 {
            return Err(Error::invalid("scale clamp must be positive"));
        }
        let mut dims_vec = vec![n_a + context_len * dims];
        dims_vec.extend_from_slice(hidden);
        dims_vec.push(n_b);
        let mut scale_net = Mlp::init(&dims_vec, seed)?;
        let mut translate_net = Mlp::init(&dims_vec, seed.wrapping_add(1))?;
        // identity transform at init
        scale_net.zero_final_layer();
        translate_net.zero_final_layer();
        Ok(Self { mask, scale_net, translate_net, clamp })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    pub fn scale_net(&self) -> &Mlp {
        &self.scale_net
    }

    pub fn translate_net(&self) -> &Mlp {
        &self.translate_net
    }

    pub(crate) fn from_parts(mask: Vec<bool>, scale_net: Mlp, translate_net: Mlp, clamp: f64) -> Result<Self> {
        let n_a = mask.iter().filter(|&&m| m).count();
        let n_b = mask.len() - n_a;
        if n_b == 0 || clamp <= 0.0 {
            return Err(Error::invalid("invalid coupling layer description"));
        }
        if scale_net.output_dim() != n_b || translate_net.output_dim() != n_b {
            return Err(Error::invalid("coupling nets have wrong output dimension"));
        }
        if scale_net.input_dim() != translate_net.input_dim() {
            return Err(Error::invalid("coupling nets disagree on input dimension"));
        }
        Ok(Self { mask, scale_net, translate_net, clamp })
    }

    fn net_input(&self, x: &[f64], ctx: &ContextWindow) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.scale_net.input_dim());
        for (v, &m) in x.iter().zip(self.mask.iter()) {
            if m {
                input.push(*v);
            }
        }
        input.extend_from_slice(ctx.flat());
        input
    }

    fn check_shapes(&self, x: &[f64], ctx: &ContextWindow) -> Result<()> {
        if x.len() != self.mask.len() {
            return Err(Error::invalid(format!(
                "input length {} != mask length {}",
                x.len(),
                self.mask.len()
            )));
        }
        let n_a = self.mask.iter().filter(|&&m| m).count();
        if n_a + ctx.flat().len() != self.scale_net.input_dim() {
            return Err(Error::invalid(format!(
                "context size {} incompatible with net input {}",
                ctx.flat().len(),
                self.scale_net.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward transform with cached intermediates.
    pub fn forward_cached(&self, x: &[f64], ctx: &ContextWindow) -> Result<(Vec<f64>, f64, CouplingCache)> {
        self.check_shapes(x, ctx)?;
        let input = self.net_input(x, ctx);
        let (s_raw, scale_cache) = self.scale_net.forward(&input)?;
        let (t, translate_cache) = self.translate_net.forward(&input)?;
        let s_clamped: Vec<f64> =
            s_raw.iter().map(|s| self.clamp * (s / self.clamp).tanh()).collect();
        let mut y = x.to_vec();
        let mut logdet = 0.0;
        let mut j = 0;
        for (i, &m) in self.mask.iter().enumerate() {
            if !m {
                y[i] = x[i] * s_clamped[j].exp() + t[j];
                logdet += s_clamped[j];
                j += 1;
            }
        }
        if y.iter().any(|v| !v.is_finite()) || !logdet.is_finite() {
            return Err(Error::numeric("non-finite coupling output"));
        }
        let cache = CouplingCache { x: x.to_vec(), scale_cache, translate_cache, s_raw, s_clamped };
        Ok((y, logdet, cache))
    }

    /// Forward transform: `(y, logdet)`.
    pub fn forward(&self, x: &[f64], ctx: &ContextWindow) -> Result<(Vec<f64>, f64)> {
        let (y, logdet, _) = self.forward_cached(x, ctx)?;
        Ok((y, logdet))
    }

    /// Exact algebraic inverse; the returned log-determinant is the inverse
    /// map's, i.e. the negated forward value.
    pub fn inverse(&self, y: &[f64], ctx: &ContextWindow) -> Result<(Vec<f64>, f64)> {
        self.check_shapes(y, ctx)?;
        // y_a == x_a, so the nets see the same input as the forward pass
        let input = self.net_input(y, ctx);
        let (s_raw, _) = self.scale_net.forward(&input)?;
        let (t, _) = self.translate_net.forward(&input)?;
        let mut x = y.to_vec();
        let mut logdet = 0.0;
        let mut j = 0;
        for (i, &m) in self.mask.iter().enumerate() {
            if !m {
                let s = self.clamp * (s_raw[j] / self.clamp).tanh();
                x[i] = (y[i] - t[j]) * (-s).exp();
                logdet -= s;
                j += 1;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite coupling inverse"));
        }
        Ok((x, logdet))
    }

    /// Reverse-mode step: given `dL/dy` and `dL/dlogdet`, returns `dL/dx` and
    /// the parameter gradients of both nets. The context gradient is
    /// discarded (contexts are observed data).
    pub fn backward(
        &self,
        cache: &CouplingCache,
        d_y: &[f64],
        d_logdet: f64,
    ) -> Result<(Vec<f64>, CouplingGradients)> {
        let dims = self.mask.len();
        if d_y.len() != dims {
            return Err(Error::invalid("upstream gradient length mismatch"));
        }
        let n_b = self.s_len();
        let mut d_s_raw = vec![0.0; n_b];
        let mut d_t = vec![0.0; n_b];
        let mut d_x = vec![0.0; dims];
        let mut j = 0;
        for (i, &m) in self.mask.iter().enumerate() {
            if !m {
                let es = cache.s_clamped[j].exp();
                // y_b = x_b e^s + t ; logdet += s
                d_x[i] = d_y[i] * es;
                let d_s = d_y[i] * cache.x[i] * es + d_logdet;
                let th = (cache.s_raw[j] / self.clamp).tanh();
                d_s_raw[j] = d_s * (1.0 - th * th);
                d_t[j] = d_y[i];
                j += 1;
            }
        }
        let scale = self.scale_net.backward(&cache.scale_cache, &d_s_raw)?;
        let translate = self.translate_net.backward(&cache.translate_cache, &d_t)?;
        // pass-through coordinates pick up the direct path plus both nets'
        // sensitivity to x_a (the leading entries of the net input)
        let mut a_idx = 0;
        for (i, &m) in self.mask.iter().enumerate() {
            if m {
                d_x[i] = d_y[i] + scale.d_input[a_idx] + translate.d_input[a_idx];
                a_idx += 1;
            }
        }
        Ok((d_x, CouplingGradients { scale, translate }))
    }

    fn s_len(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn param_count(&self) -> usize {
        self.scale_net.param_count() + self.translate_net.param_count()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.scale_net.flatten_into(out);
        self.translate_net.flatten_into(out);
    }

    pub fn unflatten_from(&mut self, src: &mut impl Iterator<Item = f64>) {
        self.scale_net.unflatten_from(src);
        self.translate_net.unflatten_from(src);
    }
}

/// The full conditional flow: `L` coupling layers with complementary
/// alternating even/odd masks.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    layers: Vec<CouplingLayer>,
    dims: usize,
    context_len: usize,
}

/// Per-layer caches of one [`FlowModel::normalize_cached`] call.
#[derive(Debug, Clone)]
pub struct FlowCache {
    layer_caches: Vec<CouplingCache>,
}

/// Parameter gradients for the whole stack, layer by layer.
#[derive(Debug, Clone)]
pub struct FlowGradients {
    pub layers: Vec<CouplingGradients>,
}

impl FlowGradients {
    /// Adds all gradients into a flat accumulator laid out like
    /// [`FlowModel::flatten_into`]. Returns the number of entries consumed.
    pub fn accumulate_into(&self, acc: &mut [f64]) -> usize {
        let mut offset = 0;
        for layer in &self.layers {
            offset += layer.scale.accumulate_into(&mut acc[offset..]);
            offset += layer.translate.accumulate_into(&mut acc[offset..]);
        }
        offset
    }
}

impl FlowModel {
    /// Builds a flow with `n_layers` coupling layers. `hidden` describes the
    /// scale/translate net hidden dims (e.g. `[64]` for one hidden layer of
    /// 64). Even coordinates pass through on even layers, odd on odd layers,
    /// so consecutive masks are complementary and every coordinate is
    /// transformed. At init the whole flow is the identity with zero
    /// log-det.
    pub fn new(
        dims: usize,
        context_len: usize,
        n_layers: usize,
        hidden: &[usize],
        clamp: f64,
        seed: u64,
    ) -> Result<Self> {
        if dims < 2 {
            return Err(Error::invalid(
                "flow needs dims >= 2 (duplicate univariate series before building)",
            ));
        }
        if n_layers == 0 {
            return Err(Error::invalid("flow needs at least one coupling layer"));
        }
        if context_len == 0 {
            return Err(Error::invalid("context length must be >= 1"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let mask: Vec<bool> = (0..dims).map(|i| i % 2 == l % 2).collect();
            let layer_seed = seed.wrapping_add(2 * l as u64);
            layers.push(CouplingLayer::new(mask, context_len, hidden, clamp, layer_seed)?);
        }
        Ok(Self { layers, dims, context_len })
    }

    pub(crate) fn from_layers(layers: Vec<CouplingLayer>, dims: usize, context_len: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("flow needs at least one coupling layer"));
        }
        for layer in &layers {
            if layer.mask().len() != dims {
                return Err(Error::invalid("layer mask length does not match dims"));
            }
            let n_a = layer.mask().iter().filter(|&&m| m).count();
            if layer.scale_net().input_dim() != n_a + context_len * dims {
                return Err(Error::invalid("layer net input does not match context length"));
            }
        }
        Ok(Self { layers, dims, context_len })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    fn check_ctx(&self, ctx: &ContextWindow) -> Result<()> {
        if ctx.k() != self.context_len || ctx.dims() != self.dims {
            return Err(Error::invalid(format!(
                "context is {}x{}, expected {}x{}",
                ctx.k(),
                ctx.dims(),
                self.context_len,
                self.dims
            )));
        }
        Ok(())
    }

    /// Maps an observation to its latent representation:
    /// `(z, total_logdet)`.
    pub fn normalize(&self, x: &[f64], ctx: &ContextWindow) -> Result<(Vec<f64>, f64)> {
        self.check_ctx(ctx)?;
        let mut v = x.to_vec();
        let mut total = 0.0;
        for layer in &self.layers {
            let (next, ld) = layer.forward(&v, ctx)?;
            v = next;
            total += ld;
        }
        Ok((v, total))
    }

    /// [`FlowModel::normalize`] keeping per-layer caches for a backward pass.
    pub fn normalize_cached(&self, x: &[f64], ctx: &ContextWindow) -> Result<(Vec<f64>, f64, FlowCache)> {
        self.check_ctx(ctx)?;
        let mut v = x.to_vec();
        let mut total = 0.0;
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, ld, cache) = layer.forward_cached(&v, ctx)?;
            v = next;
            total += ld;
            layer_caches.push(cache);
        }
        Ok((v, total, FlowCache { layer_caches }))
    }

    /// Maps a latent vector back to observation space; exact inverse of
    /// [`FlowModel::normalize`] for the same context.
    pub fn generate(&self, z: &[f64], ctx: &ContextWindow) -> Result<Vec<f64>> {
        self.check_ctx(ctx)?;
        let mut v = z.to_vec();
        for layer in self.layers.iter().rev() {
            let (prev, _) = layer.inverse(&v, ctx)?;
            v = prev;
        }
        Ok(v)
    }

    /// Reverse-mode pass through the whole stack. `d_z` is `dL/dz`,
    /// `d_logdet` is `dL/d(total_logdet)` (shared by every layer because the
    /// total is a plain sum). Returns `dL/dx` and per-layer parameter
    /// gradients.
    pub fn backward(&self, cache: &FlowCache, d_z: &[f64], d_logdet: f64) -> Result<(Vec<f64>, FlowGradients)> {
        if cache.layer_caches.len() != self.layers.len() {
            return Err(Error::invalid("flow cache does not match layer count"));
        }
        let mut upstream = d_z.to_vec();
        let mut grads: Vec<Option<CouplingGradients>> = (0..self.layers.len()).map(|_| None).collect();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (d_x, g) = layer.backward(&cache.layer_caches[idx], &upstream, d_logdet)?;
            grads[idx] = Some(g);
            upstream = d_x;
        }
        let layers = grads.into_iter().map(|g| g.expect("filled in reverse pass")).collect();
        Ok((upstream, FlowGradients { layers }))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(CouplingLayer::param_count).sum()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            layer.flatten_into(out);
        }
    }

    pub fn unflatten_from(&mut self, src: &mut impl Iterator<Item = f64>) {
        for layer in &mut self.layers {
            layer.unflatten_from(src);
        }
    }
}
