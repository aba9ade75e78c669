//! Trainable log-ratio models with reverse-mode gradients.
//!
//! Two model families share one flat parameter vector layout with the
//! learned log-normalizer `log_z` as the last entry:
//!
//! * a dense MLP with rectifier activations and optional residual blocks,
//! * a polynomial logistic classifier over monomial features.
//!
//! Both expose the modeled log-ratio f(z) + log_z, parameter gradients of
//! the logistic loss, and input gradients for gradient-informed sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{sample_mvn_with_rng, CorrelationMatrix};
use crate::marginals::LatentMatrix;

/// Dense MLP architecture: residual rectifier blocks on the hidden widths.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    /// Leak of the rectifier; 0 is a pure rectifier.
    pub leak: f64,
    /// One flag per hidden block; a residual add is applied on blocks whose
    /// input and output widths match.
    pub residual: Vec<bool>,
}

impl MlpSpec {
    /// Dense [100, 100] stack; pure rectifier for d <= 2, leak 0.01 above.
    pub fn default_for_dim(d: usize) -> Self {
        MlpSpec {
            input_dim: d,
            hidden_widths: vec![100, 100],
            leak: if d <= 2 { 0.0 } else { 0.01 },
            residual: vec![true, true],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("mlp input dimension must be >= 1"));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::invalid("mlp needs at least one hidden layer"));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("mlp hidden widths must be >= 1"));
        }
        if self.residual.len() != self.hidden_widths.len() {
            return Err(Error::invalid("one residual flag per hidden block required"));
        }
        Ok(())
    }
}

/// Polynomial logistic model: monomial features of total degree <= degree.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyLogisticSpec {
    pub input_dim: usize,
    pub degree: usize,
    pub include_interactions: bool,
}

impl PolyLogisticSpec {
    pub fn new(input_dim: usize, degree: usize, include_interactions: bool) -> Result<Self> {
        if input_dim == 0 || degree == 0 {
            return Err(Error::invalid("poly model needs input_dim >= 1 and degree >= 1"));
        }
        Ok(PolyLogisticSpec { input_dim, degree, include_interactions })
    }

    pub fn default_for_dim(d: usize) -> Self {
        PolyLogisticSpec { input_dim: d, degree: 5, include_interactions: true }
    }

    /// Monomial exponent vectors in graded lexicographic order, excluding
    /// the constant term (absorbed by log_z).
    pub fn exponents(&self) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        if self.include_interactions {
            for total in 1..=self.degree {
                push_compositions(self.input_dim, total as u32, &mut Vec::new(), &mut out);
            }
        } else {
            for j in 0..self.input_dim {
                for p in 1..=self.degree {
                    let mut e = vec![0u32; self.input_dim];
                    e[j] = p as u32;
                    out.push(e);
                }
            }
        }
        out
    }

    pub fn feature_count(&self) -> usize {
        if self.include_interactions {
            // C(d + degree, degree) - 1
            let mut c: usize = 1;
            for i in 1..=self.degree {
                c = c * (self.input_dim + i) / i;
            }
            c - 1
        } else {
            self.input_dim * self.degree
        }
    }
}

fn push_compositions(d: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() == d - 1 {
        let mut e = prefix.clone();
        e.push(remaining);
        out.push(e);
        return;
    }
    for k in (0..=remaining).rev() {
        prefix.push(k);
        push_compositions(d, remaining - k, prefix, out);
        prefix.pop();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Mlp(MlpSpec),
    Poly(PolyLogisticSpec),
}

impl ModelSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::Mlp(s) => s.input_dim,
            ModelSpec::Poly(s) => s.input_dim,
        }
    }
}

/// A log-ratio model: spec plus a flat parameter vector whose last entry is
/// the learned log-normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    spec: ModelSpec,
    params: Vec<f64>,
    exponents: Vec<Vec<u32>>, // cached for poly models, empty for mlp
}

// Parameter layout for the MLP: for each linear layer, weights row-major
// then biases; layers in forward order; log_z last.
fn mlp_param_len(spec: &MlpSpec) -> usize {
    let mut len = 0;
    let mut prev = spec.input_dim;
    for &w in &spec.hidden_widths {
        len += w * prev + w;
        prev = w;
    }
    len + prev + 1 + 1 // output weights + output bias + log_z
}

impl RatioModel {
    /// Initialize parameters: hidden weights uniform in +-sqrt(6/(fan_in+fan_out)),
    /// biases 0, output layer 0 and log_z 0, so the initial model is the
    /// independence copula (ratio 1 everywhere).
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &spec {
            ModelSpec::Mlp(m) => {
                m.validate()?;
                let mut params = vec![0.0; mlp_param_len(m)];
                let mut off = 0;
                let mut prev = m.input_dim;
                for &w in &m.hidden_widths {
                    let bound = (6.0 / (prev + w) as f64).sqrt();
                    for p in &mut params[off..off + w * prev] {
                        *p = rng.gen_range(-bound..bound);
                    }
                    off += w * prev + w; // biases stay 0
                    prev = w;
                }
                // output layer and log_z stay 0
                Ok(RatioModel { spec, params, exponents: Vec::new() })
            }
            ModelSpec::Poly(p) => {
                let exponents = p.exponents();
                let params = vec![0.0; exponents.len() + 1];
                Ok(RatioModel { spec, params, exponents })
            }
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    /// Flat parameter vector including log_z as the last entry.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn log_z(&self) -> f64 {
        *self.params.last().unwrap()
    }

    pub fn set_log_z(&mut self, v: f64) {
        *self.params.last_mut().unwrap() = v;
    }

    /// f(z; theta) + log_z, the log of the modeled unnormalized ratio.
    pub fn forward_log_ratio(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: z.len() });
        }
        match &self.spec {
            ModelSpec::Mlp(m) => {
                let cache = self.mlp_forward(m, z)?;
                Ok(cache.out + self.log_z())
            }
            ModelSpec::Poly(_) => {
                let feats = self.poly_features(z);
                let f: f64 = feats.iter().zip(&self.params).map(|(a, b)| a * b).sum();
                Ok(f + self.log_z())
            }
        }
    }

    /// Gradient of f(z) + log_z with respect to z.
    pub fn input_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: z.len() });
        }
        match &self.spec {
            ModelSpec::Mlp(m) => {
                let cache = self.mlp_forward(m, z)?;
                Ok(self.mlp_input_gradient(m, z, &cache))
            }
            ModelSpec::Poly(p) => {
                let d = p.input_dim;
                let mut g = vec![0.0; d];
                for (k, e) in self.exponents.iter().enumerate() {
                    let w = self.params[k];
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        if e[j] == 0 {
                            continue;
                        }
                        let mut part = e[j] as f64 * w;
                        for (i, &p_i) in e.iter().enumerate() {
                            let pow = if i == j { p_i - 1 } else { p_i };
                            part *= z[i].powi(pow as i32);
                        }
                        g[j] += part;
                    }
                }
                Ok(g)
            }
        }
    }

    fn poly_features(&self, z: &[f64]) -> Vec<f64> {
        self.exponents
            .iter()
            .map(|e| e.iter().zip(z).map(|(&p, &v)| v.powi(p as i32)).product())
            .collect()
    }

    fn mlp_forward(&self, m: &MlpSpec, z: &[f64]) -> Result<MlpCache> {
        let mut pre = Vec::with_capacity(m.hidden_widths.len());
        let mut off = 0;
        let mut input: Vec<f64> = z.to_vec();
        let mut prev_w = m.input_dim;
        for (li, &w) in m.hidden_widths.iter().enumerate() {
            let weights = &self.params[off..off + w * prev_w];
            let biases = &self.params[off + w * prev_w..off + w * prev_w + w];
            off += w * prev_w + w;
            let mut h = vec![0.0; w];
            for r in 0..w {
                let mut s = biases[r];
                for c in 0..prev_w {
                    s += weights[r * prev_w + c] * input[c];
                }
                h[r] = s;
            }
            // Residual add on matching widths.
            if li > 0 && m.residual[li] && w == prev_w {
                let prev_pre: &Vec<f64> = &pre[li - 1];
                for r in 0..w {
                    h[r] += prev_pre[r];
                }
            }
            if h.iter().any(|v: &f64| !v.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite activation in hidden layer {li}"
                )));
            }
            input = h.iter().map(|&v| leaky_relu(v, m.leak)).collect();
            pre.push(h);
            prev_w = w;
        }
        let weights = &self.params[off..off + prev_w];
        let bias = self.params[off + prev_w];
        let out = bias + weights.iter().zip(&input).map(|(a, b)| a * b).sum::<f64>();
        if !out.is_finite() {
            return Err(Error::numerical("non-finite activation in output layer"));
        }
        Ok(MlpCache { pre, out })
    }

    fn mlp_deltas(&self, m: &MlpSpec, cache: &MlpCache, g_out: f64) -> Vec<Vec<f64>> {
        let n_hidden = m.hidden_widths.len();
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n_hidden];
        let out_off = self.output_offset(m);
        let w_last = m.hidden_widths[n_hidden - 1];
        let out_w = &self.params[out_off..out_off + w_last];
        let last_pre = &cache.pre[n_hidden - 1];
        deltas[n_hidden - 1] = (0..w_last)
            .map(|r| g_out * out_w[r] * leaky_relu_grad(last_pre[r], m.leak))
            .collect();
        for li in (0..n_hidden - 1).rev() {
            let w_next = m.hidden_widths[li + 1];
            let w_cur = m.hidden_widths[li];
            let off = self.layer_offset(m, li + 1);
            let weights = &self.params[off..off + w_next * w_cur];
            let next = &deltas[li + 1];
            let mut d = vec![0.0; w_cur];
            for c in 0..w_cur {
                let mut s = 0.0;
                for r in 0..w_next {
                    s += weights[r * w_cur + c] * next[r];
                }
                d[c] = s * leaky_relu_grad(cache.pre[li][c], m.leak);
            }
            // Residual skip path bypasses the activation.
            if m.residual[li + 1] && w_next == w_cur {
                for c in 0..w_cur {
                    d[c] += next[c];
                }
            }
            deltas[li] = d;
        }
        deltas
    }

    fn mlp_input_gradient(&self, m: &MlpSpec, _z: &[f64], cache: &MlpCache) -> Vec<f64> {
        let deltas = self.mlp_deltas(m, cache, 1.0);
        let d = m.input_dim;
        let w0 = m.hidden_widths[0];
        let weights = &self.params[0..w0 * d];
        let mut g = vec![0.0; d];
        for c in 0..d {
            for r in 0..w0 {
                g[c] += weights[r * d + c] * deltas[0][r];
            }
        }
        g
    }

    /// Accumulate parameter gradients for one point with upstream scalar
    /// g_out = dL/df; also adds g_out to the log_z slot.
    fn accumulate_gradient(&self, z: &[f64], g_out: f64, grad: &mut [f64]) -> Result<()> {
        match &self.spec {
            ModelSpec::Mlp(m) => {
                let cache = self.mlp_forward(m, z)?;
                let deltas = self.mlp_deltas(m, cache_ref(&cache), g_out);
                let n_hidden = m.hidden_widths.len();
                // Input layer.
                let w0 = m.hidden_widths[0];
                let d = m.input_dim;
                for r in 0..w0 {
                    let dr = deltas[0][r];
                    for c in 0..d {
                        grad[r * d + c] += dr * z[c];
                    }
                    grad[w0 * d + r] += dr;
                }
                // Hidden transitions.
                for li in 1..n_hidden {
                    let w_cur = m.hidden_widths[li];
                    let w_prev = m.hidden_widths[li - 1];
                    let off = self.layer_offset(m, li);
                    let act_prev: Vec<f64> =
                        cache.pre[li - 1].iter().map(|&v| leaky_relu(v, m.leak)).collect();
                    for r in 0..w_cur {
                        let dr = deltas[li][r];
                        for c in 0..w_prev {
                            grad[off + r * w_prev + c] += dr * act_prev[c];
                        }
                        grad[off + w_cur * w_prev + r] += dr;
                    }
                }
                // Output layer.
                let out_off = self.output_offset(m);
                let w_last = m.hidden_widths[n_hidden - 1];
                let act_last: Vec<f64> =
                    cache.pre[n_hidden - 1].iter().map(|&v| leaky_relu(v, m.leak)).collect();
                for c in 0..w_last {
                    grad[out_off + c] += g_out * act_last[c];
                }
                grad[out_off + w_last] += g_out;
            }
            ModelSpec::Poly(_) => {
                let feats = self.poly_features(z);
                for (k, f) in feats.iter().enumerate() {
                    grad[k] += g_out * f;
                }
            }
        }
        // log_z enters the score additively.
        *grad.last_mut().unwrap() += g_out;
        Ok(())
    }

    fn layer_offset(&self, m: &MlpSpec, layer: usize) -> usize {
        let mut off = 0;
        let mut prev = m.input_dim;
        for (li, &w) in m.hidden_widths.iter().enumerate() {
            if li == layer {
                return off;
            }
            off += w * prev + w;
            prev = w;
        }
        off
    }

    fn output_offset(&self, m: &MlpSpec) -> usize {
        self.layer_offset(m, m.hidden_widths.len())
    }
}

struct MlpCache {
    pre: Vec<Vec<f64>>,
    out: f64,
}

fn cache_ref(c: &MlpCache) -> &MlpCache {
    c
}

fn leaky_relu(x: f64, leak: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        leak * x
    }
}

fn leaky_relu_grad(x: f64, leak: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        leak
    }
}

/// log sigma(x), numerically stable.
fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic classification loss with prior-odds weight nu, averaged per data
/// point: -(1/T_p) [sum_data log sigma(s) + sum_noise log sigma(-s)] with
/// s = f(z) + log_z - ln(nu).
pub fn nce_loss(
    model: &RatioModel,
    z_data: &LatentMatrix,
    z_noise: &LatentMatrix,
    nu: f64,
) -> Result<f64> {
    if z_data.n_rows() == 0 {
        return Err(Error::invalid("nce loss needs nonempty data"));
    }
    let log_nu = nu.ln();
    let mut total = 0.0;
    for i in 0..z_data.n_rows() {
        let s = model.forward_log_ratio(z_data.row(i))? - log_nu;
        total -= log_sigmoid(s);
    }
    for i in 0..z_noise.n_rows() {
        let s = model.forward_log_ratio(z_noise.row(i))? - log_nu;
        total -= log_sigmoid(-s);
    }
    Ok(total / z_data.n_rows() as f64)
}

/// Loss together with reverse-mode gradients for all parameters including
/// log_z. Accumulation order is fixed, so results are deterministic.
pub fn loss_gradients(
    model: &RatioModel,
    z_data: &LatentMatrix,
    z_noise: &LatentMatrix,
    nu: f64,
) -> Result<(f64, Vec<f64>)> {
    if z_data.n_rows() == 0 {
        return Err(Error::invalid("nce loss needs nonempty data"));
    }
    let log_nu = nu.ln();
    let inv_tp = 1.0 / z_data.n_rows() as f64;
    let mut grad = vec![0.0; model.n_params()];
    let mut total = 0.0;
    for i in 0..z_data.n_rows() {
        let z = z_data.row(i);
        let s = model.forward_log_ratio(z)? - log_nu;
        total -= log_sigmoid(s);
        model.accumulate_gradient(z, -inv_tp * sigmoid(-s), &mut grad)?;
    }
    for i in 0..z_noise.n_rows() {
        let z = z_noise.row(i);
        let s = model.forward_log_ratio(z)? - log_nu;
        total -= log_sigmoid(-s);
        model.accumulate_gradient(z, inv_tp * sigmoid(s), &mut grad)?;
    }
    Ok((total * inv_tp, grad))
}

/// Where the contrastive noise is drawn from: the standard normal, or a
/// correlated Gaussian when a guide is in play.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    Standard(usize),
    Correlated(CorrelationMatrix),
}

impl NoiseSource {
    pub fn dim(&self) -> usize {
        match self {
            NoiseSource::Standard(d) => *d,
            NoiseSource::Correlated(c) => c.dim(),
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> LatentMatrix {
        match self {
            NoiseSource::Standard(d) => {
                let values = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
                LatentMatrix::new(values, *d).expect("standard normal draws are finite")
            }
            NoiseSource::Correlated(c) => sample_mvn_with_rng(n, c, rng),
        }
    }
}

/// Estimation hyperparameters. Defaults follow base Adam settings with
/// noise resampled every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub nu: f64,
    pub epochs: usize,
    pub noise_resample_each_epoch: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// None picks full batch for n <= 20000, minibatches of 1024 otherwise.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            nu: 10.0,
            epochs: 500,
            noise_resample_each_epoch: true,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::invalid("nu must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

const FULL_BATCH_LIMIT: usize = 20_000;
const DEFAULT_MINIBATCH: usize = 1024;

/// Train a log-ratio model with Adam on the logistic loss.
///
/// Fresh noise of size round(nu * T_p) is drawn from the source each epoch
/// (or once up front when resampling is off). A non-finite epoch loss
/// triggers one retry of the epoch at half the step size; a second failure
/// aborts with the epoch index.
pub fn train(
    spec: ModelSpec,
    data_latent: &LatentMatrix,
    noise_source: &NoiseSource,
    config: &TrainConfig,
) -> Result<(RatioModel, Vec<f64>)> {
    config.validate()?;
    if data_latent.n_cols() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            found: data_latent.n_cols(),
        });
    }
    if noise_source.dim() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            found: noise_source.dim(),
        });
    }

    let n = data_latent.n_rows();
    let noise_per_epoch = (config.nu * n as f64).round().max(1.0) as usize;
    let batch = config
        .batch_size
        .unwrap_or(if n <= FULL_BATCH_LIMIT { n } else { DEFAULT_MINIBATCH })
        .min(n);

    let mut model = RatioModel::init(spec, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.n_params(), config);
    let mut trace = Vec::with_capacity(config.epochs);

    let mut noise = noise_source.sample(noise_per_epoch, &mut rng);
    let mut halved = false;

    let mut epoch = 0;
    while epoch < config.epochs {
        if config.noise_resample_each_epoch && epoch > 0 {
            noise = noise_source.sample(noise_per_epoch, &mut rng);
        }
        let params_snapshot = model.params().to_vec();
        let epoch_loss = run_epoch(&mut model, data_latent, &noise, batch, config, &mut adam, &mut rng)?;
        if !epoch_loss.is_finite() {
            if halved {
                return Err(Error::numerical(format!(
                    "training diverged at epoch {epoch} after step halving"
                )));
            }
            // One retry of the epoch at half the step size.
            model.set_params(&params_snapshot)?;
            adam.lr *= 0.5;
            halved = true;
            continue;
        }
        trace.push(epoch_loss);
        epoch += 1;
    }
    Ok((model, trace))
}

fn run_epoch(
    model: &mut RatioModel,
    data: &LatentMatrix,
    noise: &LatentMatrix,
    batch: usize,
    config: &TrainConfig,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = data.n_rows();
    if batch >= n {
        let (loss, grad) = match loss_gradients(model, data, noise, config.nu) {
            Ok(v) => v,
            Err(Error::Numerical(_)) => return Ok(f64::NAN),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Ok(f64::NAN);
        }
        let mut params = model.params().to_vec();
        adam.step(&mut params, &grad);
        model.set_params(&params)?;
        return Ok(loss);
    }

    // Uniform random minibatches: shuffled data chunks, noise chunks scaled
    // by nu.
    let d = data.n_cols();
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, rng);
    let noise_batch =
        ((config.nu * batch as f64).round() as usize).min(noise.n_rows()).max(1);
    let mut noise_order: Vec<usize> = (0..noise.n_rows()).collect();
    shuffle(&mut noise_order, rng);

    let steps = n.div_ceil(batch);
    let mut total = 0.0;
    for step in 0..steps {
        let data_idx = &order[step * batch..((step + 1) * batch).min(n)];
        let mut dvals = Vec::with_capacity(data_idx.len() * d);
        for &i in data_idx {
            dvals.extend_from_slice(data.row(i));
        }
        let db = LatentMatrix::new(dvals, d)?;

        let start = (step * noise_batch) % noise.n_rows();
        let mut nvals = Vec::with_capacity(noise_batch * d);
        for k in 0..noise_batch {
            let i = noise_order[(start + k) % noise.n_rows()];
            nvals.extend_from_slice(noise.row(i));
        }
        let nb = LatentMatrix::new(nvals, d)?;

        let (loss, grad) = match loss_gradients(model, &db, &nb, config.nu) {
            Ok(v) => v,
            Err(Error::Numerical(_)) => return Ok(f64::NAN),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Ok(f64::NAN);
        }
        let mut params = model.params().to_vec();
        adam.step(&mut params, &grad);
        model.set_params(&params)?;
        total += loss;
    }
    Ok(total / steps as f64)
}

fn shuffle<R: Rng>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latent(values: Vec<f64>, d: usize) -> LatentMatrix {
        LatentMatrix::new(values, d).unwrap()
    }

    fn finite_difference_grad<F: FnMut(&[f64]) -> f64>(
        params: &[f64],
        mut f: F,
    ) -> Vec<f64> {
        let mut g = vec![0.0; params.len()];
        let mut p = params.to_vec();
        for i in 0..params.len() {
            let h = 1e-4 * params[i].abs().max(1.0);
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            g[i] = (up - down) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn zero_init_is_independence() {
        let model =
            RatioModel::init(ModelSpec::Mlp(MlpSpec::default_for_dim(2)), 1).unwrap();
        assert_eq!(model.forward_log_ratio(&[0.7, -1.3]).unwrap(), 0.0);
        assert_eq!(model.forward_log_ratio(&[5.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn poly_linear_case() {
        let spec = PolyLogisticSpec::new(1, 1, true).unwrap();
        let mut model = RatioModel::init(ModelSpec::Poly(spec), 0).unwrap();
        model.set_params(&[2.5, 0.3]).unwrap(); // w = 2.5, log_z = 0.3
        let z = [1.7];
        assert!((model.forward_log_ratio(&z).unwrap() - (2.5 * 1.7 + 0.3)).abs() < 1e-15);
        assert_eq!(model.input_gradient(&z).unwrap(), vec![2.5]);
    }

    #[test]
    fn poly_feature_count_matches_formula() {
        let spec = PolyLogisticSpec::new(3, 4, true).unwrap();
        assert_eq!(spec.exponents().len(), spec.feature_count());
        let no_inter = PolyLogisticSpec::new(3, 4, false).unwrap();
        assert_eq!(no_inter.exponents().len(), 12);
    }

    #[test]
    fn constant_model_zero_input_gradient() {
        let model =
            RatioModel::init(ModelSpec::Mlp(MlpSpec::default_for_dim(2)), 3).unwrap();
        let g = model.input_gradient(&[0.4, -0.9]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    fn randomized_model(spec: ModelSpec, seed: u64) -> RatioModel {
        let mut model = RatioModel::init(spec, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let params: Vec<f64> =
            model.params().iter().map(|_| rng.gen_range(-0.5..0.5)).collect();
        model.set_params(&params).unwrap();
        model
    }

    #[test]
    fn mlp_forward_param_gradient_matches_finite_differences() {
        // Residual MLP with nonzero leak so no kink sits exactly at 0.
        let spec = MlpSpec {
            input_dim: 2,
            hidden_widths: vec![8, 8],
            leak: 0.01,
            residual: vec![true, true],
        };
        let model = randomized_model(ModelSpec::Mlp(spec.clone()), 5);
        let z = latent(vec![0.31, -0.77], 2);
        let noise = latent(vec![1.1, 0.2, -0.4, 0.9], 2);
        let (_, grad) = loss_gradients(&model, &z, &noise, 2.0).unwrap();
        let fd = finite_difference_grad(model.params(), |p| {
            let mut m = model.clone();
            m.set_params(p).unwrap();
            nce_loss(&m, &z, &noise, 2.0).unwrap()
        });
        for (a, b) in grad.iter().zip(&fd) {
            assert!(rel_err(*a, *b) <= 1e-5, "param gradient mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn poly_param_gradient_matches_finite_differences() {
        let spec = PolyLogisticSpec::new(2, 3, true).unwrap();
        let model = randomized_model(ModelSpec::Poly(spec), 9);
        let z = latent(vec![0.31, -0.77, 0.5, 0.25], 2);
        let noise = latent(vec![1.1, 0.2, -0.4, 0.9, 0.0, 0.3], 2);
        let (_, grad) = loss_gradients(&model, &z, &noise, 1.5).unwrap();
        let fd = finite_difference_grad(model.params(), |p| {
            let mut m = model.clone();
            m.set_params(p).unwrap();
            nce_loss(&m, &z, &noise, 1.5).unwrap()
        });
        for (a, b) in grad.iter().zip(&fd) {
            assert!(rel_err(*a, *b) <= 1e-5, "param gradient mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let spec = MlpSpec {
            input_dim: 3,
            hidden_widths: vec![6, 6],
            leak: 0.0,
            residual: vec![true, true],
        };
        let model = randomized_model(ModelSpec::Mlp(spec), 17);
        let z = vec![0.43, -1.21, 0.88];
        let g = model.input_gradient(&z).unwrap();
        for j in 0..3 {
            let h = 1e-5;
            let mut zp = z.clone();
            zp[j] += h;
            let up = model.forward_log_ratio(&zp).unwrap();
            zp[j] -= 2.0 * h;
            let down = model.forward_log_ratio(&zp).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!(rel_err(g[j], fd) <= 1e-5, "input gradient mismatch: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn uninformative_loss_values() {
        let model =
            RatioModel::init(ModelSpec::Mlp(MlpSpec::default_for_dim(1)), 0).unwrap();
        let data = latent(vec![0.5, -0.5], 1);
        let noise2 = latent(vec![0.1, -0.1], 1);
        // s = 0 everywhere, nu = 1: loss = 2 log 2.
        let loss = nce_loss(&model, &data, &noise2, 1.0).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        // nu = 10 with 10x noise.
        let noise10 = latent((0..20).map(|i| i as f64 * 0.1).collect(), 1);
        let loss10 = nce_loss(&model, &data, &noise10, 10.0).unwrap();
        let s = -(10.0f64.ln());
        let expected = -log_sigmoid(s) - 10.0 * log_sigmoid(-s);
        assert!((loss10 - expected).abs() < 1e-12);
        assert!((expected - 3.3510).abs() < 1e-3);
    }

    #[test]
    fn balanced_log_z_gradient_is_zero() {
        let model =
            RatioModel::init(ModelSpec::Mlp(MlpSpec::default_for_dim(1)), 0).unwrap();
        let data = latent(vec![0.5, -0.5], 1);
        let noise = latent(vec![0.1, -0.1], 1);
        let (_, grad) = loss_gradients(&model, &data, &noise, 1.0).unwrap();
        assert!(grad.last().unwrap().abs() < 1e-15);
    }

    #[test]
    fn parameter_vector_round_trip_is_lossless() {
        let model = randomized_model(ModelSpec::Mlp(MlpSpec::default_for_dim(2)), 21);
        let params = model.params().to_vec();
        let mut other =
            RatioModel::init(ModelSpec::Mlp(MlpSpec::default_for_dim(2)), 99).unwrap();
        other.set_params(&params).unwrap();
        assert_eq!(other.params(), params.as_slice());
    }

    #[test]
    fn training_is_deterministic() {
        let data = NoiseSource::Standard(2)
            .sample(200, &mut ChaCha8Rng::seed_from_u64(1));
        let cfg = TrainConfig { epochs: 5, seed: 7, ..Default::default() };
        let spec = ModelSpec::Poly(PolyLogisticSpec::new(2, 2, true).unwrap());
        let noise = NoiseSource::Standard(2);
        let (m1, t1) = train(spec.clone(), &data, &noise, &cfg).unwrap();
        let (m2, t2) = train(spec, &data, &noise, &cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(m1.params(), m2.params());
    }
}
