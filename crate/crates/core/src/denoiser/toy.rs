//! A small per-frame feed-forward noise predictor with hand-written
//! backpropagation, adaptive-moment training and a finite-difference
//! gradient check.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::EpsilonPredictor;
use crate::error::{Error, Result};
use crate::forward::{noise_batch, NoisedItem, TrainingBatch};
use crate::rng::{standard_normal, SeedStream};
use crate::schedule::NoiseSchedule;
use crate::tensor::{ConditioningContext, SampleTensor};
use crate::ttsnet::step_embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub channels: usize,
    pub context_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            context_dim: 1,
            embed_dim: 16,
            hidden: 64,
            hidden_layers: 3,
        }
    }
}

impl ToyConfig {
    pub fn input_dim(&self) -> usize {
        self.channels + self.embed_dim + self.context_dim
    }

    /// `(out, in)` for every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim();
        for _ in 0..self.hidden_layers {
            shapes.push((self.hidden, fan_in));
            fan_in = self.hidden;
        }
        shapes.push((self.channels, fan_in));
        shapes
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.context_dim == 0 || self.hidden == 0 {
            return Err(Error::invalid(format!("degenerate toy config {self:?}")));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::invalid(
                "step embedding dimension must be even and > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out × in]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiserParams {
    config: ToyConfig,
    layers: Vec<Dense>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ToyDenoiserParams {
    pub fn zeros(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| Dense {
                weight: Array2::zeros((o, i)),
                bias: Array1::zeros(o),
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// Gaussian weights with variance `1 / fan_in`, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ToyConfig, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        for layer in &mut params.layers {
            let scale = 1.0 / (layer.weight.ncols() as f64).sqrt();
            layer.weight.mapv_inplace(|_| scale * standard_normal(rng));
        }
        Ok(params)
    }

    pub fn from_flat(config: ToyConfig, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if flat.len() != params.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                params.num_params(),
                flat.len()
            )));
        }
        params.set_flat(flat);
        if !params.is_finite() {
            return Err(Error::NonFinite("toy parameters".into()));
        }
        Ok(params)
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Weights (row-major) then bias, layer by layer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            flat.extend(layer.weight.iter().copied());
            flat.extend(layer.bias.iter().copied());
        }
        flat
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
    }

    /// Per-frame input matrix `[x_t ∥ step embedding ∥ context]`.
    fn inputs(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<Array2<f64>> {
        let cfg = &self.config;
        if x_t.channels() != cfg.channels {
            return Err(Error::invalid(format!(
                "toy denoiser expects {} channels, got {}",
                cfg.channels,
                x_t.channels()
            )));
        }
        if context.dim() != cfg.context_dim {
            return Err(Error::invalid(format!(
                "toy denoiser expects {} context features, got {}",
                cfg.context_dim,
                context.dim()
            )));
        }
        context.ensure_frames(x_t.frames())?;
        let emb = step_embedding(t, cfg.embed_dim)?;
        let mut input = Array2::zeros((cfg.input_dim(), x_t.frames()));
        input
            .slice_mut(s![..cfg.channels, ..])
            .assign(x_t.as_array());
        let emb_rows = cfg.channels..cfg.channels + cfg.embed_dim;
        for mut col in input.slice_mut(s![emb_rows, ..]).columns_mut() {
            col.assign(&emb);
        }
        input
            .slice_mut(s![cfg.channels + cfg.embed_dim.., ..])
            .assign(context.features());
        Ok(input)
    }

    /// Returns the input followed by every layer's activation; the last
    /// entry is the (linear) output.
    fn forward_cached(&self, input: Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.dot(acts.last().unwrap());
            z += &layer.bias.view().insert_axis(Axis(1));
            let a = if i + 1 == self.layers.len() {
                z.clone()
            } else {
                z.mapv(softplus)
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    fn forward(&self, input: Array2<f64>) -> Array2<f64> {
        let (_, mut acts) = self.forward_cached(input);
        acts.pop().unwrap()
    }

    /// Parameter gradient (flat layout) given the gradient at the output.
    fn backward(
        &self,
        pre: &[Array2<f64>],
        acts: &[Array2<f64>],
        grad_out: Array2<f64>,
    ) -> Vec<f64> {
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for l in (0..self.layers.len()).rev() {
            let gw = delta.dot(&acts[l].t());
            let gb = delta.sum_axis(Axis(1));
            grads.push((gw, gb));
            if l > 0 {
                let mut upstream = self.layers[l].weight.t().dot(&delta);
                upstream.zip_mut_with(&pre[l - 1], |d, &z| *d *= sigmoid(z));
                delta = upstream;
            }
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.num_params());
        for (gw, gb) in grads {
            flat.extend(gw.iter().copied());
            flat.extend(gb.iter().copied());
        }
        flat
    }
}

/// Per-frame feed-forward evaluation of the toy network.
pub fn toy_predict(
    params: &ToyDenoiserParams,
    x_t: &SampleTensor,
    t: usize,
    context: &ConditioningContext,
) -> Result<SampleTensor> {
    let input = params.inputs(x_t, t, context)?;
    SampleTensor::new(params.forward(input))
}

#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    params: ToyDenoiserParams,
    num_steps: usize,
}

impl ToyDenoiser {
    pub fn new(params: ToyDenoiserParams, num_steps: usize) -> Self {
        Self { params, num_steps }
    }

    pub fn params(&self) -> &ToyDenoiserParams {
        &self.params
    }
}

impl EpsilonPredictor for ToyDenoiser {
    fn predict(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<SampleTensor> {
        if t == 0 || t > self.num_steps {
            return Err(Error::StepOutOfRange {
                t,
                max: self.num_steps,
            });
        }
        toy_predict(&self.params, x_t, t, context)
    }
}

struct Prepared {
    input: Array2<f64>,
    target: Array2<f64>,
}

/// Stack the frames of several noised items into one input/target pair.
fn prepare(
    params: &ToyDenoiserParams,
    items: &[(&NoisedItem, &ConditioningContext)],
) -> Result<Prepared> {
    let mut inputs = Vec::with_capacity(items.len());
    let mut targets = Vec::with_capacity(items.len());
    for (item, ctx) in items {
        inputs.push(params.inputs(&item.x_t, item.t, ctx)?);
        targets.push(item.epsilon.as_array().view());
    }
    let input_views: Vec<_> = inputs.iter().map(|a| a.view()).collect();
    let input =
        ndarray::concatenate(Axis(1), &input_views).map_err(|e| Error::invalid(e.to_string()))?;
    let target =
        ndarray::concatenate(Axis(1), &targets).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(Prepared { input, target })
}

fn loss_and_grad(params: &ToyDenoiserParams, batch: &Prepared) -> (f64, Vec<f64>, Array2<f64>) {
    let (pre, acts) = params.forward_cached(batch.input.clone());
    let residual = acts.last().unwrap() - &batch.target;
    let n = residual.len() as f64;
    let loss = residual.iter().map(|r| r.abs()).sum::<f64>() / n;
    // subgradient of |r| at 0 is taken as 0
    let grad_out = residual.mapv(|r| {
        if r > 0.0 {
            1.0 / n
        } else if r < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    });
    let grads = params.backward(&pre, &acts, grad_out);
    (loss, grads, residual)
}

fn loss_and_residual(params: &ToyDenoiserParams, batch: &Prepared) -> (f64, Array2<f64>) {
    let out = params.forward(batch.input.clone());
    let residual = out - &batch.target;
    let loss = residual.iter().map(|r| r.abs()).sum::<f64>() / residual.len() as f64;
    (loss, residual)
}

/// Adaptive-moment optimiser settings for [`toy_train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Dataset items drawn (with replacement) per update; each gets its own step `t`.
    pub items_per_step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 1e-3,
            items_per_step: 16,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, theta: &mut [f64], grad: &[f64], opts: &TrainOptions) {
        self.step += 1;
        let c1 = 1.0 - opts.beta1.powi(self.step);
        let c2 = 1.0 - opts.beta2.powi(self.step);
        for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = opts.beta1 * *m + (1.0 - opts.beta1) * g;
            *v = opts.beta2 * *v + (1.0 - opts.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= opts.learning_rate * m_hat / (v_hat.sqrt() + opts.epsilon);
        }
    }
}

/// Train on the L1 ε-prediction objective. Returns the updated parameters
/// and the minibatch loss recorded before every update.
pub fn toy_train<R: Rng + ?Sized>(
    params: ToyDenoiserParams,
    dataset: &[TrainingBatch],
    schedule: &NoiseSchedule,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<(ToyDenoiserParams, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    if opts.items_per_step == 0 {
        return Err(Error::invalid("items_per_step must be > 0"));
    }
    let mut params = params;
    let mut theta = params.to_flat();
    let mut adam = Adam::new(theta.len());
    let mut curve = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let mut noised = Vec::with_capacity(opts.items_per_step);
        for _ in 0..opts.items_per_step {
            let k = rng.random_range(0..dataset.len());
            noised.push((noise_batch(&dataset[k], schedule, rng)?, k));
        }
        let items: Vec<_> = noised
            .iter()
            .map(|(n, k)| (n, &dataset[*k].context))
            .collect();
        let prepared = prepare(&params, &items)?;
        let (loss, grad, _) = loss_and_grad(&params, &prepared);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "training loss at step {step}: {loss}"
            )));
        }
        curve.push(loss);
        adam.update(&mut theta, &grad, opts);
        params.set_flat(&theta);
    }
    Ok((params, curve))
}

/// Analytic L1 gradient of the toy network over `batch` (flat layout).
pub fn toy_loss_gradient(
    params: &ToyDenoiserParams,
    batch: &TrainingBatch,
    schedule: &NoiseSchedule,
) -> Result<(f64, Vec<f64>)> {
    let item = fixed_item(batch, schedule)?;
    let prepared = prepare(params, &[(&item, &batch.context)])?;
    let (loss, grad, _) = loss_and_grad(params, &prepared);
    Ok((loss, grad))
}

fn fixed_item(batch: &TrainingBatch, schedule: &NoiseSchedule) -> Result<NoisedItem> {
    // Unpinned noise or step is drawn from a fixed stream so the loss surface is fixed.
    let mut rng = SeedStream::new(0).rng();
    noise_batch(batch, schedule, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

pub const GRAD_CHECK_SAMPLES: usize = 256;
const REL_ERROR_FLOOR: f64 = 1e-8;
const KINK_THRESHOLD: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Central-difference check of `grad` against `loss` at `theta` over `indices`.
pub fn finite_difference_check<F>(
    theta: &[f64],
    loss: F,
    grad: &[f64],
    indices: &[usize],
    perturbation: f64,
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for &i in indices {
        probe[i] = theta[i] + perturbation;
        let plus = loss(&probe);
        probe[i] = theta[i] - perturbation;
        let minus = loss(&probe);
        probe[i] = theta[i];
        let numeric = (plus - minus) / (2.0 * perturbation);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    GradCheckReport {
        max_rel_error: worst,
        checked: indices.len(),
        skipped: 0,
    }
}

/// Compares backpropagated L1 gradients to central differences on a
/// fixed random subset of parameters.
///
/// Parameters whose perturbation moves any residual across zero (or where a
/// residual already sits within 1e-6 of the kink) are skipped.
pub fn grad_check(
    params: &ToyDenoiserParams,
    batch: &TrainingBatch,
    schedule: &NoiseSchedule,
    perturbation: f64,
) -> Result<GradCheckReport> {
    if !(perturbation > 0.0) {
        return Err(Error::invalid("perturbation must be > 0"));
    }
    let item = fixed_item(batch, schedule)?;
    let prepared = prepare(params, &[(&item, &batch.context)])?;
    let (_, grad, base_residual) = loss_and_grad(params, &prepared);
    let near_kink = base_residual.iter().any(|r| r.abs() < KINK_THRESHOLD);

    let theta = params.to_flat();
    let n = theta.len();
    let mut pick = SeedStream::new(0x6C).rng();
    let indices = sample_indices(&mut pick, n, GRAD_CHECK_SAMPLES.min(n)).into_vec();

    let mut probe = params.clone();
    let mut flat = theta.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for i in indices {
        flat[i] = theta[i] + perturbation;
        probe.set_flat(&flat);
        let (plus, r_plus) = loss_and_residual(&probe, &prepared);
        flat[i] = theta[i] - perturbation;
        probe.set_flat(&flat);
        let (minus, r_minus) = loss_and_residual(&probe, &prepared);
        flat[i] = theta[i];

        let crosses = r_plus
            .iter()
            .zip(r_minus.iter())
            .zip(base_residual.iter())
            .any(|((p, m), b)| p.signum() != m.signum() || (near_kink && b.abs() < KINK_THRESHOLD));
        if crosses {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * perturbation);
        worst = worst.max(relative_error(grad[i], numeric));
        checked += 1;
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        checked,
        skipped,
    })
}
