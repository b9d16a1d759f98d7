//! Log-domain duration predictor with its own L1 training loop.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::layers::{relu, Conv1d};
use super::length::DurationSequence;
use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// `log(1 + d)` targets.
pub fn log_duration_targets(durations: &DurationSequence) -> Array1<f64> {
    durations
        .as_slice()
        .iter()
        .map(|&d| (d as f64).ln_1p())
        .collect()
}

/// `round(exp(p) − 1)`, clamped at zero.
pub fn durations_from_log(prediction: &Array1<f64>) -> DurationSequence {
    prediction
        .iter()
        .map(|p| (p.exp() - 1.0).round().max(0.0) as usize)
        .collect::<Vec<_>>()
        .into()
}

/// Mean absolute error between predicted and target log-durations.
pub fn duration_loss(prediction: &Array1<f64>, durations: &DurationSequence) -> Result<f64> {
    if prediction.len() != durations.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} durations",
            prediction.len(),
            durations.len()
        )));
    }
    let target = log_duration_targets(durations);
    Ok((prediction - &target).mapv(f64::abs).mean().unwrap_or(0.0))
}

/// `out = v · ReLU(conv_k3(x)) + c`, one value per phoneme.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationPredictor {
    pub conv: Conv1d,
    pub proj: Array1<f64>,
    pub proj_bias: f64,
}

struct Cache {
    cols: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl DurationPredictor {
    pub fn random<R: Rng + ?Sized>(d_model: usize, hidden: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        Self {
            conv: Conv1d::random(d_model, hidden, 3, 1, rng),
            proj: Array1::from_shape_simple_fn(hidden, || scale * standard_normal(rng)),
            proj_bias: 0.0,
        }
    }

    fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Cache)> {
        if x.nrows() != self.conv.input_dim() {
            return Err(Error::invalid(format!(
                "duration predictor expects {} channels, got {}",
                self.conv.input_dim(),
                x.nrows()
            )));
        }
        let cols = self.conv.unfold(x);
        let mut pre = self.conv.flat_weight().dot(&cols);
        pre += &self.conv.bias.view().insert_axis(Axis(1));
        let hidden = pre.mapv(relu);
        let out = self.proj.dot(&hidden) + self.proj_bias;
        Ok((out, Cache { cols, pre, hidden }))
    }

    /// Log-domain prediction per phoneme.
    pub fn forward(&self, encoder_out: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cached(encoder_out)?.0)
    }

    pub fn predict_durations(&self, encoder_out: ArrayView2<'_, f64>) -> Result<DurationSequence> {
        Ok(durations_from_log(&self.forward(encoder_out)?))
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.conv.weight.iter().copied().collect();
        v.extend(self.conv.bias.iter().copied());
        v.extend(self.proj.iter().copied());
        v.push(self.proj_bias);
        v
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        self.conv
            .weight
            .iter_mut()
            .for_each(|w| *w = it.next().unwrap());
        self.conv
            .bias
            .iter_mut()
            .for_each(|w| *w = it.next().unwrap());
        self.proj.iter_mut().for_each(|w| *w = it.next().unwrap());
        self.proj_bias = it.next().unwrap();
    }

    /// L1 loss on one sequence and its gradient in flat layout.
    fn loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        durations: &DurationSequence,
    ) -> Result<(f64, Vec<f64>)> {
        let (out, cache) = self.forward_cached(x)?;
        let target = log_duration_targets(durations);
        if target.len() != out.len() {
            return Err(Error::invalid(
                "duration count does not match phoneme count",
            ));
        }
        let n = out.len() as f64;
        let residual = &out - &target;
        let loss = residual.mapv(f64::abs).sum() / n;
        let g_out = residual.mapv(|r| r.signum() * if r == 0.0 { 0.0 } else { 1.0 / n });

        let g_proj = cache.hidden.dot(&g_out);
        let g_proj_bias = g_out.sum();
        let mut g_pre = Array2::zeros(cache.pre.dim());
        for ((h, j), g) in g_pre.indexed_iter_mut() {
            if cache.pre[[h, j]] > 0.0 {
                *g = self.proj[h] * g_out[j];
            }
        }
        let g_w = g_pre.dot(&cache.cols.t());
        let g_b = g_pre.sum_axis(Axis(1));

        let mut flat: Vec<f64> = g_w.iter().copied().collect();
        flat.extend(g_b.iter().copied());
        flat.extend(g_proj.iter().copied());
        flat.push(g_proj_bias);
        Ok((loss, flat))
    }

    pub fn num_params(&self) -> usize {
        self.conv.num_params() + self.proj.len() + 1
    }
}

/// Full-batch adaptive-moment training on the log-domain L1 loss with a
/// linearly decaying step size. Returns the mean loss before every update.
pub fn train_duration_predictor(
    predictor: &mut DurationPredictor,
    examples: &[(Array2<f64>, DurationSequence)],
    steps: usize,
    learning_rate: f64,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::invalid("no duration training examples"));
    }
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut theta = predictor.to_flat();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for (x, d) in examples {
            let (l, g) = predictor.loss_and_grad(x.view(), d)?;
            loss += l;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        let k = examples.len() as f64;
        loss /= k;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("duration loss at step {step}")));
        }
        curve.push(loss);
        let lr = learning_rate * (1.0 - step as f64 / steps as f64);
        let c1 = 1.0 - b1.powi(step as i32 + 1);
        let c2 = 1.0 - b2.powi(step as i32 + 1);
        for i in 0..theta.len() {
            let g = grad[i] / k;
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
        predictor.set_flat(&theta);
    }
    Ok(curve)
}
