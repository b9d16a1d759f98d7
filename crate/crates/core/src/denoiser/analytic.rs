use ndarray::Array2;

use super::EpsilonPredictor;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::{ConditioningContext, SampleTensor};

/// Per-channel Gaussian data distribution `x_0[c] ~ N(mu[c], s[c]²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDataSpec {
    mu: Vec<f64>,
    s: Vec<f64>,
}

impl GaussianDataSpec {
    pub fn new(mu: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.len() != s.len() {
            return Err(Error::invalid(format!(
                "mu has {} channels, s has {}",
                mu.len(),
                s.len()
            )));
        }
        if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "std devs must be finite and > 0, means finite",
            ));
        }
        Ok(Self { mu, s })
    }

    pub fn scalar(mu: f64, s: f64) -> Result<Self> {
        Self::new(vec![mu], vec![s])
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// `E[ε | x_t]` for one channel.
    ///
    /// With posterior mean `m = (sqrt(ᾱ)s²x + (1−ᾱ)μ) / (ᾱs² + 1 − ᾱ)`,
    /// `ε* = (x − sqrt(ᾱ)m) / sqrt(1−ᾱ)`, which simplifies to
    /// `sqrt(1−ᾱ)(x − sqrt(ᾱ)μ) / (ᾱs² + 1 − ᾱ)`.
    #[inline]
    pub(crate) fn expected_noise(&self, channel: usize, x: f64, alpha_bar: f64) -> f64 {
        let var = self.s[channel] * self.s[channel];
        let denom = alpha_bar * var + (1.0 - alpha_bar);
        (1.0 - alpha_bar).sqrt() * (x - alpha_bar.sqrt() * self.mu[channel]) / denom
    }
}

/// Exact `E[ε | x_t]` when the data are `N(mu, s²)` per channel.
pub fn analytic_predict(
    spec: &GaussianDataSpec,
    x_t: &SampleTensor,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<SampleTensor> {
    schedule.check_step(t)?;
    if x_t.channels() != spec.channels() {
        return Err(Error::invalid(format!(
            "tensor has {} channels, data spec has {}",
            x_t.channels(),
            spec.channels()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let mut out = x_t.as_array().clone();
    for (c, mut row) in out.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|x| spec.expected_noise(c, x, ab));
    }
    SampleTensor::new(out)
}

/// The optimal noise predictor for (optionally label-conditioned) Gaussian data.
///
/// With one spec the context is ignored. With several, each frame uses the
/// spec indexed by the arg-max of its context features.
#[derive(Debug, Clone)]
pub struct AnalyticDenoiser {
    specs: Vec<GaussianDataSpec>,
    schedule: NoiseSchedule,
}

impl AnalyticDenoiser {
    pub fn new(spec: GaussianDataSpec, schedule: NoiseSchedule) -> Self {
        Self {
            specs: vec![spec],
            schedule,
        }
    }

    pub fn conditional(specs: Vec<GaussianDataSpec>, schedule: NoiseSchedule) -> Result<Self> {
        let Some(first) = specs.first() else {
            return Err(Error::invalid("need at least one data spec"));
        };
        if specs.iter().any(|s| s.channels() != first.channels()) {
            return Err(Error::invalid("all label specs must share a channel count"));
        }
        Ok(Self { specs, schedule })
    }

    pub fn specs(&self) -> &[GaussianDataSpec] {
        &self.specs
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

impl EpsilonPredictor for AnalyticDenoiser {
    fn predict(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<SampleTensor> {
        if self.specs.len() == 1 {
            return analytic_predict(&self.specs[0], x_t, t, &self.schedule);
        }
        self.schedule.check_step(t)?;
        context.ensure_frames(x_t.frames())?;
        if context.dim() < self.specs.len() {
            return Err(Error::invalid(format!(
                "context has {} features, need one per label ({})",
                context.dim(),
                self.specs.len()
            )));
        }
        let channels = self.specs[0].channels();
        x_t.ensure_shape((channels, x_t.frames()))?;
        let ab = self.schedule.alpha_bar(t);
        let labels = context.argmax_labels();
        let x = x_t.as_array();
        let out = Array2::from_shape_fn(x.dim(), |(c, j)| {
            self.specs[labels[j].min(self.specs.len() - 1)].expected_noise(c, x[[c, j]], ab)
        });
        SampleTensor::new(out)
    }
}
