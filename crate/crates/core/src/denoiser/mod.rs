//! Noise predictors `ε_θ(x_t, t, c)`.

mod analytic;
pub mod data;
pub mod toy;

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::Result;
use crate::tensor::{ConditioningContext, SampleTensor};

pub use analytic::{analytic_predict, AnalyticDenoiser, GaussianDataSpec};
pub use toy::{ToyConfig, ToyDenoiser, ToyDenoiserParams};

/// Predicts the noise that was mixed into `x_t` at step `t` under context `c`.
///
/// Implementations must return a tensor of the same shape as `x_t` and must
/// not mutate observable state; samplers call them concurrently.
pub trait EpsilonPredictor: Send + Sync {
    fn predict(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<SampleTensor>;
}

impl<P: EpsilonPredictor + ?Sized> EpsilonPredictor for &P {
    fn predict(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<SampleTensor> {
        (**self).predict(x_t, t, context)
    }
}

impl<P: EpsilonPredictor + ?Sized> EpsilonPredictor for Box<P> {
    fn predict(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<SampleTensor> {
        (**self).predict(x_t, t, context)
    }
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl EpsilonPredictor for ZeroPredictor {
    fn predict(
        &self,
        x_t: &SampleTensor,
        _t: usize,
        _context: &ConditioningContext,
    ) -> Result<SampleTensor> {
        let (c, f) = x_t.shape();
        Ok(SampleTensor::zeros(c, f))
    }
}

/// Wraps a predictor and counts how often it is called.
#[derive(Debug, Default)]
pub struct CountingPredictor<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: EpsilonPredictor> EpsilonPredictor for CountingPredictor<P> {
    fn predict(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<SampleTensor> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(x_t, t, context)
    }
}
