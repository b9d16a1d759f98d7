//! Synthetic conditional datasets for training the toy denoiser.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;

use super::GaussianDataSpec;
use crate::error::{Error, Result};
use crate::forward::TrainingBatch;
use crate::rng::standard_normal;
use crate::tensor::{ConditioningContext, SampleTensor};

/// Per-channel Gaussians keyed by a context label; the context is the
/// one-hot label of each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    specs: Vec<GaussianDataSpec>,
}

impl ConditionalGaussian {
    pub fn new(specs: Vec<GaussianDataSpec>) -> Result<Self> {
        let Some(first) = specs.first() else {
            return Err(Error::invalid("need at least one label"));
        };
        if specs.iter().any(|s| s.channels() != first.channels()) {
            return Err(Error::invalid("all labels must share a channel count"));
        }
        Ok(Self { specs })
    }

    /// One channel, two labels: `N(1, 0.5²)` and `N(−1, 0.3²)`.
    pub fn default_pair() -> Self {
        Self {
            specs: vec![
                GaussianDataSpec::scalar(1.0, 0.5).unwrap(),
                GaussianDataSpec::scalar(-1.0, 0.3).unwrap(),
            ],
        }
    }

    pub fn specs(&self) -> &[GaussianDataSpec] {
        &self.specs
    }

    pub fn num_labels(&self) -> usize {
        self.specs.len()
    }

    pub fn channels(&self) -> usize {
        self.specs[0].channels()
    }

    /// `items` tensors of `frames` frames each, with a random label per frame.
    pub fn dataset<R: Rng + ?Sized>(
        &self,
        items: usize,
        frames: usize,
        rng: &mut R,
    ) -> Result<Vec<TrainingBatch>> {
        (0..items).map(|_| self.item(frames, rng)).collect()
    }

    fn item<R: Rng + ?Sized>(&self, frames: usize, rng: &mut R) -> Result<TrainingBatch> {
        let labels: Vec<usize> = (0..frames)
            .map(|_| rng.random_range(0..self.num_labels()))
            .collect();
        let mut x0 = Array2::zeros((self.channels(), frames));
        for (j, &l) in labels.iter().enumerate() {
            let spec = &self.specs[l];
            for c in 0..self.channels() {
                x0[[c, j]] = spec.mu()[c] + spec.s()[c] * standard_normal(rng);
            }
        }
        TrainingBatch::new(
            SampleTensor::new(x0)?,
            ConditioningContext::one_hot(&labels, self.num_labels())?,
        )
    }
}

/// Deterministic sinusoid patterns keyed by label.
///
/// Context rows are the one-hot label followed by `sin`/`cos` of the frame
/// phase, so the target is a function of the context alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidPatterns {
    pub channels: usize,
    pub num_labels: usize,
    pub frames: usize,
}

impl SinusoidPatterns {
    pub fn context_dim(&self) -> usize {
        self.num_labels + 2
    }

    pub fn context(&self, label: usize) -> Result<ConditioningContext> {
        if label >= self.num_labels {
            return Err(Error::invalid(format!(
                "label {label} >= {}",
                self.num_labels
            )));
        }
        let mut features = Array2::zeros((self.context_dim(), self.frames));
        for j in 0..self.frames {
            let phase = 2.0 * PI * j as f64 / self.frames as f64;
            features[[label, j]] = 1.0;
            features[[self.num_labels, j]] = phase.sin();
            features[[self.num_labels + 1, j]] = phase.cos();
        }
        ConditioningContext::new(features)
    }

    pub fn pattern(&self, label: usize) -> Result<SampleTensor> {
        let amplitude = 0.5 + 0.5 * label as f64 / self.num_labels.max(1) as f64;
        let cycles = (label + 1) as f64;
        let x0 = Array2::from_shape_fn((self.channels, self.frames), |(c, j)| {
            let phase = 2.0 * PI * cycles * j as f64 / self.frames as f64;
            amplitude * (phase + 0.5 * c as f64).sin()
        });
        SampleTensor::new(x0)
    }

    /// `copies` items of every label, in label order.
    pub fn dataset(&self, copies: usize) -> Result<Vec<TrainingBatch>> {
        if self.channels == 0 || self.num_labels == 0 || self.frames == 0 {
            return Err(Error::invalid(format!(
                "degenerate sinusoid dataset {self:?}"
            )));
        }
        let mut out = Vec::with_capacity(copies * self.num_labels);
        for _ in 0..copies {
            for label in 0..self.num_labels {
                out.push(TrainingBatch::new(
                    self.pattern(label)?,
                    self.context(label)?,
                )?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn gaussian_dataset_shapes_and_labels() {
        let mut rng = SeedStream::new(2).rng();
        let data = ConditionalGaussian::default_pair()
            .dataset(3, 10, &mut rng)
            .unwrap();
        assert_eq!(data.len(), 3);
        for item in &data {
            assert_eq!(item.x0.shape(), (1, 10));
            assert_eq!(item.context.dim(), 2);
            assert!(item
                .context
                .features()
                .columns()
                .into_iter()
                .all(|c| c.sum() == 1.0));
        }
    }

    #[test]
    fn sinusoid_patterns_depend_on_label() {
        let p = SinusoidPatterns {
            channels: 2,
            num_labels: 3,
            frames: 16,
        };
        let data = p.dataset(2).unwrap();
        assert_eq!(data.len(), 6);
        assert_ne!(data[0].x0, data[1].x0);
        assert_eq!(data[0].x0, data[3].x0);
        assert_eq!(data[0].context.dim(), 5);
        assert!(p.context(3).is_err());
    }
}
