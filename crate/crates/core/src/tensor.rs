use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// A `[channels × frames]` real matrix standing in for a mel-spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor(Array2<f64>);

impl SampleTensor {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (c, f) = values.dim();
        if c == 0 || f == 0 {
            return Err(Error::invalid(format!("empty tensor shape ({c}, {f})")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor values".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(channels: usize, frames: usize) -> Self {
        Self(Array2::zeros((channels.max(1), frames.max(1))))
    }

    pub fn from_shape_vec(channels: usize, frames: usize, values: Vec<f64>) -> Result<Self> {
        let arr = Array2::from_shape_vec((channels, frames), values)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(arr)
    }

    pub fn standard_normal<R: Rng + ?Sized>(channels: usize, frames: usize, rng: &mut R) -> Self {
        Self(Array2::from_shape_simple_fn((channels, frames), || {
            standard_normal(rng)
        }))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn channels(&self) -> usize {
        self.0.nrows()
    }

    pub fn frames(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn as_array_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn ensure_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: self.shape(),
            });
        }
        Ok(())
    }

    pub fn mean_abs(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum::<f64>() / self.0.len() as f64
    }
}

impl From<SampleTensor> for Array2<f64> {
    fn from(t: SampleTensor) -> Self {
        t.0
    }
}

/// Frame-aligned conditioning features `[d × frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningContext {
    features: Array2<f64>,
}

impl ConditioningContext {
    pub fn new(features: Array2<f64>) -> Result<Self> {
        if features.ncols() == 0 || features.nrows() == 0 {
            return Err(Error::invalid("conditioning context must have frames > 0"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conditioning features".into()));
        }
        Ok(Self { features })
    }

    /// A single all-zero feature row, for unconditional runs.
    pub fn empty(frames: usize) -> Self {
        Self {
            features: Array2::zeros((1, frames.max(1))),
        }
    }

    /// One-hot labels per frame: row `label` is 1 in each column.
    pub fn one_hot(labels: &[usize], num_labels: usize) -> Result<Self> {
        let mut features = Array2::zeros((num_labels, labels.len()));
        for (j, &l) in labels.iter().enumerate() {
            if l >= num_labels {
                return Err(Error::invalid(format!("label {l} >= {num_labels}")));
            }
            features[[l, j]] = 1.0;
        }
        Self::new(features)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn frames(&self) -> usize {
        self.features.ncols()
    }

    /// Index of the largest feature in each frame.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.features
            .columns()
            .into_iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    pub fn ensure_frames(&self, frames: usize) -> Result<()> {
        if self.frames() != frames {
            return Err(Error::invalid(format!(
                "context has {} frames, expected {frames}",
                self.frames()
            )));
        }
        Ok(())
    }
}
