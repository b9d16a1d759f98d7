use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::tensor::ConditioningContext;

/// Frames per phoneme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationSequence(Vec<usize>);

impl DurationSequence {
    pub fn new(durations: Vec<usize>) -> Self {
        Self(durations)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.0.iter().sum()
    }
}

impl From<Vec<usize>> for DurationSequence {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Repeat column `i` of `embeddings` `durations[i]` times, in order.
pub fn length_regulate(
    embeddings: ArrayView2<'_, f64>,
    durations: &DurationSequence,
) -> Result<ConditioningContext> {
    if embeddings.ncols() != durations.len() {
        return Err(Error::invalid(format!(
            "{} phoneme embeddings but {} durations",
            embeddings.ncols(),
            durations.len()
        )));
    }
    let total = durations.total_frames();
    if total == 0 {
        return Err(Error::invalid("total duration is zero"));
    }
    let mut out = Array2::zeros((embeddings.nrows(), total));
    let mut frame = 0;
    for (col, &d) in embeddings.columns().into_iter().zip(durations.as_slice()) {
        for _ in 0..d {
            out.column_mut(frame).assign(&col);
            frame += 1;
        }
    }
    ConditioningContext::new(out)
}
