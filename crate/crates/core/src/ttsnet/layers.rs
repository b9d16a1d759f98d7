//! Forward-only building blocks: 1-D convolution, affine maps, layer
//! normalisation and a minimal gated recurrent cell. Tensors are
//! `[channels × frames]`.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::standard_normal;

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

fn random_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Array2<f64> {
    let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || scale * standard_normal(rng))
}

/// `y = W x + b` applied to every column.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn random<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: random_matrix(output, input, input, rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::invalid(format!(
                "linear layer expects {} rows, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        let mut y = self.weight.dot(&x);
        y += &self.bias.view().insert_axis(Axis(1));
        Ok(y)
    }

    pub fn forward_vec(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "linear layer expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(self.weight.dot(x) + &self.bias)
    }

    pub fn zero_weights(&mut self) {
        self.weight.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Zero-padded 1-D convolution with "same" output length.
///
/// For total padding `P = dilation·(kernel − 1)`, `P / 2` zeros go on the
/// left and the rest on the right, so output frame `j` reads inputs
/// `j − P/2 ..= j + (P − P/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[out × in × kernel]`
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub dilation: usize,
}

impl Conv1d {
    pub fn zeros(input: usize, output: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            weight: Array3::zeros((output, input, kernel)),
            bias: Array1::zeros(output),
            dilation: dilation.max(1),
        }
    }

    pub fn random<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        let scale = 1.0 / ((input * kernel).max(1) as f64).sqrt();
        Self {
            weight: Array3::from_shape_simple_fn((output, input, kernel), || {
                scale * standard_normal(rng)
            }),
            bias: Array1::zeros(output),
            dilation: dilation.max(1),
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.len_of(Axis(2))
    }

    pub fn input_dim(&self) -> usize {
        self.weight.len_of(Axis(1))
    }

    pub fn output_dim(&self) -> usize {
        self.weight.len_of(Axis(0))
    }

    /// `(left, right)` reach of one output frame into the input.
    pub fn reach(&self) -> (usize, usize) {
        conv_reach(self.kernel(), self.dilation)
    }

    /// Stack the `kernel` shifted copies of `x`: `[(in·kernel) × frames]`,
    /// row `i·kernel + m` holding input channel `i` at tap `m`.
    pub fn unfold(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (channels, frames) = x.dim();
        let k = self.kernel();
        let (left, _) = self.reach();
        let mut cols = Array2::zeros((channels * k, frames));
        for i in 0..channels {
            for m in 0..k {
                let offset = (m * self.dilation) as isize - left as isize;
                let mut row = cols.row_mut(i * k + m);
                for j in 0..frames {
                    let src = j as isize + offset;
                    if src >= 0 && (src as usize) < frames {
                        row[j] = x[[i, src as usize]];
                    }
                }
            }
        }
        cols
    }

    pub fn flat_weight(&self) -> ArrayView2<'_, f64> {
        let (o, i, k) = self.weight.dim();
        self.weight
            .view()
            .into_shape_with_order((o, i * k))
            .expect("standard layout weight")
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::invalid(format!(
                "conv expects {} channels, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        let cols = self.unfold(x);
        let mut y = self.flat_weight().dot(&cols);
        y += &self.bias.view().insert_axis(Axis(1));
        Ok(y)
    }

    pub fn zero_weights(&mut self) {
        self.weight.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

pub fn conv_reach(kernel: usize, dilation: usize) -> (usize, usize) {
    let total = dilation * (kernel.saturating_sub(1));
    (total / 2, total - total / 2)
}

/// Normalises each frame across channels.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gain: Array1::ones(channels),
            bias: Array1::zeros(channels),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.to_owned();
        let n = x.nrows() as f64;
        for mut col in y.columns_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            for (c, v) in col.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gain[c] + self.bias[c];
            }
        }
        y
    }

    pub fn num_params(&self) -> usize {
        self.gain.len() + self.bias.len()
    }
}

/// Minimal gated recurrent unit:
/// `f = σ(W_f x + U_f h + b_f)`, `n = tanh(W_n x + U_n (f ⊙ h) + b_n)`,
/// `h' = (1 − f) ⊙ h + f ⊙ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalGru {
    pub input_forget: Linear,
    pub hidden_forget: Array2<f64>,
    pub input_candidate: Linear,
    pub hidden_candidate: Array2<f64>,
}

impl MinimalGru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_forget: Linear::zeros(input, hidden),
            hidden_forget: Array2::zeros((hidden, hidden)),
            input_candidate: Linear::zeros(input, hidden),
            hidden_candidate: Array2::zeros((hidden, hidden)),
        }
    }

    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_forget: Linear::random(input, hidden, rng),
            hidden_forget: random_matrix(hidden, hidden, hidden, rng),
            input_candidate: Linear::random(input, hidden, rng),
            hidden_candidate: random_matrix(hidden, hidden, hidden, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_forget.nrows()
    }

    /// Hidden states for every frame, `[hidden × frames]`, starting from zero.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let xf = self.input_forget.forward(x)?;
        let xn = self.input_candidate.forward(x)?;
        let hidden = self.hidden_dim();
        let mut h = Array1::<f64>::zeros(hidden);
        let mut out = Array2::zeros((hidden, x.ncols()));
        for j in 0..x.ncols() {
            let f = (&xf.column(j) + &self.hidden_forget.dot(&h)).mapv(sigmoid);
            let gated = &f * &h;
            let n = (&xn.column(j) + &self.hidden_candidate.dot(&gated)).mapv(f64::tanh);
            h = (1.0 - &f) * &h + &f * &n;
            out.column_mut(j).assign(&h);
        }
        Ok(out)
    }

    pub fn zero_weights(&mut self) {
        self.input_forget.zero_weights();
        self.input_candidate.zero_weights();
        self.hidden_forget.fill(0.0);
        self.hidden_candidate.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.input_forget.num_params()
            + self.input_candidate.num_params()
            + self.hidden_forget.len()
            + self.hidden_candidate.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use ndarray::array;

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = SeedStream::new(4).rng();
        for (k, d) in [(3, 1), (4, 1), (4, 2), (4, 4), (1, 1)] {
            let conv = Conv1d::random(3, 2, k, d, &mut rng);
            let x = Array2::from_shape_simple_fn((3, 11), || standard_normal(&mut rng));
            let y = conv.forward(x.view()).unwrap();
            let (left, _) = conv.reach();
            for o in 0..2 {
                for j in 0..11 {
                    let mut acc = conv.bias[o];
                    for i in 0..3 {
                        for m in 0..k {
                            let src = j as isize + (m * d) as isize - left as isize;
                            if (0..11).contains(&src) {
                                acc += conv.weight[[o, i, m]] * x[[i, src as usize]];
                            }
                        }
                    }
                    assert!((y[[o, j]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn reach_arithmetic() {
        assert_eq!(conv_reach(4, 1), (1, 2));
        assert_eq!(conv_reach(4, 2), (3, 3));
        assert_eq!(conv_reach(4, 4), (6, 6));
        assert_eq!(conv_reach(3, 1), (1, 1));
        assert_eq!(conv_reach(1, 1), (0, 0));
    }

    #[test]
    fn layer_norm_normalises_columns() {
        let ln = LayerNorm::new(3);
        let y = ln.forward(array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]].view());
        let col = y.column(0);
        assert!(col.sum().abs() < 1e-12);
        assert!((col.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-4);
        assert!(y.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let gru = MinimalGru::zeros(4, 5);
        let x = Array2::from_elem((4, 6), 3.0);
        assert!(gru.forward(x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn swish_values() {
        assert_eq!(swish(0.0), 0.0);
        assert!((swish(2.0) - 2.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
