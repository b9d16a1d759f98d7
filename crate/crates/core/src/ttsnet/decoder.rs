use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::embedding::{step_embedding, StepEncoder};
use super::layers::{relu, sigmoid, Conv1d, Linear};
use crate::denoiser::EpsilonPredictor;
use crate::error::{Error, Result};
use crate::tensor::{ConditioningContext, SampleTensor};

/// Gated residual block.
///
/// `h = conv_k3(x) + ctx_proj(c) + step_proj(s)` has `2C` channels, split
/// into filter and gate halves; `y = tanh(filter) ⊙ σ(gate)` goes through a
/// 1×1 conv to `2C` channels split into residual (added to `x`) and skip.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock {
    pub conv: Conv1d,
    pub context_proj: Linear,
    pub step_proj: Linear,
    pub output: Linear,
}

impl DecoderBlock {
    pub fn random<R: Rng + ?Sized>(
        channels: usize,
        context_dim: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv1d::random(channels, 2 * channels, kernel, 1, rng),
            context_proj: Linear::random(context_dim, 2 * channels, rng),
            step_proj: Linear::random(channels, 2 * channels, rng),
            output: Linear::random(channels, 2 * channels, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv.input_dim()
    }

    pub fn zero_weights(&mut self) {
        self.conv.zero_weights();
        self.context_proj.zero_weights();
        self.step_proj.zero_weights();
        self.output.zero_weights();
    }

    /// The gated activation before the output projection.
    pub fn gated(
        &self,
        x: ArrayView2<'_, f64>,
        context: &ConditioningContext,
        step: &Array1<f64>,
    ) -> Result<Array2<f64>> {
        if context.frames() != x.ncols() {
            return Err(Error::invalid(format!(
                "context has {} frames, input has {}",
                context.frames(),
                x.ncols()
            )));
        }
        let c = self.channels();
        let mut h = self.conv.forward(x)?;
        h += &self.context_proj.forward(context.features().view())?;
        let step = self.step_proj.forward_vec(step)?;
        h += &step.view().insert_axis(Axis(1));
        let filter = h.slice(s![..c, ..]);
        let gate = h.slice(s![c.., ..]);
        let mut y = filter.mapv(f64::tanh);
        y.zip_mut_with(&gate, |f, &g| *f *= sigmoid(g));
        Ok(y)
    }

    /// `(residual out, skip out)`.
    pub fn forward(
        &self,
        x: ArrayView2<'_, f64>,
        context: &ConditioningContext,
        step: &Array1<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let c = self.channels();
        let y = self.gated(x, context, step)?;
        let out = self.output.forward(y.view())?;
        let residual = &x + &out.slice(s![..c, ..]);
        let skip = out.slice(s![c.., ..]).to_owned();
        Ok((residual, skip))
    }

    pub fn num_params(&self) -> usize {
        self.conv.num_params()
            + self.context_proj.num_params()
            + self.step_proj.num_params()
            + self.output.num_params()
    }
}

/// [`DecoderBlock::forward`] as a free function.
pub fn decoder_block(
    x: ArrayView2<'_, f64>,
    context: &ConditioningContext,
    step_vec: &Array1<f64>,
    block: &DecoderBlock,
) -> Result<(Array2<f64>, Array2<f64>)> {
    block.forward(x, context, step_vec)
}

/// Noise-predicting decoder: 1×1 input projection with ReLU, gated residual
/// blocks conditioned on context and encoded step, skip sum, 1×1 post-net.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub input_proj: Linear,
    pub step_encoder: StepEncoder,
    pub blocks: Vec<DecoderBlock>,
    pub postnet: Linear,
    pub step_embed_dim: usize,
    pub num_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderDims {
    pub mel_channels: usize,
    pub residual_channels: usize,
    pub context_dim: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub step_embed_dim: usize,
    pub step_hidden: usize,
    pub num_steps: usize,
}

impl Decoder {
    pub fn random<R: Rng + ?Sized>(dims: DecoderDims, rng: &mut R) -> Self {
        let c = dims.residual_channels;
        Self {
            input_proj: Linear::random(dims.mel_channels, c, rng),
            step_encoder: StepEncoder::random(dims.step_embed_dim, dims.step_hidden, c, rng),
            blocks: (0..dims.blocks)
                .map(|_| DecoderBlock::random(c, dims.context_dim, dims.kernel, rng))
                .collect(),
            postnet: Linear::random(c, dims.mel_channels, rng),
            step_embed_dim: dims.step_embed_dim,
            num_steps: dims.num_steps,
        }
    }

    pub fn mel_channels(&self) -> usize {
        self.input_proj.input_dim()
    }

    pub fn forward(
        &self,
        x_t: ArrayView2<'_, f64>,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<Array2<f64>> {
        if t == 0 || t > self.num_steps {
            return Err(Error::StepOutOfRange {
                t,
                max: self.num_steps,
            });
        }
        let step = self
            .step_encoder
            .forward(&step_embedding(t, self.step_embed_dim)?)?;
        let mut x = self.input_proj.forward(x_t)?.mapv(relu);
        let mut skip_sum = Array2::zeros(x.dim());
        for block in &self.blocks {
            let (residual, skip) = block.forward(x.view(), context, &step)?;
            x = residual;
            skip_sum += &skip;
        }
        self.postnet.forward(skip_sum.view())
    }

    pub fn num_params(&self) -> usize {
        self.input_proj.num_params()
            + self.step_encoder.num_params()
            + self.blocks.iter().map(|b| b.num_params()).sum::<usize>()
            + self.postnet.num_params()
    }
}

impl EpsilonPredictor for Decoder {
    fn predict(
        &self,
        x_t: &SampleTensor,
        t: usize,
        context: &ConditioningContext,
    ) -> Result<SampleTensor> {
        SampleTensor::new(self.forward(x_t.view(), t, context)?)
    }
}
