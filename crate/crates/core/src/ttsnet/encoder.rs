use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::layers::{conv_reach, relu, Conv1d, LayerNorm, Linear, MinimalGru};
use super::PhonemeSequence;
use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// `y = LN(x + ReLU(conv(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub conv: Conv1d,
    pub norm: LayerNorm,
}

impl EncoderBlock {
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut h = self.conv.forward(x)?.mapv(relu);
        h += &x;
        Ok(self.norm.forward(h.view()))
    }
}

/// Embedding + FC/ReLU pre-net, dilated residual conv blocks, then a
/// residual recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    /// `[d_model × vocab]`, column per token.
    pub embedding: Array2<f64>,
    pub prenet: Linear,
    pub blocks: Vec<EncoderBlock>,
    pub recurrent: Option<MinimalGru>,
}

impl TextEncoder {
    pub fn random<R: Rng + ?Sized>(
        vocab: usize,
        d_model: usize,
        kernel: usize,
        dilations: &[usize],
        recurrent: bool,
        rng: &mut R,
    ) -> Self {
        Self {
            embedding: Array2::from_shape_simple_fn((d_model, vocab), || standard_normal(rng)),
            prenet: Linear::random(d_model, d_model, rng),
            blocks: dilations
                .iter()
                .map(|&d| EncoderBlock {
                    conv: Conv1d::random(d_model, d_model, kernel, d, rng),
                    norm: LayerNorm::new(d_model),
                })
                .collect(),
            recurrent: recurrent.then(|| MinimalGru::random(d_model, d_model, rng)),
        }
    }

    pub fn d_model(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.ncols()
    }

    /// Zero every conv and recurrent weight and bias; the pre-net is kept.
    pub fn zero_weights(&mut self) {
        for b in &mut self.blocks {
            b.conv.zero_weights();
            b.conv.bias.fill(0.0);
        }
        if let Some(r) = &mut self.recurrent {
            r.zero_weights();
            r.input_forget.bias.fill(0.0);
            r.input_candidate.bias.fill(0.0);
        }
    }

    pub fn prenet_forward(&self, phonemes: &PhonemeSequence) -> Result<Array2<f64>> {
        if phonemes.is_empty() {
            return Err(Error::invalid("empty phoneme sequence"));
        }
        let mut emb = Array2::zeros((self.d_model(), phonemes.len()));
        for (j, &id) in phonemes.ids().iter().enumerate() {
            if id >= self.vocab_size() {
                return Err(Error::invalid(format!(
                    "phoneme id {id} outside vocabulary of {}",
                    self.vocab_size()
                )));
            }
            emb.column_mut(j).assign(&self.embedding.column(id));
        }
        Ok(self.prenet.forward(emb.view())?.mapv(relu))
    }

    pub fn forward(&self, phonemes: &PhonemeSequence) -> Result<Array2<f64>> {
        let mut x = self.prenet_forward(phonemes)?;
        for block in &self.blocks {
            x = block.forward(x.view())?;
        }
        if let Some(rnn) = &self.recurrent {
            x = &x + &rnn.forward(x.view())?;
        }
        Ok(x)
    }

    /// Combined `(left, right)` reach of the conv stack.
    pub fn receptive_field(&self) -> (usize, usize) {
        self.blocks.iter().fold((0, 0), |(l, r), b| {
            let (bl, br) = conv_reach(b.conv.kernel(), b.conv.dilation);
            (l + bl, r + br)
        })
    }

    pub fn num_params(&self) -> usize {
        self.embedding.len()
            + self.prenet.num_params()
            + self
                .blocks
                .iter()
                .map(|b| b.conv.num_params() + b.norm.num_params())
                .sum::<usize>()
            + self.recurrent.as_ref().map_or(0, |r| r.num_params())
    }
}

/// [`TextEncoder::forward`] as a free function.
pub fn encode_text(phonemes: &PhonemeSequence, encoder: &TextEncoder) -> Result<Array2<f64>> {
    encoder.forward(phonemes)
}
