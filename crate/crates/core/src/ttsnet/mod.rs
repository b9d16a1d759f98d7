//! Desk-scale text-conditioning network: phoneme encoder, duration
//! predictor, length regulator, step encoder and gated residual decoder.

mod config;
mod decoder;
mod duration;
mod embedding;
mod encoder;
pub mod layers;
mod length;

use ndarray::Array2;
use rand::Rng;

pub use crate::tensor::ConditioningContext;
pub use config::{parse_vocabulary, Scale, TtsConfig};
pub use decoder::{decoder_block, Decoder, DecoderBlock, DecoderDims};
pub use duration::{
    duration_loss, durations_from_log, log_duration_targets, train_duration_predictor,
    DurationPredictor,
};
pub use embedding::{step_embedding, step_encode, StepEncoder};
pub use encoder::{encode_text, EncoderBlock, TextEncoder};
pub use length::{length_regulate, DurationSequence};

use crate::error::{Error, Result};

/// Phoneme ids over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSequence {
    ids: Vec<usize>,
}

impl PhonemeSequence {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if let Some(bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::invalid(format!(
                "phoneme id {bad} outside vocabulary of {vocab_size}"
            )));
        }
        Ok(Self { ids })
    }

    /// Look tokens up in `vocabulary` (position = id).
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], vocabulary: &[String]) -> Result<Self> {
        let ids = tokens
            .iter()
            .map(|tok| {
                vocabulary
                    .iter()
                    .position(|v| v == tok.as_ref())
                    .ok_or_else(|| Error::invalid(format!("unknown phoneme `{}`", tok.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, vocabulary.len())
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// All sub-networks wired together.
#[derive(Debug, Clone)]
pub struct TtsModel {
    pub config: TtsConfig,
    pub encoder: TextEncoder,
    pub durations: DurationPredictor,
    pub decoder: Decoder,
}

impl TtsModel {
    pub fn random<R: Rng + ?Sized>(config: TtsConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = TextEncoder::random(
            config.vocab_size,
            config.d_model,
            config.encoder_kernel,
            &config.encoder_dilations,
            config.recurrent,
            rng,
        );
        let durations = DurationPredictor::random(config.d_model, config.duration_hidden, rng);
        let decoder = Decoder::random(config.decoder_dims(), rng);
        Ok(Self {
            config,
            encoder,
            durations,
            decoder,
        })
    }

    pub fn encode(&self, phonemes: &PhonemeSequence) -> Result<Array2<f64>> {
        self.encoder.forward(phonemes)
    }

    /// Frame-aligned context from supplied durations.
    pub fn context(
        &self,
        phonemes: &PhonemeSequence,
        durations: &DurationSequence,
    ) -> Result<ConditioningContext> {
        let encoded = self.encode(phonemes)?;
        length_regulate(encoded.view(), durations)
    }

    /// Frame-aligned context from predicted durations.
    pub fn context_from_predicted(
        &self,
        phonemes: &PhonemeSequence,
    ) -> Result<(ConditioningContext, DurationSequence)> {
        let encoded = self.encode(phonemes)?;
        let durations = self.durations.predict_durations(encoded.view())?;
        Ok((length_regulate(encoded.view(), &durations)?, durations))
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.durations.num_params() + self.decoder.num_params()
    }
}
