use std::str::FromStr;

use super::decoder::DecoderDims;
use crate::error::{Error, Result};
use crate::schedule::DEFAULT_NUM_STEPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::Parse(format!("unknown scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtsConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub encoder_kernel: usize,
    pub encoder_dilations: Vec<usize>,
    pub recurrent: bool,
    pub duration_hidden: usize,
    pub mel_channels: usize,
    pub residual_channels: usize,
    pub decoder_blocks: usize,
    pub decoder_kernel: usize,
    pub step_embed_dim: usize,
    pub step_hidden: usize,
    pub num_steps: usize,
}

const ENCODER_DILATIONS: [usize; 10] = [1, 2, 4, 1, 2, 4, 1, 2, 4, 1];

impl TtsConfig {
    /// Dimensions small enough to train on a CPU.
    pub fn desk() -> Self {
        Self {
            vocab_size: 64,
            d_model: 64,
            encoder_kernel: 4,
            encoder_dilations: ENCODER_DILATIONS.to_vec(),
            recurrent: true,
            duration_hidden: 64,
            mel_channels: 80,
            residual_channels: 64,
            decoder_blocks: 4,
            decoder_kernel: 3,
            step_embed_dim: 128,
            step_hidden: 256,
            num_steps: DEFAULT_NUM_STEPS,
        }
    }

    /// Full-size dimensions: 512 residual channels and 12 decoder blocks.
    /// Only exercised for shape consistency.
    pub fn full() -> Self {
        Self {
            d_model: 256,
            duration_hidden: 256,
            residual_channels: 512,
            decoder_blocks: 12,
            step_hidden: 512,
            ..Self::desk()
        }
    }

    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(),
            Scale::Full => Self::full(),
        }
    }

    pub fn decoder_dims(&self) -> DecoderDims {
        DecoderDims {
            mel_channels: self.mel_channels,
            residual_channels: self.residual_channels,
            context_dim: self.d_model,
            blocks: self.decoder_blocks,
            kernel: self.decoder_kernel,
            step_embed_dim: self.step_embed_dim,
            step_hidden: self.step_hidden,
            num_steps: self.num_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("encoder_kernel", self.encoder_kernel),
            ("duration_hidden", self.duration_hidden),
            ("mel_channels", self.mel_channels),
            ("residual_channels", self.residual_channels),
            ("decoder_kernel", self.decoder_kernel),
            ("step_embed_dim", self.step_embed_dim),
            ("step_hidden", self.step_hidden),
            ("num_steps", self.num_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be > 0")));
        }
        if !self.step_embed_dim.is_multiple_of(2) {
            return Err(Error::invalid("step_embed_dim must be even"));
        }
        if self.encoder_dilations.contains(&0) {
            return Err(Error::invalid("dilations must be > 0"));
        }
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment. A `scale` key picks
    /// the base configuration and must come before any override.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::desk();
        let mut seen_override = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let uint = || {
                value
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {key}: {e}", lineno + 1)))
            };
            match key {
                "scale" => {
                    if seen_override {
                        return Err(Error::Parse(format!(
                            "line {}: scale must precede overrides",
                            lineno + 1
                        )));
                    }
                    config = Self::for_scale(value.parse()?);
                    continue;
                }
                "vocab_size" => config.vocab_size = uint()?,
                "d_model" => config.d_model = uint()?,
                "encoder_kernel" => config.encoder_kernel = uint()?,
                "encoder_dilations" => {
                    config.encoder_dilations = value
                        .split(',')
                        .map(|v| v.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Parse(format!("line {}: {key}: {e}", lineno + 1)))?
                }
                "recurrent" => {
                    config.recurrent = value
                        .parse()
                        .map_err(|e| Error::Parse(format!("line {}: {key}: {e}", lineno + 1)))?
                }
                "duration_hidden" => config.duration_hidden = uint()?,
                "mel_channels" => config.mel_channels = uint()?,
                "residual_channels" => config.residual_channels = uint()?,
                "decoder_blocks" => config.decoder_blocks = uint()?,
                "decoder_kernel" => config.decoder_kernel = uint()?,
                "step_embed_dim" => config.step_embed_dim = uint()?,
                "step_hidden" => config.step_hidden = uint()?,
                "num_steps" => config.num_steps = uint()?,
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
            seen_override = true;
        }
        config.validate()?;
        Ok(config)
    }
}

impl Default for TtsConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One token per line; blank lines are ignored.
pub fn parse_vocabulary(text: &str) -> Result<Vec<String>> {
    let vocab: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if vocab.is_empty() {
        return Err(Error::Parse("vocabulary is empty".into()));
    }
    for (i, tok) in vocab.iter().enumerate() {
        if vocab[..i].contains(tok) {
            return Err(Error::Parse(format!("duplicate token `{tok}`")));
        }
    }
    Ok(vocab)
}
