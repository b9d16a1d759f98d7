//! Toy-denoiser task setup and parameter files.
//!
//! Parameters are stored as a `[1 × P]` tensor file (flat layout: per layer,
//! row-major weights then bias) next to a text file holding the network
//! configuration and layer shapes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use diffmel_core::denoiser::data::ConditionalGaussian;
use diffmel_core::denoiser::toy::{toy_train, TrainOptions};
use diffmel_core::denoiser::{ToyConfig, ToyDenoiserParams};
use diffmel_core::io::TensorFile;
use diffmel_core::{NoiseSchedule, SampleTensor, SeedStream, TrainingBatch};

use crate::error::{CliError, CliResult};

pub const PARAMS_FILE: &str = "toy_params.tensor";

/// Network shape used for the conditional Gaussian task (two labels).
pub fn task_config() -> ToyConfig {
    ToyConfig {
        context_dim: 2,
        ..ToyConfig::default()
    }
}

/// Dataset (child 0) and initial parameters (child 1) for `seed`.
pub fn task(
    seed: u64,
    items: usize,
    frames: usize,
) -> CliResult<(Vec<TrainingBatch>, ToyDenoiserParams)> {
    let seeds = SeedStream::new(seed);
    let data =
        ConditionalGaussian::default_pair().dataset(items, frames, &mut seeds.child(0).rng())?;
    let params = ToyDenoiserParams::init(task_config(), &mut seeds.child(1).rng())?;
    Ok((data, params))
}

/// Train with the optimiser stream `child(2)` of `seed`.
pub fn train(
    params: ToyDenoiserParams,
    data: &[TrainingBatch],
    schedule: &NoiseSchedule,
    opts: &TrainOptions,
    seed: u64,
) -> CliResult<(ToyDenoiserParams, Vec<f64>)> {
    let mut rng = SeedStream::new(seed).child(2).rng();
    Ok(toy_train(params, data, schedule, opts, &mut rng)?)
}

/// A briefly trained network and a batch with pinned noise and step.
pub fn grad_check_setup(
    seed: u64,
    schedule: &NoiseSchedule,
) -> CliResult<(ToyDenoiserParams, TrainingBatch)> {
    let (data, params) = task(seed, 64, 32)?;
    let opts = TrainOptions {
        steps: 200,
        ..TrainOptions::default()
    };
    let (params, _) = train(params, &data, schedule, &opts, seed)?;
    let batch = pinned_batch(&data[0], seed, 137)?;
    Ok((params, batch))
}

pub fn pinned_batch(item: &TrainingBatch, seed: u64, t: usize) -> CliResult<TrainingBatch> {
    let (c, f) = item.x0.shape();
    let eps = SampleTensor::standard_normal(c, f, &mut SeedStream::new(seed).child(3).rng());
    Ok(item.clone().with_noise(eps)?.with_step(t))
}

fn config_path(params_path: &Path) -> PathBuf {
    params_path.with_extension("txt")
}

pub fn write_params(path: &Path, params: &ToyDenoiserParams) -> CliResult<()> {
    let flat = params.to_flat();
    let file = TensorFile::from_matrix(
        &ndarray::Array2::from_shape_vec((1, flat.len()), flat).expect("1 × P"),
    )?;
    std::fs::write(path, file.to_bytes()).map_err(|e| CliError::file(path, e))?;

    let c = params.config();
    let mut text = String::new();
    for (k, v) in [
        ("channels", c.channels),
        ("context_dim", c.context_dim),
        ("embed_dim", c.embed_dim),
        ("hidden", c.hidden),
        ("hidden_layers", c.hidden_layers),
    ] {
        writeln!(text, "{k} = {v}").unwrap();
    }
    for (i, (out, inp)) in c.layer_shapes().iter().enumerate() {
        writeln!(text, "layer.{i} = {out} x {inp}").unwrap();
    }
    let cfg = config_path(path);
    std::fs::write(&cfg, text).map_err(|e| CliError::file(&cfg, e))
}

pub fn read_params(path: &Path) -> CliResult<ToyDenoiserParams> {
    let cfg_path = config_path(path);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| CliError::file(&cfg_path, e))?;
    let get = |key: &str| -> CliResult<usize> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .and_then(|(_, v)| v.trim().parse().ok())
            .ok_or_else(|| {
                CliError::Usage(format!("{}: missing or bad '{key}'", cfg_path.display()))
            })
    };
    let config = ToyConfig {
        channels: get("channels")?,
        context_dim: get("context_dim")?,
        embed_dim: get("embed_dim")?,
        hidden: get("hidden")?,
        hidden_layers: get("hidden_layers")?,
    };
    let bytes = std::fs::read(path).map_err(|e| CliError::file(path, e))?;
    let tensor = TensorFile::from_bytes(&bytes)?.to_tensor()?;
    let flat: Vec<f64> = tensor.as_array().iter().copied().collect();
    Ok(ToyDenoiserParams::from_flat(config, &flat)?)
}
