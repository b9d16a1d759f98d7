use std::path::{Path, PathBuf};
use std::time::Instant;

use diffmel_core::denoiser::toy::{grad_check, GradCheckReport, TrainOptions};
use diffmel_core::denoiser::{AnalyticDenoiser, ToyDenoiser, ZeroPredictor};
use diffmel_core::io::{parse_schedule, write_schedule, TensorFile};
use diffmel_core::sampler::sample_chains;
use diffmel_core::schedule::ScheduleKind;
use diffmel_core::{
    ConditioningContext, EpsilonPredictor, GaussianDataSpec, NoiseSchedule, SampleTensor,
    SeedStream, TrajectorySpec,
};

use crate::args::{GradCheckArgs, SampleArgs, ScheduleArgs, ScheduleOpts, TrainToyArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{unix_now, PredictorKind, RunManifest, MANIFEST_FILE};
use crate::toy;

pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::file(path, e))
}

pub fn read_schedule(path: &Path) -> CliResult<NoiseSchedule> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    Ok(parse_schedule(&text)?)
}

pub fn load_schedule(opts: &ScheduleOpts) -> CliResult<NoiseSchedule> {
    match &opts.schedule {
        Some(path) => read_schedule(path),
        None => Ok(NoiseSchedule::linear(
            opts.num_steps,
            opts.beta_start,
            opts.beta_end,
        )?),
    }
}

pub fn schedule_cmd(args: &ScheduleArgs) -> CliResult<PathBuf> {
    let schedule = NoiseSchedule::linear(args.num_steps, args.beta_start, args.beta_end)?;
    let path = args
        .output
        .clone()
        .unwrap_or_else(|| args.out.out_dir.join("schedule.txt"));
    let mut bytes = Vec::new();
    write_schedule(&schedule, &mut bytes)?;
    write_file(&path, &bytes)?;
    Ok(path)
}

/// Resolve flags (or a manifest) into the run description.
pub fn sample_manifest(args: &SampleArgs) -> CliResult<RunManifest> {
    if let Some(path) = &args.from_manifest {
        let mut m = RunManifest::read(path)?;
        m.phases.clear();
        return Ok(m);
    }
    let schedule = load_schedule(&args.schedule)?;
    Ok(RunManifest {
        schedule_kind: schedule.kind(),
        beta_start: schedule.beta_start(),
        beta_end: schedule.beta_end(),
        num_steps: schedule.num_steps(),
        schedule_file: args.schedule.schedule.clone(),
        gamma: args.gamma,
        eta: args.eta,
        seed: args.seed,
        predictor: args.predictor,
        params: args.params.clone(),
        channels: args.channels,
        frames: args.frames,
        chains: args.chains,
        parallel: args.parallel,
        mu: args.mu,
        s: args.s,
        label: args.label,
        timestamp: 0,
        phases: Vec::new(),
    })
}

fn manifest_schedule(m: &RunManifest) -> CliResult<NoiseSchedule> {
    let schedule = match &m.schedule_file {
        Some(path) => read_schedule(path)?,
        None => {
            if m.schedule_kind != ScheduleKind::Linear {
                return Err(CliError::Manifest(
                    "custom schedule without schedule_file".into(),
                ));
            }
            NoiseSchedule::linear(m.num_steps, m.beta_start, m.beta_end)?
        }
    };
    if schedule.num_steps() != m.num_steps {
        return Err(CliError::Manifest(format!(
            "schedule has {} steps, manifest says {}",
            schedule.num_steps(),
            m.num_steps
        )));
    }
    Ok(schedule)
}

fn build_predictor(
    m: &RunManifest,
    schedule: &NoiseSchedule,
) -> CliResult<(Box<dyn EpsilonPredictor>, ConditioningContext)> {
    let empty = ConditioningContext::empty(m.frames);
    match m.predictor {
        PredictorKind::Zero => Ok((Box::new(ZeroPredictor), empty)),
        PredictorKind::Analytic => {
            let spec = GaussianDataSpec::new(vec![m.mu; m.channels], vec![m.s; m.channels])?;
            Ok((
                Box::new(AnalyticDenoiser::new(spec, schedule.clone())),
                empty,
            ))
        }
        PredictorKind::Toy => {
            let path = m
                .params
                .as_ref()
                .ok_or_else(|| CliError::Usage("the toy predictor needs --params".into()))?;
            let params = toy::read_params(path)?;
            let config = *params.config();
            if config.channels != m.channels {
                return Err(CliError::Usage(format!(
                    "toy parameters expect {} channels, got --channels {}",
                    config.channels, m.channels
                )));
            }
            let context = match m.label {
                Some(label) => {
                    ConditioningContext::one_hot(&vec![label; m.frames], config.context_dim)?
                }
                None => ConditioningContext::new(ndarray::Array2::zeros((
                    config.context_dim,
                    m.frames,
                )))?,
            };
            Ok((
                Box::new(ToyDenoiser::new(params, schedule.num_steps())),
                context,
            ))
        }
    }
}

/// Run the sampler for `m`; also returns the wall-clock of the sampling phase.
pub fn run_samples(m: &RunManifest) -> CliResult<(Vec<SampleTensor>, f64)> {
    if m.chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let schedule = manifest_schedule(m)?;
    let spec = TrajectorySpec::build(schedule.num_steps(), m.gamma, m.eta)?;
    spec.validate_for(&schedule)?;
    let (predictor, context) = build_predictor(m, &schedule)?;
    let start = Instant::now();
    let samples = sample_chains(
        predictor.as_ref(),
        &context,
        (m.channels, m.frames),
        &spec,
        &schedule,
        SeedStream::new(m.seed),
        m.chains,
        m.parallel,
    )?;
    Ok((samples, start.elapsed().as_secs_f64()))
}

pub fn sample_file_name(chain: usize) -> String {
    format!("sample_{chain:03}.tensor")
}

/// Encoded tensor files, one per chain.
pub fn encode_samples(samples: &[SampleTensor]) -> Vec<Vec<u8>> {
    samples
        .iter()
        .map(|s| TensorFile::from_tensor(s).to_bytes())
        .collect()
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub fn sample_cmd(args: &SampleArgs) -> CliResult<SampleOutcome> {
    let mut manifest = sample_manifest(args)?;
    let (samples, sample_secs) = run_samples(&manifest)?;

    let dir = &args.out.out_dir;
    create_dir(dir)?;
    let start = Instant::now();
    let mut files = Vec::with_capacity(samples.len());
    for (k, bytes) in encode_samples(&samples).iter().enumerate() {
        let path = dir.join(sample_file_name(k));
        write_file(&path, bytes)?;
        files.push(path);
    }
    manifest.timestamp = unix_now();
    manifest.phases = vec![
        ("sample".into(), sample_secs),
        ("write".into(), start.elapsed().as_secs_f64()),
    ];
    let manifest_path = dir.join(MANIFEST_FILE);
    write_file(&manifest_path, manifest.to_text().as_bytes())?;
    Ok(SampleOutcome {
        files,
        manifest: manifest_path,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PathBuf,
    pub curve: PathBuf,
    pub final_loss: f64,
}

pub fn train_toy_cmd(args: &TrainToyArgs) -> CliResult<TrainOutcome> {
    let schedule = NoiseSchedule::default();
    let (data, params) = toy::task(args.seed, args.items, args.frames)?;
    let opts = TrainOptions {
        steps: args.steps,
        learning_rate: args.learning_rate,
        items_per_step: args.items_per_step,
        ..TrainOptions::default()
    };
    let (params, curve) = toy::train(params, &data, &schedule, &opts, args.seed)?;

    let dir = &args.out.out_dir;
    create_dir(dir)?;
    let params_path = dir.join(toy::PARAMS_FILE);
    toy::write_params(&params_path, &params)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in curve.iter().enumerate() {
        csv.push_str(&format!("{},{l:?}\n", i + 1));
    }
    let curve_path = dir.join("loss_curve.csv");
    write_file(&curve_path, csv.as_bytes())?;
    Ok(TrainOutcome {
        params: params_path,
        curve: curve_path,
        final_loss: curve.last().copied().unwrap_or(f64::NAN),
    })
}

pub fn grad_check_cmd(args: &GradCheckArgs) -> CliResult<GradCheckReport> {
    let schedule = NoiseSchedule::default();
    let (params, batch) = match &args.params {
        Some(path) => {
            let params = toy::read_params(path)?;
            let config = *params.config();
            let (data, _) = toy::task(args.seed, 1, 32)?;
            if config != toy::task_config() {
                return Err(CliError::Usage(
                    "grad-check expects parameters trained by train-toy".into(),
                ));
            }
            (params, toy::pinned_batch(&data[0], args.seed, 137)?)
        }
        None => toy::grad_check_setup(args.seed, &schedule)?,
    };
    let report = grad_check(&params, &batch, &schedule, args.perturbation)?;
    if !(report.max_rel_error < GRAD_CHECK_TOLERANCE) {
        return Err(CliError::Numerical(format!(
            "max relative error {:e} over {} parameters",
            report.max_rel_error, report.checked
        )));
    }
    Ok(report)
}
