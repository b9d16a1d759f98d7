//! Wall-clock scaling of the sampler across decimation factors.
//!
//! Timing covers predictor calls and step algebra only; nothing is written
//! inside the timed region.

use std::fmt::Write as _;
use std::time::Instant;

use diffmel_core::denoiser::{AnalyticDenoiser, CountingPredictor, ZeroPredictor};
use diffmel_core::sampler::sample;
use diffmel_core::{
    ConditioningContext, EpsilonPredictor, GaussianDataSpec, NoiseSchedule, SeedStream,
    TrajectorySpec,
};

use crate::error::{CliError, CliResult};
use crate::manifest::PredictorKind;

pub const MIN_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub channels: usize,
    pub frames: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub gamma: usize,
    /// Trajectory length M.
    pub steps: usize,
    pub predictor_calls: usize,
    pub mean_s: f64,
    pub std_s: f64,
    /// Mean time of the first row divided by this row's.
    pub speedup: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Times one sample per repeat for every γ; speedups are relative to the
/// first entry of `gammas` (γ=1 by default).
pub fn run_bench(
    predictor: &dyn EpsilonPredictor,
    schedule: &NoiseSchedule,
    gammas: &[usize],
    config: &BenchConfig,
) -> CliResult<Vec<BenchRow>> {
    if config.repeats < MIN_REPEATS {
        return Err(CliError::Usage(format!(
            "need at least {MIN_REPEATS} timed repeats"
        )));
    }
    if gammas.is_empty() {
        return Err(CliError::Usage("no decimation factors given".into()));
    }
    let context = ConditioningContext::empty(config.frames);
    let shape = (config.channels, config.frames);
    let counting = CountingPredictor::new(predictor);
    let seeds = SeedStream::new(config.seed);

    let mut rows: Vec<BenchRow> = Vec::with_capacity(gammas.len());
    for (g, &gamma) in gammas.iter().enumerate() {
        let spec = TrajectorySpec::build(schedule.num_steps(), gamma, 1.0)?;
        let stream = seeds.child(g as u64);
        for w in 0..config.warmup {
            sample(
                &counting,
                &context,
                shape,
                &spec,
                schedule,
                &mut stream.child(w as u64).rng(),
            )?;
        }
        counting.reset();
        let mut times = Vec::with_capacity(config.repeats);
        for r in 0..config.repeats {
            let mut rng = stream.child((config.warmup + r) as u64).rng();
            let start = Instant::now();
            let out = sample(&counting, &context, shape, &spec, schedule, &mut rng)?;
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }
        let (mean_s, std_s) = mean_std(&times);
        let base = rows.first().map_or(mean_s, |r| r.mean_s);
        rows.push(BenchRow {
            gamma,
            steps: spec.len(),
            predictor_calls: counting.calls() / config.repeats,
            mean_s,
            std_s,
            speedup: base / mean_s,
        });
    }
    Ok(rows)
}

pub fn bench_predictor(
    kind: PredictorKind,
    channels: usize,
    schedule: &NoiseSchedule,
) -> CliResult<Box<dyn EpsilonPredictor>> {
    match kind {
        PredictorKind::Analytic => {
            let spec = GaussianDataSpec::new(vec![1.0; channels], vec![0.5; channels])?;
            Ok(Box::new(AnalyticDenoiser::new(spec, schedule.clone())))
        }
        PredictorKind::Zero => Ok(Box::new(ZeroPredictor)),
        PredictorKind::Toy => Err(CliError::Usage(
            "bench supports the analytic and zero predictors".into(),
        )),
    }
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("gamma,M,predictor_calls,mean_s,std_s,speedup\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.3}",
            r.gamma, r.steps, r.predictor_calls, r.mean_s, r.std_s, r.speedup
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_sample_convention() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn small_bench_counts_calls() {
        let schedule = NoiseSchedule::linear(20, 1e-4, 0.2).unwrap();
        let config = BenchConfig {
            channels: 2,
            frames: 3,
            repeats: 5,
            warmup: 1,
            seed: 0,
        };
        let rows = run_bench(&ZeroPredictor, &schedule, &[1, 5], &config).unwrap();
        assert_eq!(rows[0].predictor_calls, 20);
        assert_eq!(rows[1].predictor_calls, 5);
        assert_eq!(rows[0].speedup, 1.0);
        let csv = to_csv(&rows);
        assert!(csv.starts_with("gamma,M,predictor_calls"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn too_few_repeats() {
        let config = BenchConfig {
            channels: 1,
            frames: 1,
            repeats: 4,
            warmup: 0,
            seed: 0,
        };
        assert!(run_bench(&ZeroPredictor, &NoiseSchedule::default(), &[1], &config).is_err());
    }
}
