//! Reverse-process generation.
//!
//! [`ddpm_step`] is the ancestral update between consecutive steps.
//! [`accelerated_step`] and [`final_step`] walk a decimated trajectory
//! `τ_1 < … < τ_M = T`; [`sample`] drives a whole chain.

use ndarray::Zip;
use rand::Rng;
use rayon::prelude::*;

use crate::denoiser::EpsilonPredictor;
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::schedule::{NoiseSchedule, RADICAND_CLAMP};
use crate::tensor::{ConditioningContext, SampleTensor};

/// The decimated reverse path plus its temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    tau: Vec<usize>,
    gamma: usize,
    eta: f64,
}

impl TrajectorySpec {
    /// `τ = [1, 1+γ, 1+2γ, …]`, with `T` appended when the stride misses it.
    pub fn build(num_steps: usize, gamma: usize, eta: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::invalid("trajectory needs T >= 1"));
        }
        if gamma == 0 || gamma > num_steps {
            return Err(Error::invalid(format!(
                "decimation factor {gamma} must be in 1..={num_steps}"
            )));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!(
                "eta must be finite and >= 0, got {eta}"
            )));
        }
        let mut tau: Vec<usize> = (1..=num_steps).step_by(gamma).collect();
        if tau.last() != Some(&num_steps) {
            tau.push(num_steps);
        }
        Ok(Self { tau, gamma, eta })
    }

    pub fn tau(&self) -> &[usize] {
        &self.tau
    }

    /// Number of reverse transitions (and predictor calls), `M`.
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn num_steps(&self) -> usize {
        *self.tau.last().unwrap()
    }

    /// `τ_i` for a 1-based position `i`.
    pub fn step_at(&self, i: usize) -> Result<usize> {
        if i == 0 || i > self.tau.len() {
            return Err(Error::invalid(format!(
                "trajectory position {i} out of range 1..={}",
                self.tau.len()
            )));
        }
        Ok(self.tau[i - 1])
    }

    /// Checks the trajectory against `schedule`, including that every
    /// direction-term radicand is non-negative for this `eta`.
    pub fn validate_for(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.num_steps() != schedule.num_steps() {
            return Err(Error::invalid(format!(
                "trajectory ends at {} but schedule has T = {}",
                self.num_steps(),
                schedule.num_steps()
            )));
        }
        for i in 2..=self.len() {
            direction_coefficient(schedule, self.tau[i - 2], self.tau[i - 1], self.eta)?;
        }
        Ok(())
    }
}

/// Convenience wrapper over [`TrajectorySpec::build`].
pub fn build_trajectory(num_steps: usize, gamma: usize, eta: f64) -> Result<TrajectorySpec> {
    TrajectorySpec::build(num_steps, gamma, eta)
}

/// `(σ, sqrt(1 − ᾱ_prev − σ²))` for the jump `t → t_prev`.
fn direction_coefficient(
    schedule: &NoiseSchedule,
    t_prev: usize,
    t: usize,
    eta: f64,
) -> Result<(f64, f64)> {
    let sigma = schedule.sigma(t_prev, t, eta)?;
    let radicand = 1.0 - schedule.alpha_bar(t_prev) - sigma * sigma;
    if radicand < -RADICAND_CLAMP {
        return Err(Error::NegativeRadicand { t, value: radicand });
    }
    Ok((sigma, radicand.max(0.0).sqrt()))
}

fn ensure_same(a: &SampleTensor, b: &SampleTensor) -> Result<()> {
    b.ensure_shape(a.shape())
}

/// Ancestral update `x_t → x_{t−1}`.
///
/// `z` is caller-supplied standard-normal noise; at `t = 1` its coefficient
/// is zero.
pub fn ddpm_step(
    x_t: &SampleTensor,
    t: usize,
    eps_hat: &SampleTensor,
    z: &SampleTensor,
    schedule: &NoiseSchedule,
    eta: f64,
) -> Result<SampleTensor> {
    schedule.check_step(t)?;
    ensure_same(x_t, eps_hat)?;
    ensure_same(x_t, z)?;
    let sigma = schedule.sigma(t - 1, t, eta)?;
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let eps_coef = (1.0 - schedule.alpha(t)) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let out = Zip::from(x_t.as_array())
        .and(eps_hat.as_array())
        .and(z.as_array())
        .map_collect(|&x, &e, &n| inv_sqrt_alpha * (x - eps_coef * e) + sigma * n);
    SampleTensor::new(out).map_err(|_| Error::NonFinite(format!("ddpm step at t={t}")))
}

/// Accelerated update `x_{τ_i} → x_{τ_{i−1}}` for trajectory position `i ≥ 2`.
pub fn accelerated_step(
    x_cur: &SampleTensor,
    i: usize,
    spec: &TrajectorySpec,
    eps_hat: &SampleTensor,
    z: &SampleTensor,
    schedule: &NoiseSchedule,
) -> Result<SampleTensor> {
    if i < 2 {
        return Err(Error::invalid(format!(
            "accelerated step needs trajectory position >= 2, got {i}"
        )));
    }
    let t = spec.step_at(i)?;
    let t_prev = spec.step_at(i - 1)?;
    schedule.check_step(t)?;
    ensure_same(x_cur, eps_hat)?;
    ensure_same(x_cur, z)?;
    let (sigma, direction) = direction_coefficient(schedule, t_prev, t, spec.eta)?;
    let sqrt_ab = schedule.alpha_bar(t).sqrt();
    let sqrt_one_minus_ab = (1.0 - schedule.alpha_bar(t)).sqrt();
    let sqrt_ab_prev = schedule.alpha_bar(t_prev).sqrt();
    let out = Zip::from(x_cur.as_array())
        .and(eps_hat.as_array())
        .and(z.as_array())
        .map_collect(|&x, &e, &n| {
            let x0_pred = (x - sqrt_one_minus_ab * e) / sqrt_ab;
            sqrt_ab_prev * x0_pred + direction * e + sigma * n
        });
    SampleTensor::new(out).map_err(|_| Error::NonFinite(format!("accelerated step at t={t}")))
}

/// Last update `x_{τ_1} → x_0`, deterministic.
pub fn final_step(
    x_tau1: &SampleTensor,
    spec: &TrajectorySpec,
    eps_hat: &SampleTensor,
    schedule: &NoiseSchedule,
) -> Result<SampleTensor> {
    ensure_same(x_tau1, eps_hat)?;
    let t = spec.step_at(1)?;
    schedule.check_step(t)?;
    let sqrt_ab = schedule.alpha_bar(t).sqrt();
    let sqrt_one_minus_ab = (1.0 - schedule.alpha_bar(t)).sqrt();
    let out = Zip::from(x_tau1.as_array())
        .and(eps_hat.as_array())
        .map_collect(|&x, &e| (x - sqrt_one_minus_ab * e) / sqrt_ab);
    SampleTensor::new(out).map_err(|_| Error::NonFinite("final step".into()))
}

/// Generate one sample of `shape = (channels, frames)`.
///
/// `x_T` is drawn with standard deviation `η`, then one `z` per accelerated
/// step, all from `rng` in that order.
pub fn sample<P, R>(
    predictor: &P,
    context: &ConditioningContext,
    shape: (usize, usize),
    spec: &TrajectorySpec,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<SampleTensor>
where
    P: EpsilonPredictor + ?Sized,
    R: Rng + ?Sized,
{
    let (channels, frames) = shape;
    if channels == 0 || frames == 0 {
        return Err(Error::invalid(format!("empty sample shape {shape:?}")));
    }
    context.ensure_frames(frames)?;
    spec.validate_for(schedule)?;

    let eta = spec.eta;
    let mut x = SampleTensor::standard_normal(channels, frames, rng);
    x.as_array_mut().mapv_inplace(|v| eta * v);

    for i in (2..=spec.len()).rev() {
        let t = spec.tau[i - 1];
        let eps_hat = predictor.predict(&x, t, context)?;
        let z = SampleTensor::standard_normal(channels, frames, rng);
        x = accelerated_step(&x, i, spec, &eps_hat, &z, schedule)?;
    }
    let eps_hat = predictor.predict(&x, spec.tau[0], context)?;
    final_step(&x, spec, &eps_hat, schedule)
}

/// Run `chains` independent samples; chain `k` uses `seeds.child(k)`.
///
/// Output is identical whether or not `parallel` is set.
#[allow(clippy::too_many_arguments)]
pub fn sample_chains<P>(
    predictor: &P,
    context: &ConditioningContext,
    shape: (usize, usize),
    spec: &TrajectorySpec,
    schedule: &NoiseSchedule,
    seeds: SeedStream,
    chains: usize,
    parallel: bool,
) -> Result<Vec<SampleTensor>>
where
    P: EpsilonPredictor + ?Sized,
{
    let run = |k: usize| {
        let mut rng = seeds.child(k as u64).rng();
        sample(predictor, context, shape, spec, schedule, &mut rng)
    };
    if parallel {
        (0..chains).into_par_iter().map(run).collect()
    } else {
        (0..chains).map(run).collect()
    }
}
