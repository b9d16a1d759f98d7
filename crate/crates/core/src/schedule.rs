//! Variance schedules.
//!
//! Indexing: steps run `1..=T`; index 0 denotes clean data, with
//! `alpha_bar(0) == 1` and `beta(0) == 0`. All schedule arithmetic is `f64`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_NUM_STEPS: usize = 400;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Radicands in `[-RADICAND_CLAMP, 0)` are treated as rounding noise.
pub const RADICAND_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    /// Betas loaded verbatim from a table.
    Custom,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Custom => "custom",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "custom" => Ok(ScheduleKind::Custom),
            other => Err(Error::Parse(format!("unknown schedule kind `{other}`"))),
        }
    }
}

/// β, α and ᾱ tables for steps `1..=T`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    beta_start: f64,
    beta_end: f64,
    // All three tables carry a leading entry for t = 0.
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Betas linearly interpolated from `beta_start` at `t = 1` to `beta_end` at `t = T`.
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0) {
            return Err(Error::invalid(format!(
                "beta_start must be > 0, got {beta_start}"
            )));
        }
        if !(beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "beta_end must be < 1, got {beta_end}"
            )));
        }
        if beta_start > beta_end {
            return Err(Error::invalid(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let betas = (0..num_steps)
            .map(|i| {
                if num_steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (num_steps - 1) as f64
                }
            })
            .collect::<Vec<_>>();
        let mut schedule = Self::from_betas(&betas)?;
        schedule.kind = ScheduleKind::Linear;
        schedule.beta_start = beta_start;
        schedule.beta_end = beta_end;
        Ok(schedule)
    }

    /// Build from an explicit table `betas[0] = β_1, …, betas[T-1] = β_T`.
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b < 1.0))
        {
            return Err(Error::invalid(format!(
                "beta at t={} is {b}, must be in (0, 1)",
                i + 1
            )));
        }
        let mut all_betas = Vec::with_capacity(betas.len() + 1);
        all_betas.push(0.0);
        all_betas.extend_from_slice(betas);
        let alphas: Vec<f64> = all_betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        alpha_bars.push(1.0);
        for a in &alphas[1..] {
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * a);
        }
        Ok(Self {
            kind: ScheduleKind::Custom,
            beta_start: betas[0],
            beta_end: betas[betas.len() - 1],
            betas: all_betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    /// `β_t`; `β_0 = 0`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    /// `ᾱ_t`; `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// β_1..β_T.
    pub fn betas(&self) -> &[f64] {
        &self.betas[1..]
    }

    /// ᾱ_0..ᾱ_T, including the leading 1.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_steps() {
            return Err(Error::StepOutOfRange {
                t,
                max: self.num_steps(),
            });
        }
        Ok(())
    }

    /// `η · sqrt((1 − ᾱ_{t_prev}) / (1 − ᾱ_t) · β_t)`.
    ///
    /// With `t_prev = t − 1` this is the ancestral-sampling noise scale; with
    /// `t_prev` the previous trajectory index it is the accelerated one.
    pub fn sigma(&self, t_prev: usize, t: usize, eta: f64) -> Result<f64> {
        self.check_step(t)?;
        if t_prev >= t {
            return Err(Error::invalid(format!("t_prev {t_prev} must be < t {t}")));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!(
                "eta must be finite and >= 0, got {eta}"
            )));
        }
        let ratio = (1.0 - self.alpha_bars[t_prev]) / (1.0 - self.alpha_bars[t]);
        Ok(eta * (ratio * self.betas[t]).sqrt())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_NUM_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }
}
