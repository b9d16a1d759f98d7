//! The forward (noising) process and the ε-prediction L1 objective.

use ndarray::Zip;
use rand::Rng;

use crate::denoiser::EpsilonPredictor;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::{ConditioningContext, SampleTensor};

/// One training example: clean data with its frame-aligned context.
///
/// `epsilon` and `step` pin the otherwise random noise and diffusion step,
/// which makes the loss deterministic.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub x0: SampleTensor,
    pub context: ConditioningContext,
    pub epsilon: Option<SampleTensor>,
    pub step: Option<usize>,
}

impl TrainingBatch {
    pub fn new(x0: SampleTensor, context: ConditioningContext) -> Result<Self> {
        context.ensure_frames(x0.frames())?;
        Ok(Self {
            x0,
            context,
            epsilon: None,
            step: None,
        })
    }

    pub fn with_noise(mut self, epsilon: SampleTensor) -> Result<Self> {
        epsilon.ensure_shape(self.x0.shape())?;
        self.epsilon = Some(epsilon);
        Ok(self)
    }

    pub fn with_step(mut self, t: usize) -> Self {
        self.step = Some(t);
        self
    }
}

/// Noised input for one batch item: the drawn step, the noise and `x_t`.
#[derive(Debug, Clone)]
pub struct NoisedItem {
    pub t: usize,
    pub epsilon: SampleTensor,
    pub x_t: SampleTensor,
}

/// `x_t = sqrt(1 − β_t)·x_{t−1} + sqrt(β_t)·w` for a given `w`.
pub fn diffuse_step_with_noise(
    x_prev: &SampleTensor,
    t: usize,
    w: &SampleTensor,
    schedule: &NoiseSchedule,
) -> Result<SampleTensor> {
    schedule.check_step(t)?;
    w.ensure_shape(x_prev.shape())?;
    let keep = (1.0 - schedule.beta(t)).sqrt();
    let scale = schedule.beta(t).sqrt();
    let out = Zip::from(x_prev.as_array())
        .and(w.as_array())
        .map_collect(|&x, &n| keep * x + scale * n);
    SampleTensor::new(out)
}

/// One Markov transition `q(x_t | x_{t−1})`, noise drawn from `rng`.
pub fn diffuse_step<R: Rng + ?Sized>(
    x_prev: &SampleTensor,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<SampleTensor> {
    schedule.check_step(t)?;
    let (c, f) = x_prev.shape();
    let w = SampleTensor::standard_normal(c, f, rng);
    diffuse_step_with_noise(x_prev, t, &w, schedule)
}

/// Closed-form jump `sqrt(ᾱ_t)·x0 + sqrt(1 − ᾱ_t)·ε`.
pub fn q_sample(
    x0: &SampleTensor,
    t: usize,
    epsilon: &SampleTensor,
    schedule: &NoiseSchedule,
) -> Result<SampleTensor> {
    schedule.check_step(t)?;
    epsilon.ensure_shape(x0.shape())?;
    let (signal, noise) = q_sample_coefficients(schedule, t);
    let out = Zip::from(x0.as_array())
        .and(epsilon.as_array())
        .map_collect(|&x, &e| signal * x + noise * e);
    SampleTensor::new(out)
}

/// `(sqrt(ᾱ_t), sqrt(1 − ᾱ_t))`.
pub fn q_sample_coefficients(schedule: &NoiseSchedule, t: usize) -> (f64, f64) {
    let ab = schedule.alpha_bar(t);
    (ab.sqrt(), (1.0 - ab).sqrt())
}

/// Draw (or take from the batch) the step and noise, and noise `x0`.
pub fn noise_batch<R: Rng + ?Sized>(
    batch: &TrainingBatch,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<NoisedItem> {
    let t = match batch.step {
        Some(t) => {
            schedule.check_step(t)?;
            t
        }
        None => rng.random_range(1..=schedule.num_steps()),
    };
    let epsilon = match &batch.epsilon {
        Some(e) => e.clone(),
        None => {
            let (c, f) = batch.x0.shape();
            SampleTensor::standard_normal(c, f, rng)
        }
    };
    let x_t = q_sample(&batch.x0, t, &epsilon, schedule)?;
    Ok(NoisedItem { t, epsilon, x_t })
}

/// Mean absolute error between the true and predicted noise.
pub fn l1_loss<P, R>(
    predictor: &P,
    batch: &TrainingBatch,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64>
where
    P: EpsilonPredictor + ?Sized,
    R: Rng + ?Sized,
{
    let item = noise_batch(batch, schedule, rng)?;
    let eps_hat = predictor.predict(&item.x_t, item.t, &batch.context)?;
    l1_distance(&item.epsilon, &eps_hat)
}

pub fn l1_distance(epsilon: &SampleTensor, eps_hat: &SampleTensor) -> Result<f64> {
    eps_hat.ensure_shape(epsilon.shape())?;
    let total: f64 = Zip::from(epsilon.as_array())
        .and(eps_hat.as_array())
        .fold(0.0, |acc, &e, &p| acc + (e - p).abs());
    let loss = total / epsilon.as_array().len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("l1 loss".into()));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::ZeroPredictor;
    use crate::rng::SeedStream;
    use ndarray::array;

    struct Exact(SampleTensor);

    impl EpsilonPredictor for Exact {
        fn predict(
            &self,
            _: &SampleTensor,
            _: usize,
            _: &ConditioningContext,
        ) -> Result<SampleTensor> {
            Ok(self.0.clone())
        }
    }

    fn fixture() -> (SampleTensor, SampleTensor) {
        let x0 = SampleTensor::new(array![[0.5, -1.0, 2.0], [0.1, 0.0, -0.3]]).unwrap();
        let eps = SampleTensor::new(array![[1.0, -0.2, 0.3], [-1.5, 0.7, 0.0]]).unwrap();
        (x0, eps)
    }

    #[test]
    fn zero_noise_transition_keeps_scaled_input() {
        let (x0, _) = fixture();
        let s = NoiseSchedule::from_betas(&[1e-18]).unwrap();
        let w = SampleTensor::zeros(2, 3);
        assert_eq!(diffuse_step_with_noise(&x0, 1, &w, &s).unwrap(), x0);
    }

    #[test]
    fn transition_from_zero_is_scaled_noise() {
        let (_, w) = fixture();
        let s = NoiseSchedule::default();
        let out = diffuse_step_with_noise(&SampleTensor::zeros(2, 3), 17, &w, &s).unwrap();
        let expect = w.as_array().mapv(|v| s.beta(17).sqrt() * v);
        assert_eq!(out.as_array(), &expect);
    }

    #[test]
    fn diffuse_step_rejects_out_of_range() {
        let (x0, _) = fixture();
        let s = NoiseSchedule::default();
        let mut rng = SeedStream::new(1).rng();
        assert!(diffuse_step(&x0, 0, &s, &mut rng).is_err());
        assert!(diffuse_step(&x0, 401, &s, &mut rng).is_err());
    }

    #[test]
    fn q_sample_branches() {
        let (x0, eps) = fixture();
        let s = NoiseSchedule::default();
        let t = 123;
        let a = s.alpha_bar(t);
        let noiseless = q_sample(&x0, t, &SampleTensor::zeros(2, 3), &s).unwrap();
        assert_eq!(noiseless.as_array(), &x0.as_array().mapv(|v| a.sqrt() * v));
        let pure = q_sample(&SampleTensor::zeros(2, 3), t, &eps, &s).unwrap();
        assert_eq!(
            pure.as_array(),
            &eps.as_array().mapv(|v| (1.0 - a).sqrt() * v)
        );
        assert!(q_sample(&x0, t, &SampleTensor::zeros(3, 2), &s).is_err());
    }

    #[test]
    fn coefficient_energy_split() {
        let s = NoiseSchedule::default();
        for t in 1..=400 {
            let a = s.alpha_bar(t);
            assert_eq!(a + (1.0 - a), 1.0);
        }
    }

    #[test]
    fn loss_of_perfect_and_zero_predictors() {
        let (x0, eps) = fixture();
        let s = NoiseSchedule::default();
        let batch = TrainingBatch::new(x0, ConditioningContext::empty(3))
            .unwrap()
            .with_noise(eps.clone())
            .unwrap()
            .with_step(250);
        let mut rng = SeedStream::new(0).rng();
        assert_eq!(
            l1_loss(&Exact(eps.clone()), &batch, &s, &mut rng).unwrap(),
            0.0
        );
        let zero = l1_loss(&ZeroPredictor, &batch, &s, &mut rng).unwrap();
        assert!((zero - eps.mean_abs()).abs() < 1e-15);
    }

    #[test]
    fn loss_rejects_wrong_prediction_shape() {
        let (x0, eps) = fixture();
        let s = NoiseSchedule::default();
        let batch = TrainingBatch::new(x0, ConditioningContext::empty(3)).unwrap();
        let mut rng = SeedStream::new(0).rng();
        let bad = Exact(SampleTensor::zeros(1, 3));
        assert!(matches!(
            l1_loss(&bad, &batch, &s, &mut rng),
            Err(Error::ShapeMismatch { .. })
        ));
        let _ = eps;
    }

    #[test]
    fn batch_rejects_frame_mismatch() {
        let (x0, _) = fixture();
        assert!(TrainingBatch::new(x0, ConditioningContext::empty(4)).is_err());
    }
}
