use diffmel_core::denoiser::{AnalyticDenoiser, ZeroPredictor};
use diffmel_core::forward::{diffuse_step, l1_loss, q_sample, TrainingBatch};
use diffmel_core::{
    ConditioningContext, GaussianDataSpec, NoiseSchedule, SampleTensor, SeedStream,
};
use ndarray::Array2;
use proptest::prelude::*;

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard errors of the sample mean and sample variance of a Gaussian.
fn standard_errors(var: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    ((var / n).sqrt(), var * (2.0 / (n - 1.0)).sqrt())
}

#[test]
fn single_transition_moments() {
    let s = NoiseSchedule::default();
    let t = 300;
    let x_prev = 1.7;
    let n = 100_000;
    // One tensor of n frames: every frame is an independent draw.
    let x = SampleTensor::from_shape_vec(1, n, vec![x_prev; n]).unwrap();
    let mut rng = SeedStream::new(21).rng();
    let out = diffuse_step(&x, t, &s, &mut rng).unwrap();
    let draws: Vec<f64> = out.as_array().iter().copied().collect();
    let (mean, var) = moments(&draws);
    let want_mean = (1.0 - s.beta(t)).sqrt() * x_prev;
    let want_var = s.beta(t);
    let (se_mean, se_var) = standard_errors(want_var, n);
    assert!(
        (mean - want_mean).abs() < 3.0 * se_mean,
        "{mean} vs {want_mean}"
    );
    assert!((var - want_var).abs() < 3.0 * se_var, "{var} vs {want_var}");
}

#[test]
fn iterated_chain_matches_closed_form_marginal() {
    let s = NoiseSchedule::default();
    let t = 60;
    let n = 100_000;
    let x0 = 0.8;
    let mut x = SampleTensor::from_shape_vec(1, n, vec![x0; n]).unwrap();
    let mut rng = SeedStream::new(5).rng();
    for k in 1..=t {
        x = diffuse_step(&x, k, &s, &mut rng).unwrap();
    }
    let chain: Vec<f64> = x.as_array().iter().copied().collect();

    let eps = SampleTensor::standard_normal(1, n, &mut rng);
    let closed = q_sample(
        &SampleTensor::from_shape_vec(1, n, vec![x0; n]).unwrap(),
        t,
        &eps,
        &s,
    )
    .unwrap();
    let closed: Vec<f64> = closed.as_array().iter().copied().collect();

    let (m1, v1) = moments(&chain);
    let (m2, v2) = moments(&closed);
    let var = 1.0 - s.alpha_bar(t);
    let (se_mean, se_var) = standard_errors(var, n);
    // difference of two independent estimates: se grows by sqrt(2)
    let k = 3.0 * 2f64.sqrt();
    assert!((m1 - m2).abs() < k * se_mean, "means {m1} {m2}");
    assert!((v1 - v2).abs() < k * se_var, "vars {v1} {v2}");
    assert!((m1 - s.alpha_bar(t).sqrt() * x0).abs() < 3.0 * se_mean);
}

#[test]
fn seeded_transition_is_reproducible() {
    let s = NoiseSchedule::default();
    let x = SampleTensor::from_shape_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
    let a = diffuse_step(&x, 10, &s, &mut SeedStream::new(3).rng()).unwrap();
    let b = diffuse_step(&x, 10, &s, &mut SeedStream::new(3).rng()).unwrap();
    assert_eq!(a.as_array().as_slice(), b.as_array().as_slice());
}

#[test]
fn analytic_denoiser_beats_zero_predictor() {
    let s = NoiseSchedule::default();
    let spec = GaussianDataSpec::scalar(1.0, 0.5).unwrap();
    let oracle = AnalyticDenoiser::new(spec, s.clone());
    let seeds = SeedStream::new(77);
    let draws = 10_000;
    let (mut oracle_loss, mut zero_loss) = (0.0, 0.0);
    for k in 0..draws {
        let mut rng = seeds.child(k).rng();
        let x0 = SampleTensor::standard_normal(1, 1, &mut rng);
        let x0 = SampleTensor::new(x0.as_array().mapv(|z| 1.0 + 0.5 * z)).unwrap();
        let batch = TrainingBatch::new(x0, ConditioningContext::empty(1)).unwrap();
        // same t and ε for both predictors
        oracle_loss += l1_loss(&oracle, &batch, &s, &mut seeds.child(k).rng()).unwrap();
        zero_loss += l1_loss(&ZeroPredictor, &batch, &s, &mut seeds.child(k).rng()).unwrap();
    }
    assert!(oracle_loss < zero_loss, "{oracle_loss} vs {zero_loss}");
    assert!(oracle_loss / (draws as f64) < 0.9 * zero_loss / (draws as f64));
}

#[test]
fn l1_loss_is_reproducible_for_a_seed() {
    let s = NoiseSchedule::default();
    let oracle = AnalyticDenoiser::new(GaussianDataSpec::scalar(0.0, 1.0).unwrap(), s.clone());
    let x0 = SampleTensor::from_shape_vec(1, 4, vec![0.3, -0.1, 0.9, 2.0]).unwrap();
    let batch = TrainingBatch::new(x0, ConditioningContext::empty(4)).unwrap();
    let a = l1_loss(&oracle, &batch, &s, &mut SeedStream::new(9).rng()).unwrap();
    let b = l1_loss(&oracle, &batch, &s, &mut SeedStream::new(9).rng()).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l1_loss_invariant_to_frame_permutation(
        seed in any::<u64>(),
        frames in 2usize..12,
        t in 1usize..=400,
        rotate in 1usize..11,
    ) {
        let s = NoiseSchedule::default();
        let oracle = AnalyticDenoiser::conditional(
            vec![GaussianDataSpec::scalar(1.0, 0.5).unwrap(), GaussianDataSpec::scalar(-1.0, 0.3).unwrap()],
            s.clone(),
        ).unwrap();
        let mut rng = SeedStream::new(seed).rng();
        let x0 = SampleTensor::standard_normal(1, frames, &mut rng);
        let eps = SampleTensor::standard_normal(1, frames, &mut rng);
        let labels: Vec<usize> = (0..frames).map(|j| (j * 7 + seed as usize) % 2).collect();
        let ctx = ConditioningContext::one_hot(&labels, 2).unwrap();

        let perm: Vec<usize> = (0..frames).map(|j| (j + rotate) % frames).collect();
        let permute = |a: &Array2<f64>| Array2::from_shape_fn(a.dim(), |(c, j)| a[[c, perm[j]]]);

        let base = TrainingBatch::new(x0.clone(), ctx.clone()).unwrap()
            .with_noise(eps.clone()).unwrap().with_step(t);
        let shuffled = TrainingBatch::new(
            SampleTensor::new(permute(x0.as_array())).unwrap(),
            ConditioningContext::new(permute(ctx.features())).unwrap(),
        ).unwrap()
            .with_noise(SampleTensor::new(permute(eps.as_array())).unwrap()).unwrap()
            .with_step(t);
        let a = l1_loss(&oracle, &base, &s, &mut rng).unwrap();
        let b = l1_loss(&oracle, &shuffled, &s, &mut rng).unwrap();
        prop_assert!((a - b).abs() <= 1e-15 * a.max(1.0));
    }
}
