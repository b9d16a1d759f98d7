use diffmel_core::denoiser::{AnalyticDenoiser, CountingPredictor, EpsilonPredictor};
use diffmel_core::forward::q_sample;
use diffmel_core::sampler::{accelerated_step, ddpm_step, final_step, sample, sample_chains};
use diffmel_core::{
    ConditioningContext, GaussianDataSpec, NoiseSchedule, SampleTensor, SeedStream, TrajectorySpec,
};
use proptest::prelude::*;

// Frozen from a 40-digit mpmath substitution of the update formulas:
// T = 10, β ≡ 0.05, x = 0.8, ε̂ = −0.3, z = 1.7, η = 0.7.
const DDPM_T6: f64 = 1.096_577_982_978_832;
const ACCEL_TAU7_TO_TAU4: f64 = 1.126_740_591_965_218_8;
const FINAL_TAU1: f64 = 0.889_607_401_829_291_8;

fn scalar(v: f64) -> SampleTensor {
    SampleTensor::from_shape_vec(1, 1, vec![v]).unwrap()
}

fn value(t: &SampleTensor) -> f64 {
    t.as_array()[[0, 0]]
}

fn uniform_schedule() -> NoiseSchedule {
    NoiseSchedule::from_betas(&[0.05; 10]).unwrap()
}

#[test]
fn ddpm_step_direct_substitution() {
    let s = uniform_schedule();
    let out = ddpm_step(&scalar(0.8), 6, &scalar(-0.3), &scalar(1.7), &s, 0.7).unwrap();
    assert!((value(&out) - DDPM_T6).abs() < 1e-14, "{}", value(&out));
}

#[test]
fn accelerated_step_direct_substitution() {
    let s = uniform_schedule();
    let spec = TrajectorySpec::build(10, 3, 0.7).unwrap();
    assert_eq!(spec.tau(), &[1, 4, 7, 10]);
    let out = accelerated_step(&scalar(0.8), 3, &spec, &scalar(-0.3), &scalar(1.7), &s).unwrap();
    assert!(
        (value(&out) - ACCEL_TAU7_TO_TAU4).abs() < 1e-14,
        "{}",
        value(&out)
    );
}

#[test]
fn final_step_direct_substitution() {
    let s = uniform_schedule();
    let spec = TrajectorySpec::build(10, 3, 0.7).unwrap();
    let out = final_step(&scalar(0.8), &spec, &scalar(-0.3), &s).unwrap();
    assert!((value(&out) - FINAL_TAU1).abs() < 1e-14, "{}", value(&out));
}

proptest! {
    #[test]
    fn accelerated_matches_ddpm_on_consecutive_steps(
        seed in any::<u64>(),
        t in 2usize..=400,
        channels in 1usize..4,
        frames in 1usize..6,
    ) {
        let s = NoiseSchedule::default();
        let spec = TrajectorySpec::build(400, 1, 1.0).unwrap();
        let mut rng = SeedStream::new(seed).rng();
        let x = SampleTensor::standard_normal(channels, frames, &mut rng);
        let e = SampleTensor::standard_normal(channels, frames, &mut rng);
        let z = SampleTensor::standard_normal(channels, frames, &mut rng);
        let a = accelerated_step(&x, t, &spec, &e, &z, &s).unwrap();
        let b = ddpm_step(&x, t, &e, &z, &s, 1.0).unwrap();
        for (p, q) in a.as_array().iter().zip(b.as_array()) {
            prop_assert!((p - q).abs() <= 1e-10);
        }
    }

    #[test]
    fn final_step_inverts_q_sample(seed in any::<u64>(), gamma in 1usize..=400) {
        let s = NoiseSchedule::default();
        let spec = TrajectorySpec::build(400, gamma, 1.0).unwrap();
        let mut rng = SeedStream::new(seed).rng();
        let x0 = SampleTensor::standard_normal(3, 4, &mut rng);
        let eps = SampleTensor::standard_normal(3, 4, &mut rng);
        let xt = q_sample(&x0, spec.tau()[0], &eps, &s).unwrap();
        let back = final_step(&xt, &spec, &eps, &s).unwrap();
        for (p, q) in back.as_array().iter().zip(x0.as_array()) {
            prop_assert!((p - q).abs() <= 1e-6 * q.abs().max(1e-300) || (p - q).abs() < 1e-12);
        }
    }
}

fn oracle() -> AnalyticDenoiser {
    AnalyticDenoiser::new(
        GaussianDataSpec::scalar(1.0, 0.5).unwrap(),
        NoiseSchedule::default(),
    )
}

#[test]
fn full_trajectory_sample_equals_ancestral_loop() {
    let s = NoiseSchedule::default();
    let spec = TrajectorySpec::build(400, 1, 1.0).unwrap();
    let predictor = AnalyticDenoiser::new(
        GaussianDataSpec::new(vec![1.0, -0.5], vec![0.5, 2.0]).unwrap(),
        s.clone(),
    );
    let ctx = ConditioningContext::empty(5);
    for seed in 0..5 {
        let got = sample(
            &predictor,
            &ctx,
            (2, 5),
            &spec,
            &s,
            &mut SeedStream::new(seed).rng(),
        )
        .unwrap();

        let mut rng = SeedStream::new(seed).rng();
        let mut x = SampleTensor::standard_normal(2, 5, &mut rng);
        for t in (2..=400).rev() {
            let e = predictor.predict(&x, t, &ctx).unwrap();
            let z = SampleTensor::standard_normal(2, 5, &mut rng);
            x = ddpm_step(&x, t, &e, &z, &s, 1.0).unwrap();
        }
        let e = predictor.predict(&x, 1, &ctx).unwrap();
        x = ddpm_step(&x, 1, &e, &SampleTensor::zeros(2, 5), &s, 1.0).unwrap();

        for (p, q) in got.as_array().iter().zip(x.as_array()) {
            assert!((p - q).abs() < 1e-10, "seed {seed}: {p} vs {q}");
        }
    }
}

#[test]
fn zero_temperature_is_seed_independent() {
    let s = NoiseSchedule::default();
    let ctx = ConditioningContext::empty(3);
    for gamma in [1, 57] {
        let spec = TrajectorySpec::build(400, gamma, 0.0).unwrap();
        let a = sample(
            &oracle(),
            &ctx,
            (1, 3),
            &spec,
            &s,
            &mut SeedStream::new(1).rng(),
        )
        .unwrap();
        let b = sample(
            &oracle(),
            &ctx,
            (1, 3),
            &spec,
            &s,
            &mut SeedStream::new(2).rng(),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn predictor_call_counts_follow_trajectory_length() {
    let s = NoiseSchedule::default();
    let ctx = ConditioningContext::empty(2);
    for (gamma, calls) in [(1, 400), (7, 58), (21, 20), (57, 8)] {
        let spec = TrajectorySpec::build(400, gamma, 1.0).unwrap();
        let counter = CountingPredictor::new(oracle());
        sample(
            &counter,
            &ctx,
            (1, 2),
            &spec,
            &s,
            &mut SeedStream::new(0).rng(),
        )
        .unwrap();
        assert_eq!(counter.calls(), calls, "gamma {gamma}");
    }
}

#[test]
fn gaussian_oracle_recovers_data_moments() {
    let s = NoiseSchedule::default();
    let spec = TrajectorySpec::build(400, 1, 1.0).unwrap();
    let out = sample_chains(
        &oracle(),
        &ConditioningContext::empty(1),
        (1, 1),
        &spec,
        &s,
        SeedStream::new(4),
        10_000,
        true,
    )
    .unwrap();
    let v: Vec<f64> = out.iter().map(value).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    assert!((std - 0.5).abs() < 0.05 * 0.5, "std {std}");
}

// Closed-form Gaussian propagation of the exact-ε* sampler (independent
// double-precision script): N(1, 0.5²) data, default schedule, η = 1.
const CLOSED_FORM_MOMENTS: [(usize, f64, f64); 4] = [
    (1, 0.995_573_777_538_398_5, 0.494_089_574_034_347_5),
    (7, 0.956_041_484_864_905_3, 0.483_745_127_996_994_6),
    (21, 0.946_530_462_474_271_6, 0.456_297_610_294_026_5),
    (57, 0.950_790_246_011_419_1, 0.388_212_309_693_299_34),
];

#[test]
fn accelerated_sampler_matches_closed_form_moments() {
    let s = NoiseSchedule::default();
    for (gamma, mean_ref, std_ref) in CLOSED_FORM_MOMENTS {
        let spec = TrajectorySpec::build(400, gamma, 1.0).unwrap();
        let chains = if gamma == 1 { 20_000 } else { 200_000 };
        let out = sample_chains(
            &oracle(),
            &ConditioningContext::empty(1),
            (1, 1),
            &spec,
            &s,
            SeedStream::new(57),
            chains,
            true,
        )
        .unwrap();
        let v: Vec<f64> = out.iter().map(value).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // 5 standard errors
        let se_mean = std_ref / n.sqrt();
        let se_std = std_ref / (2.0 * n).sqrt();
        assert!(
            (mean - mean_ref).abs() < 5.0 * se_mean,
            "γ={gamma}: mean {mean} vs {mean_ref}"
        );
        assert!(
            (std - std_ref).abs() < 5.0 * se_std,
            "γ={gamma}: std {std} vs {std_ref}"
        );
    }
}
