use diffmel_core::schedule::NoiseSchedule;
use proptest::prelude::*;

// Values frozen from a 40-digit mpmath script that rebuilds the linear
// betas and their running product independently of this crate.
const ALPHA_BAR_400: f64 = 0.017_472_873_372_638_71;
const SIGMA_399_400: f64 = 0.141_395_690_832_884_14;

fn naive_betas(t: usize, start: f64, end: f64) -> Vec<f64> {
    let mut betas = Vec::new();
    for i in 0..t {
        betas.push(start + (end - start) * (i as f64) / ((t - 1) as f64));
    }
    betas
}

#[test]
fn alpha_bar_at_t400() {
    let s = NoiseSchedule::default();
    assert!((s.alpha_bar(400) - 0.0175).abs() < 1e-3);
    assert!((s.alpha_bar(400) - ALPHA_BAR_400).abs() < 1e-14);
}

#[test]
fn alpha_bar_matches_left_fold_within_4_ulp() {
    let s = NoiseSchedule::default();
    let betas = naive_betas(400, 1e-4, 0.02);
    let mut acc = 1.0f64;
    for (t, b) in betas.iter().enumerate() {
        acc *= 1.0 - b;
        let lib = s.alpha_bar(t + 1);
        let ulp = acc * f64::EPSILON;
        assert!(
            (lib - acc).abs() <= 4.0 * ulp,
            "t={} lib={lib} naive={acc}",
            t + 1
        );
    }
}

#[test]
fn sigma_direct_substitution() {
    let s = NoiseSchedule::default();
    let got = s.sigma(399, 400, 1.0).unwrap();
    assert!((got - SIGMA_399_400).abs() < 1e-14, "{got}");
}

proptest! {
    #[test]
    fn sigma_is_linear_in_eta(t in 2usize..=400, back in 1usize..50, eta in 0.0f64..4.0) {
        let s = NoiseSchedule::default();
        let t_prev = t.saturating_sub(back);
        let one = s.sigma(t_prev, t, eta).unwrap();
        let two = s.sigma(t_prev, t, 2.0 * eta).unwrap();
        prop_assert_eq!(two, 2.0 * one);
        prop_assert!(one >= 0.0);
    }

    #[test]
    fn linear_schedules_satisfy_invariants(
        t in 1usize..600,
        start in 1e-6f64..0.05,
        span in 0.0f64..0.3,
    ) {
        let s = NoiseSchedule::linear(t, start, start + span).unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        for k in 1..=t {
            prop_assert!(s.beta(k) > 0.0 && s.beta(k) < 1.0);
            prop_assert_eq!(s.alpha(k), 1.0 - s.beta(k));
            prop_assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
        }
    }
}
