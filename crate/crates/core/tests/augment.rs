mod common;

use common::*;
use proptest::prelude::*;
use utmos::augment::*;
use utmos::seed::rng_for;

const RATE: f64 = 16_000.0;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn speed_change_follows_duration_law(f_t in 0.8f64..1.25, n in 2_000usize..24_000) {
        let wave = sine(300.0, n, RATE);
        let out = change_speed(&wave, f_t).unwrap();
        prop_assert!((out.len() as f64 - n as f64 / f_t).abs() <= PV_HOP as f64);
    }

    #[test]
    fn pitch_shift_keeps_length(cents in -300.0f64..300.0, n in 2_000usize..20_000) {
        let wave = sine(250.0, n, RATE);
        prop_assert_eq!(shift_pitch(&wave, cents).unwrap().len(), n);
    }

    #[test]
    fn sampled_parameters_stay_in_range(seed in 0u64..1000) {
        let cfg = AugmentConfig::default();
        let mut rng = rng_for(seed, "test");
        let (f_t, f_p) = sample_augmentation(&cfg, &mut rng);
        prop_assert!((0.9..=1.1).contains(&f_t));
        prop_assert!((-300.0..=300.0).contains(&f_p));
    }
}

#[test]
fn pitch_shift_moves_the_peak() {
    let wave = sine(440.0, 24_000, RATE);
    for cents in [-300.0, -100.0, 200.0, 300.0] {
        let out = shift_pitch(&wave, cents).unwrap();
        let want = 440.0 * 2f64.powf(cents / 1200.0);
        let got = peak_frequency(&out, RATE);
        assert!(
            (got - want).abs() / want < 0.01,
            "{cents} cents: {got} vs {want}"
        );
    }
}

#[test]
fn speed_change_keeps_pitch() {
    let wave = sine(500.0, 24_000, RATE);
    for f_t in [0.9, 1.1] {
        let got = peak_frequency(&change_speed(&wave, f_t).unwrap(), RATE);
        assert!((got - 500.0).abs() / 500.0 < 0.01, "f_t {f_t}: {got}");
    }
}

#[test]
fn zero_shift_and_unit_speed_are_near_identity() {
    let wave = sine(330.0, 8_000, RATE);
    assert_eq!(shift_pitch(&wave, 0.0).unwrap(), wave);
    assert_eq!(change_speed(&wave, 1.0).unwrap().len(), wave.len());
}

#[test]
fn augmentation_is_seed_deterministic() {
    let wave = sine(440.0, 16_000, RATE);
    let cfg = AugmentConfig::default();
    let run = |seed| augment(&wave, &cfg, &mut rng_for(seed, "aug")).unwrap();
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn invalid_arguments() {
    assert!(change_speed(&[0.0; 100], 0.0).is_err());
    assert!(shift_pitch(&[], 100.0).is_err());
    assert!(augment(
        &[0.0; 100],
        &AugmentConfig::disabled(),
        &mut rng_for(0, "x")
    )
    .is_err());
    assert!(AugmentConfig {
        f_t: 1.0,
        ..AugmentConfig::default()
    }
    .validate()
    .is_err());
}
