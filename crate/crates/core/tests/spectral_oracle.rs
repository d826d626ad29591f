mod common;

use common::{naive_dft, naive_idft, random_field};
use proptest::prelude::*;
use sfmim_core::spectral::{center_shift, dft2, idft2, idft2_with_residue, inverse_shift};

fn max_bin_error(h: usize, w: usize, seed: u64) -> f64 {
    let x = random_field(h, w, seed);
    let fast = dft2(&x);
    naive_dft(x.data(), h, w)
        .iter()
        .enumerate()
        .map(|(i, &(re, im))| (fast.real()[i] - re).hypot(fast.imag()[i] - im))
        .fold(0.0, f64::max)
}

#[test]
fn dft_matches_double_sum_on_small_shapes() {
    for h in 1..=8 {
        for w in 1..=8 {
            let err = max_bin_error(h, w, (h * 10 + w) as u64);
            assert!(err < 1e-9, "{h}x{w}: {err}");
        }
    }
}

#[test]
fn dft_matches_double_sum_on_odd_and_prime_shapes() {
    for (h, w) in [(13, 7), (9, 15), (17, 4), (12, 10)] {
        let err = max_bin_error(h, w, 3);
        assert!(err < 1e-9, "{h}x{w}: {err}");
    }
}

#[test]
fn inverse_matches_double_sum() {
    let (h, w) = (6, 10);
    let x = random_field(h, w, 8);
    let spec = dft2(&x);
    let bins: Vec<(f64, f64)> = spec.real().iter().zip(spec.imag()).map(|(&a, &b)| (a, b)).collect();
    let slow = naive_idft(&bins, h, w);
    let fast = idft2(&spec).unwrap();
    for (i, (re, im)) in slow.iter().enumerate() {
        assert!((fast.data()[i] - re).abs() < 1e-12);
        assert!(im.abs() < 1e-12);
    }
}

#[test]
fn parseval_on_random_fields() {
    for seed in 0..100 {
        let x = random_field(64, 64, seed);
        let spatial: f64 = x.data().iter().map(|v| v * v).sum();
        let spec = dft2(&x);
        let spectral: f64 = spec.real().iter().zip(spec.imag()).map(|(a, b)| a * a + b * b).sum::<f64>() / 4096.0;
        assert!((spatial - spectral).abs() / spatial < 1e-9, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_and_real_residue(h in 1usize..24, w in 1usize..24, seed in any::<u64>()) {
        let x = random_field(h, w, seed);
        let (back, residue) = idft2_with_residue(&dft2(&x)).unwrap();
        prop_assert!(residue < 1e-9);
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        let spec = dft2(&random_field(h, w, seed));
        let centered = center_shift(&spec).unwrap();
        prop_assert_eq!(centered.at_frequency(0, 0), spec.bin(0, 0));
        prop_assert_eq!(inverse_shift(&centered).unwrap(), spec);
    }
}
