mod common;

use common::{naive_dft, random_field};
use sfmim_core::losses::{focal_freq_loss, focal_weight_map, l1_spatial, pullback_through_dft, total_loss};
use sfmim_core::spectral::{dft2, Layout};
use sfmim_core::{FloatField, Spectrum};

/// Focal loss from the double-sum spectra and an explicitly built weight map.
fn brute_focal(rec: &FloatField, target: &FloatField, alpha: f64) -> f64 {
    let (h, w) = rec.shape();
    let a = naive_dft(rec.data(), h, w);
    let b = naive_dft(target.data(), h, w);
    let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1)).collect();
    let max = d.iter().map(|m| m.powf(alpha)).fold(0.0, f64::max);
    d.iter().map(|m| m.powf(alpha) / max * m * m).sum::<f64>() / (h * w) as f64
}

#[test]
fn focal_loss_matches_brute_force() {
    for (alpha, seed) in [(1.0, 1), (0.5, 2), (2.0, 3)] {
        let rec = random_field(9, 12, seed);
        let target = random_field(9, 12, seed + 10);
        let (loss, _) = focal_freq_loss(&dft2(&rec), &dft2(&target), alpha).unwrap();
        let brute = brute_focal(&rec, &target, alpha);
        assert!((loss - brute).abs() < 1e-9 * brute, "alpha {alpha}: {loss} vs {brute}");
    }
}

#[test]
fn total_is_spatial_plus_lambda_frequency() {
    let rec = random_field(8, 8, 4);
    let target = random_field(8, 8, 5);
    let (v, _) = total_loss(&rec, &target, 0.4, 1.0).unwrap();
    let (l1, _) = l1_spatial(&rec, &target).unwrap();
    assert_eq!(v.spatial, l1);
    assert!((v.total - (l1 + 0.4 * brute_focal(&rec, &target, 1.0))).abs() < 1e-9);
}

#[test]
fn pullback_is_the_adjoint_of_the_transform() {
    // <g, dft(x)> is linear in x, so its pixel gradient is exactly the pullback.
    let (h, w) = (6, 5);
    let g = Spectrum::new(
        h,
        w,
        random_field(h, w, 6).into_data(),
        random_field(h, w, 7).into_data(),
        Layout::Natural,
    )
    .unwrap();
    let pixel = pullback_through_dft(&g).unwrap();
    let functional = |x: &FloatField| {
        let f = dft2(x);
        (0..h * w).map(|i| g.real()[i] * f.real()[i] + g.imag()[i] * f.imag()[i]).sum::<f64>()
    };
    let x = random_field(h, w, 8);
    let base = functional(&x);
    for i in 0..h * w {
        let mut data = x.data().to_vec();
        data[i] += 1.0;
        let bumped = functional(&FloatField::new(h, w, data).unwrap());
        assert!((bumped - base - pixel.data()[i]).abs() < 1e-9, "pixel {i}");
    }
}

#[test]
fn detached_focal_gradient_matches_differences() {
    let rec = random_field(8, 8, 9);
    let target = random_field(8, 8, 10);
    let weights = focal_weight_map(&dft2(&rec), &dft2(&target), 1.0).unwrap();
    let fixed = |x: &FloatField| {
        let (a, b) = (dft2(x), dft2(&target));
        (0..64)
            .map(|i| {
                let (dr, di) = (a.real()[i] - b.real()[i], a.imag()[i] - b.imag()[i]);
                weights.data()[i] * (dr * dr + di * di)
            })
            .sum::<f64>()
            / 64.0
    };
    let (_, g_spec) = focal_freq_loss(&dft2(&rec), &dft2(&target), 1.0).unwrap();
    let grad = pullback_through_dft(&g_spec).unwrap();
    let eps = 1e-5;
    for i in 0..64 {
        let shifted = |d: f64| {
            let mut data = rec.data().to_vec();
            data[i] += d;
            fixed(&FloatField::new(8, 8, data).unwrap())
        };
        let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let a = grad.data()[i];
        assert!((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6) < 1e-6, "pixel {i}");
    }
}
