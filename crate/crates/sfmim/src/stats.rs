//! Sampler frequency statistics and the one-sided sign test.

use sfmim_core::rng::{derive_seed, stream_rng};
use sfmim_core::sampling::{organ_weights, sample_index, DatasetManifest};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::Result;

const SAMPLER_STREAM: u64 = 0x5a3b;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerStats {
    pub organs: Vec<String>,
    pub counts: Vec<usize>,
    pub expected: Vec<f64>,
    pub observed: Vec<usize>,
    pub draws: usize,
    pub chi_square: f64,
    pub df: usize,
    /// Upper-tail probability of `chi_square`; 1 when `df` is 0.
    pub p_value: f64,
}

impl SamplerStats {
    pub fn empirical(&self, organ: usize) -> f64 {
        self.observed[organ] as f64 / self.draws as f64
    }

    /// Whether each empirical frequency lies within `k` binomial standard
    /// deviations of its expected value.
    pub fn within_sigma(&self, k: f64) -> bool {
        let n = self.draws as f64;
        self.expected.iter().enumerate().all(|(o, &p)| {
            let sd = (p * (1.0 - p) / n).sqrt();
            (self.empirical(o) - p).abs() <= k * sd
        })
    }
}

/// Draws `draws` organ-balanced samples under `seed` and tabulates them.
pub fn sampler_stats(manifest: &DatasetManifest, draws: usize, seed: u64) -> Result<SamplerStats> {
    let weights = organ_weights(manifest)?;
    let k = manifest.organs().len();
    let mut observed = vec![0usize; k];
    let mut rng = stream_rng(derive_seed(seed, SAMPLER_STREAM), 0);
    for _ in 0..draws {
        let (o, _) = sample_index(&mut rng, manifest, &weights);
        observed[o] += 1;
    }
    let expected = weights.weights().to_vec();
    let chi_square = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &p)| {
            let e = p * draws as f64;
            (o as f64 - e) * (o as f64 - e) / e
        })
        .sum::<f64>();
    let df = k - 1;
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).map(|d| d.sf(chi_square)).unwrap_or(f64::NAN)
    };
    Ok(SamplerStats {
        organs: manifest.organs().iter().map(|o| o.name.clone()).collect(),
        counts: manifest.counts(),
        expected,
        observed,
        draws,
        chi_square,
        df,
        p_value,
    })
}

/// One-sided sign test of "first >= second" over paired values. Ties are
/// dropped; returns `(wins, losses, p)` with `p = P(Bin(wins + losses, 1/2) >= wins)`,
/// which is 1 when every pair ties.
pub fn sign_test(first: &[f64], second: &[f64]) -> (usize, usize, f64) {
    let wins = first.iter().zip(second).filter(|(a, b)| a > b).count();
    let losses = first.iter().zip(second).filter(|(a, b)| a < b).count();
    let n = wins + losses;
    if n == 0 {
        return (0, 0, 1.0);
    }
    let bin = Binomial::new(0.5, n as u64).expect("valid binomial");
    let p = if wins == 0 { 1.0 } else { bin.sf(wins as u64 - 1) };
    (wins, losses, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sfmim_core::sampling::{ImageEntry, Organ};

    fn manifest(counts: &[usize]) -> DatasetManifest {
        let organs = counts
            .iter()
            .enumerate()
            .map(|(o, &n)| Organ {
                name: format!("o{o}"),
                images: (0..n)
                    .map(|i| ImageEntry {
                        path: format!("o{o}/{i}.png"),
                        label: None,
                    })
                    .collect(),
            })
            .collect();
        DatasetManifest::new(organs).unwrap()
    }

    #[test]
    fn single_organ_is_degenerate() {
        let s = sampler_stats(&manifest(&[5]), 100, 0).unwrap();
        assert_eq!(s.empirical(0), 1.0);
        assert_eq!(s.p_value, 1.0);
    }

    #[test]
    fn two_organs_follow_inverse_sqrt() {
        let s = sampler_stats(&manifest(&[100, 400]), 30_000, 1).unwrap();
        assert!((s.expected[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(s.within_sigma(3.0), "{:?}", s.observed);
        assert!(s.p_value > 0.001);
        let u = sampler_stats(&manifest(&[7, 7, 7]), 300, 1).unwrap();
        assert!(u.expected.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn sign_test_matches_binomial_tail() {
        let (w, l, p) = sign_test(&[2.0; 5], &[1.0; 5]);
        assert_eq!((w, l), (5, 0));
        assert!((p - 1.0 / 32.0).abs() < 1e-12);
        let (w, l, p) = sign_test(&[2.0, 2.0, 2.0, 2.0, 1.0], &[1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!((w, l), (4, 0));
        assert!((p - 1.0 / 16.0).abs() < 1e-12);
        let (_, _, p) = sign_test(&[2.0, 2.0, 2.0, 2.0, 0.0], &[1.0; 5]);
        assert!((p - 6.0 / 32.0).abs() < 1e-12);
        assert_eq!(sign_test(&[1.0; 3], &[1.0; 3]).2, 1.0);
    }
}
