#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::Rng;
use sfmim_core::rng::stream_rng;
use sfmim_core::FloatField;

/// Direct double sum `F(u, v) = sum x(r, c) exp(-2 pi i (u r / H + v c / W))`.
pub fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let phase = -TAU * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    re += x[r * w + c] * phase.cos();
                    im += x[r * w + c] * phase.sin();
                }
            }
            out[u * w + v] = (re, im);
        }
    }
    out
}

/// Inverse double sum with `1 / HW` normalization.
pub fn naive_idft(f: &[(f64, f64)], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); h * w];
    let inv = 1.0 / (h * w) as f64;
    for r in 0..h {
        for c in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for u in 0..h {
                for v in 0..w {
                    let phase = TAU * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    let (a, b) = f[u * w + v];
                    re += a * phase.cos() - b * phase.sin();
                    im += a * phase.sin() + b * phase.cos();
                }
            }
            out[r * w + c] = (re * inv, im * inv);
        }
    }
    out
}

pub fn random_field(h: usize, w: usize, seed: u64) -> FloatField {
    let mut rng = stream_rng(seed, 99);
    FloatField::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap()
}
