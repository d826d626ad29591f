//! Reconstruction objective: pixel L1 plus the focal frequency loss.
//!
//! Both terms are mean-reduced, `total = spatial + lambda * frequency`, and the
//! frequency term's gradient is pulled back to pixels through the adjoint of
//! the forward DFT. The focal weight map is a constant during differentiation.

use alloc::vec::Vec;

use crate::fft::Complex;
use crate::field::FloatField;
use crate::math;
use crate::spectral::{dft2, dft2_adjoint, Layout, Spectrum};
use crate::{Error, Result};

/// Per-component loss bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub spatial: f64,
    pub frequency: f64,
    pub lambda: f64,
}

impl LossValue {
    pub fn zero(lambda: f64) -> Self {
        Self {
            total: 0.0,
            spatial: 0.0,
            frequency: 0.0,
            lambda,
        }
    }

    /// Component-wise mean of several values sharing one `lambda`.
    pub fn mean(values: &[LossValue]) -> Self {
        let n = values.len().max(1) as f64;
        let lambda = values.first().map_or(0.0, |v| v.lambda);
        let spatial = values.iter().map(|v| v.spatial).sum::<f64>() / n;
        let frequency = values.iter().map(|v| v.frequency).sum::<f64>() / n;
        Self {
            total: spatial + lambda * frequency,
            spatial,
            frequency,
            lambda,
        }
    }
}

/// Settings for [`total_loss_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub alpha: f64,
    /// Restrict the L1 term to spatially masked pixels.
    pub l1_masked_only: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            alpha: 1.0,
            l1_masked_only: false,
        }
    }
}

/// Mean absolute error and its gradient `sign(u_rec - u) / (H W)`, `sign(0) = 0`.
pub fn l1_spatial(u_rec: &FloatField, u: &FloatField) -> Result<(f64, FloatField)> {
    l1_spatial_masked(u_rec, u, None)
}

/// L1 over the pixels where `mask` is true (all pixels when `None`).
/// An empty selection has loss and gradient zero.
pub fn l1_spatial_masked(
    u_rec: &FloatField,
    u: &FloatField,
    mask: Option<&[bool]>,
) -> Result<(f64, FloatField)> {
    u.check_same_shape(u_rec)?;
    if let Some(m) = mask {
        if m.len() != u.len() {
            return Err(Error::GeometryMismatch("loss mask length".into()));
        }
    }
    let selected = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..u.len()).filter(|&i| selected(i)).count();
    let (h, w) = u.shape();
    if count == 0 {
        return Ok((0.0, FloatField::from_raw(h, w, alloc::vec![0.0; h * w])));
    }
    let inv = 1.0 / count as f64;
    let mut sum = 0.0;
    let grad = u_rec
        .data()
        .iter()
        .zip(u.data())
        .enumerate()
        .map(|(i, (&a, &b))| {
            if !selected(i) {
                return 0.0;
            }
            let d = a - b;
            sum += d.abs();
            if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            }
        })
        .collect();
    Ok((sum * inv, FloatField::from_raw(h, w, grad)))
}

/// `|F - F_rec|^alpha` per bin, divided by its maximum. An all-zero map stays zero.
pub fn focal_weight_map(f_rec: &Spectrum, f: &Spectrum, alpha: f64) -> Result<FloatField> {
    f.check_same_shape(f_rec)?;
    if alpha <= 0.0 {
        return Err(Error::InvalidConfig("focal alpha must be positive".into()));
    }
    let mut weights: Vec<f64> = f_rec
        .real()
        .iter()
        .zip(f_rec.imag())
        .zip(f.real().iter().zip(f.imag()))
        .map(|((&rr, &ri), (&fr, &fi))| {
            let (dr, di) = (rr - fr, ri - fi);
            let modulus = math::sqrt(dr * dr + di * di);
            if alpha == 1.0 {
                modulus
            } else {
                math::powf(modulus, alpha)
            }
        })
        .collect();
    let max = weights.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        for w in &mut weights {
            *w /= max;
        }
    }
    Ok(FloatField::from_raw(f.height(), f.width(), weights))
}

/// Focal frequency loss `(1 / HW) sum w |F_rec - F|^2` and its gradient with
/// respect to the real and imaginary parts of every `F_rec` bin.
pub fn focal_freq_loss(f_rec: &Spectrum, f: &Spectrum, alpha: f64) -> Result<(f64, Spectrum)> {
    let weights = focal_weight_map(f_rec, f, alpha)?;
    let (h, w) = f.shape();
    let inv = 1.0 / (h * w) as f64;
    let n = h * w;
    let mut loss = 0.0;
    let mut g_re = Vec::with_capacity(n);
    let mut g_im = Vec::with_capacity(n);
    for i in 0..n {
        let dr = f_rec.real()[i] - f.real()[i];
        let di = f_rec.imag()[i] - f.imag()[i];
        let wt = weights.data()[i];
        loss += wt * (dr * dr + di * di);
        g_re.push(2.0 * inv * wt * dr);
        g_im.push(2.0 * inv * wt * di);
    }
    let grad = Spectrum::new(h, w, g_re, g_im, f_rec.layout())?;
    Ok((loss * inv, grad))
}

/// Pulls a spectrum-domain gradient back to the pixels of the image whose
/// [`dft2`] produced the spectrum.
pub fn pullback_through_dft(grad: &Spectrum) -> Result<FloatField> {
    if grad.layout() != Layout::Natural {
        return Err(Error::LayoutMismatch { expected: "natural" });
    }
    let (h, w) = grad.shape();
    let buf: Vec<Complex> = grad.to_complex();
    Ok(FloatField::from_raw(h, w, dft2_adjoint(h, w, &buf)))
}

/// `L1 + lambda * focal frequency` with the gradient with respect to `u_rec`.
pub fn total_loss(
    u_rec: &FloatField,
    u: &FloatField,
    lambda: f64,
    alpha: f64,
) -> Result<(LossValue, FloatField)> {
    total_loss_with(
        u_rec,
        u,
        &LossConfig {
            lambda,
            alpha,
            l1_masked_only: false,
        },
        None,
    )
}

/// [`total_loss`] with an optional per-pixel mask for the L1 term, used when
/// `cfg.l1_masked_only` is set.
pub fn total_loss_with(
    u_rec: &FloatField,
    u: &FloatField,
    cfg: &LossConfig,
    masked_pixels: Option<&[bool]>,
) -> Result<(LossValue, FloatField)> {
    if cfg.lambda < 0.0 {
        return Err(Error::InvalidConfig("lambda must be non-negative".into()));
    }
    let l1_mask = if cfg.l1_masked_only {
        masked_pixels
    } else {
        None
    };
    let (spatial, mut grad) = l1_spatial_masked(u_rec, u, l1_mask)?;
    let f = dft2(u);
    let f_rec = dft2(u_rec);
    let (frequency, g_spec) = focal_freq_loss(&f_rec, &f, cfg.alpha)?;
    if cfg.lambda > 0.0 {
        let g_pix = pullback_through_dft(&g_spec)?;
        for (g, p) in grad.data_mut().iter_mut().zip(g_pix.data()) {
            *g += cfg.lambda * p;
        }
    }
    Ok((
        LossValue {
            total: spatial + cfg.lambda * frequency,
            spatial,
            frequency,
            lambda: cfg.lambda,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_field(h: usize, w: usize, r: &mut impl Rng) -> FloatField {
        FloatField::from_fn(h, w, |_, _| r.gen()).unwrap()
    }

    #[test]
    fn l1_identity_and_offset() {
        let mut r = rng(1);
        let u = random_field(4, 4, &mut r);
        let (l, g) = l1_spatial(&u, &u).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
        let shifted = FloatField::new(4, 4, u.data().iter().map(|v| v + 0.5).collect()).unwrap();
        let (l, _) = l1_spatial(&shifted, &u).unwrap();
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let a = FloatField::zeros(2, 2).unwrap();
        let b = FloatField::zeros(2, 3).unwrap();
        assert!(l1_spatial(&a, &b).is_err());
        assert!(total_loss(&a, &b, 0.4, 1.0).is_err());
        assert!(focal_freq_loss(&dft2(&a), &dft2(&b), 1.0).is_err());
    }

    #[test]
    fn weight_map_cases() {
        let mut r = rng(2);
        let f = dft2(&random_field(4, 4, &mut r));
        let w = focal_weight_map(&f, &f, 1.0).unwrap();
        assert!(w.data().iter().all(|&x| x == 0.0));

        let mut re = f.real().to_vec();
        re[5] += 3.0;
        let g = Spectrum::new(4, 4, re, f.imag().to_vec(), Layout::Natural).unwrap();
        let w = focal_weight_map(&g, &f, 1.0).unwrap();
        for (i, &x) in w.data().iter().enumerate() {
            assert_eq!(x, if i == 5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn weight_map_two_bins_alpha_one() {
        let zero = Spectrum::zeros(1, 2).unwrap();
        let g = Spectrum::new(1, 2, vec![2.0, 0.0], vec![0.0, 4.0], Layout::Natural).unwrap();
        let w = focal_weight_map(&g, &zero, 1.0).unwrap();
        assert_eq!(w.data(), &[0.5, 1.0]);
    }

    #[test]
    fn single_bin_closed_form() {
        let f = Spectrum::zeros(3, 4).unwrap();
        let (d_re, d_im) = (1.2, -0.5);
        let mut re = vec![0.0; 12];
        let mut im = vec![0.0; 12];
        re[7] = d_re;
        im[7] = d_im;
        let g = Spectrum::new(3, 4, re, im, Layout::Natural).unwrap();
        let (l, _) = focal_freq_loss(&g, &f, 1.0).unwrap();
        // Brute force over every bin: weight 1 at the only differing bin, 0 elsewhere.
        let mut brute = 0.0;
        for i in 0..12 {
            let (a, b) = (g.real()[i] - f.real()[i], g.imag()[i] - f.imag()[i]);
            let w = if i == 7 { 1.0 } else { 0.0 };
            brute += w * (a * a + b * b);
        }
        brute /= 12.0;
        let d2 = d_re * d_re + d_im * d_im;
        assert!((l - brute).abs() < 1e-15);
        assert!((l - d2 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_reduces_to_l1() {
        let mut r = rng(3);
        let a = random_field(6, 6, &mut r);
        let b = random_field(6, 6, &mut r);
        let (v, g) = total_loss(&a, &b, 0.0, 1.0).unwrap();
        let (l, gl) = l1_spatial(&a, &b).unwrap();
        assert_eq!(v.total, l);
        assert_eq!(v.spatial, l);
        assert_eq!(g, gl);
    }

    #[test]
    fn perfect_reconstruction() {
        let mut r = rng(4);
        let a = random_field(6, 6, &mut r);
        let (v, _) = total_loss(&a, &a, 0.4, 1.0).unwrap();
        assert_eq!(v, LossValue::zero(0.4));
    }

    #[test]
    fn masked_l1_only_counts_masked_pixels() {
        let a = FloatField::new(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = FloatField::zeros(1, 4).unwrap();
        let mask = [false, true, true, true];
        let (l, g) = l1_spatial_masked(&a, &b, Some(&mask)).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
        let mask = [true, true, false, false];
        let (l, g) = l1_spatial_masked(&a, &b, Some(&mask)).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g.data()[0], 0.5);
    }
}
