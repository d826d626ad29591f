//! 2D discrete Fourier analysis and radial band-stop masks.
//!
//! The forward transform is unnormalized with kernel
//! `exp(-i 2 pi (u x / H + v y / W))`; the inverse carries `1 / (H W)`.
//! Masks are defined on the centered spectrum (DC at `(H / 2, W / 2)`, floor
//! division) and are symmetric under `(u, v) -> (-u, -v)`, so masking a real
//! image's spectrum and inverting gives back a real image.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::fft::{fft2, Complex, Direction};
use crate::field::FloatField;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// DC at index `(0, 0)`.
    Natural,
    /// DC at index `(H / 2, W / 2)`.
    Centered,
}

/// Complex spectrum stored as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    real: Vec<f64>,
    imag: Vec<f64>,
    layout: Layout,
}

impl Spectrum {
    pub fn new(
        height: usize,
        width: usize,
        real: Vec<f64>,
        imag: Vec<f64>,
        layout: Layout,
    ) -> Result<Self> {
        if height == 0 || width == 0 || real.len() != height * width || imag.len() != real.len() {
            return Err(Error::InvalidDimensions { height, width });
        }
        Ok(Self {
            height,
            width,
            real,
            imag,
            layout,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        let n = height * width;
        Self::new(height, width, vec![0.0; n], vec![0.0; n], Layout::Natural)
    }

    fn from_complex(height: usize, width: usize, buf: &[Complex], layout: Layout) -> Self {
        Self {
            height,
            width,
            real: buf.iter().map(|c| c.re).collect(),
            imag: buf.iter().map(|c| c.im).collect(),
            layout,
        }
    }

    pub(crate) fn to_complex(&self) -> Vec<Complex> {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(&re, &im)| Complex::new(re, im))
            .collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn real(&self) -> &[f64] {
        &self.real
    }

    pub fn imag(&self) -> &[f64] {
        &self.imag
    }

    /// `(re, im)` of bin `(u, v)` in this spectrum's own layout.
    pub fn bin(&self, u: usize, v: usize) -> (f64, f64) {
        let i = u * self.width + v;
        (self.real[i], self.imag[i])
    }

    /// `(re, im)` at signed frequency `(u, v)` relative to DC, whatever the layout.
    pub fn at_frequency(&self, u: isize, v: isize) -> (f64, f64) {
        let (ou, ov) = match self.layout {
            Layout::Natural => (0, 0),
            Layout::Centered => (self.height / 2, self.width / 2),
        };
        let r = (u + ou as isize).rem_euclid(self.height as isize) as usize;
        let c = (v + ov as isize).rem_euclid(self.width as isize) as usize;
        self.bin(r, c)
    }

    pub(crate) fn check_same_shape(&self, other: &Spectrum) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected_h: self.height,
                expected_w: self.width,
                got_h: other.height,
                got_w: other.width,
            });
        }
        Ok(())
    }
}

/// Forward 2D DFT, natural layout, no normalization.
pub fn dft2(field: &FloatField) -> Spectrum {
    let (h, w) = field.shape();
    let mut buf: Vec<Complex> = field.data().iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft2(h, w, &mut buf, Direction::Forward);
    Spectrum::from_complex(h, w, &buf, Layout::Natural)
}

/// Inverse 2D DFT with `1 / (H W)` normalization, keeping the real part.
pub fn idft2(spec: &Spectrum) -> Result<FloatField> {
    idft2_with_residue(spec).map(|(f, _)| f)
}

/// Like [`idft2`], also reporting the largest discarded imaginary magnitude.
pub fn idft2_with_residue(spec: &Spectrum) -> Result<(FloatField, f64)> {
    if spec.layout != Layout::Natural {
        return Err(Error::LayoutMismatch { expected: "natural" });
    }
    let (h, w) = spec.shape();
    let mut buf = spec.to_complex();
    fft2(h, w, &mut buf, Direction::Inverse);
    let scale = 1.0 / (h * w) as f64;
    let mut residue = 0.0f64;
    let data = buf
        .iter()
        .map(|c| {
            residue = residue.max((c.im * scale).abs());
            c.re * scale
        })
        .collect();
    Ok((FloatField::from_raw(h, w, data), residue))
}

/// Unnormalized inverse transform of an arbitrary complex spectrum, real part.
/// This is the adjoint of [`dft2`] restricted to real outputs.
pub(crate) fn dft2_adjoint(height: usize, width: usize, grad: &[Complex]) -> Vec<f64> {
    let mut buf = grad.to_vec();
    fft2(height, width, &mut buf, Direction::Inverse);
    buf.iter().map(|c| c.re).collect()
}

/// Per-bin modulus.
pub fn amplitude(spec: &Spectrum) -> FloatField {
    let data = spec
        .real
        .iter()
        .zip(&spec.imag)
        .map(|(&re, &im)| math::sqrt(re * re + im * im))
        .collect();
    FloatField::from_raw(spec.height, spec.width, data)
}

/// Per-bin angle in `(-pi, pi]`; empty bins report 0.
pub fn phase(spec: &Spectrum) -> FloatField {
    let data = spec
        .real
        .iter()
        .zip(&spec.imag)
        .map(|(&re, &im)| {
            if re == 0.0 && im == 0.0 {
                0.0
            } else {
                let a = math::atan2(im, re);
                // atan2(-0.0, x<0) gives -pi; fold onto +pi.
                if a == -core::f64::consts::PI {
                    core::f64::consts::PI
                } else {
                    a
                }
            }
        })
        .collect();
    FloatField::from_raw(spec.height, spec.width, data)
}

/// Moves DC from `(0, 0)` to `(H / 2, W / 2)`.
pub fn center_shift(spec: &Spectrum) -> Result<Spectrum> {
    if spec.layout != Layout::Natural {
        return Err(Error::LayoutMismatch { expected: "natural" });
    }
    Ok(permute(spec, true, Layout::Centered))
}

/// Undoes [`center_shift`].
pub fn inverse_shift(spec: &Spectrum) -> Result<Spectrum> {
    if spec.layout != Layout::Centered {
        return Err(Error::LayoutMismatch {
            expected: "centered",
        });
    }
    Ok(permute(spec, false, Layout::Natural))
}

fn permute(spec: &Spectrum, to_centered: bool, layout: Layout) -> Spectrum {
    let (h, w) = spec.shape();
    let (ch, cw) = (h / 2, w / 2);
    let mut real = vec![0.0; h * w];
    let mut imag = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            // natural (u, v) <-> centered ((u + ch) mod h, (v + cw) mod w)
            let cu = (u + ch) % h;
            let cv = (v + cw) % w;
            let (src, dst) = if to_centered {
                (u * w + v, cu * w + cv)
            } else {
                (cu * w + cv, u * w + v)
            };
            real[dst] = spec.real[src];
            imag[dst] = spec.imag[src];
        }
    }
    Spectrum {
        height: h,
        width: w,
        real,
        imag,
        layout,
    }
}

/// Binary keep-mask over a centered spectrum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqMask {
    height: usize,
    width: usize,
    keep: Vec<u8>,
    bands_stopped: Vec<usize>,
}

impl FreqMask {
    pub fn all_keep(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions { height, width });
        }
        Ok(Self {
            height,
            width,
            keep: vec![1; height * width],
            bands_stopped: Vec::new(),
        })
    }

    /// Wraps an explicit centered keep-map. Rejects non-binary values and maps
    /// that are not symmetric under frequency negation.
    pub fn from_keep(height: usize, width: usize, keep: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || keep.len() != height * width {
            return Err(Error::InvalidDimensions { height, width });
        }
        if keep.iter().any(|&k| k > 1) {
            return Err(Error::InvalidConfig("frequency mask must be binary".into()));
        }
        let mask = Self {
            height,
            width,
            keep,
            bands_stopped: Vec::new(),
        };
        if !mask.is_conjugate_symmetric() {
            return Err(Error::InvalidConfig(
                "frequency mask is not symmetric under frequency negation".into(),
            ));
        }
        Ok(mask)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Centered keep-map, 1 = kept.
    pub fn keep(&self) -> &[u8] {
        &self.keep
    }

    pub fn keep_at(&self, row: usize, col: usize) -> bool {
        self.keep[row * self.width + col] == 1
    }

    pub fn bands_stopped(&self) -> &[usize] {
        &self.bands_stopped
    }

    pub fn stopped_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k == 0).count()
    }

    /// The keep-map as a 0/1 field (centered layout), for previews.
    pub fn to_field(&self) -> FloatField {
        FloatField::from_raw(
            self.height,
            self.width,
            self.keep.iter().map(|&k| k as f64).collect(),
        )
    }

    /// Whether `keep(c + d) == keep(c - d)` for every offset, indices modulo
    /// the shape.
    pub fn is_conjugate_symmetric(&self) -> bool {
        let (h, w) = (self.height, self.width);
        let (ch, cw) = (h / 2, w / 2);
        for r in 0..h {
            let mr = (2 * ch + h - r) % h;
            for c in 0..w {
                let mc = (2 * cw + w - c) % w;
                if self.keep[r * w + c] != self.keep[mr * w + mc] {
                    return false;
                }
            }
        }
        true
    }
}

/// Parameters for drawing a combined band-stop mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqMaskConfig {
    pub n_bands: usize,
    pub n_select: usize,
    /// Side of the always-kept central window, in bins.
    pub preserve: usize,
}

impl Default for FreqMaskConfig {
    fn default() -> Self {
        Self {
            n_bands: 7,
            n_select: 2,
            preserve: 10,
        }
    }
}

impl FreqMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bands == 0 {
            return Err(Error::InvalidConfig("n_bands must be at least 1".into()));
        }
        if self.n_select > self.n_bands {
            return Err(Error::InvalidConfig(alloc::format!(
                "n_select {} exceeds n_bands {}",
                self.n_select,
                self.n_bands
            )));
        }
        Ok(())
    }
}

/// Radial band of every centered bin, `None` for DC or bins in the preserve
/// window.
///
/// Band `k` holds radii `k r_max / n < r <= (k + 1) r_max / n` where `r` is the
/// distance from the center and `r_max` the half-diagonal. The preserve window
/// is every bin within `preserve / 2` (floor) of the center along both axes:
/// the central `preserve x preserve` block closed under frequency negation.
pub fn band_map(n_bands: usize, h: usize, w: usize, preserve: usize) -> Vec<Option<usize>> {
    let (ch, cw) = (h / 2, w / 2);
    let r_max = math::sqrt((ch * ch + cw * cw) as f64);
    let half = preserve / 2;
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let du = r.abs_diff(ch);
        for c in 0..w {
            let dv = c.abs_diff(cw);
            let d2 = du * du + dv * dv;
            let preserved = preserve > 0 && du <= half && dv <= half;
            if d2 == 0 || preserved {
                out.push(None);
                continue;
            }
            let radius = math::sqrt(d2 as f64);
            let pos = radius * n_bands as f64 / r_max;
            let band = (math::ceil(pos) as usize).saturating_sub(1).min(n_bands - 1);
            out.push(Some(band));
        }
    }
    out
}

/// Single band-stop filter for band `band_index` of `n_bands`.
pub fn make_bandstop_filter(
    band_index: usize,
    n_bands: usize,
    h: usize,
    w: usize,
    preserve: usize,
) -> Result<FreqMask> {
    if band_index >= n_bands {
        return Err(Error::BandOutOfRange {
            index: band_index,
            n_bands,
        });
    }
    combine_bands(&[band_index], n_bands, h, w, preserve)
}

fn combine_bands(
    bands: &[usize],
    n_bands: usize,
    h: usize,
    w: usize,
    preserve: usize,
) -> Result<FreqMask> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidDimensions {
            height: h,
            width: w,
        });
    }
    let keep = band_map(n_bands, h, w, preserve)
        .into_iter()
        .map(|b| match b {
            Some(k) if bands.contains(&k) => 0,
            _ => 1,
        })
        .collect();
    Ok(FreqMask {
        height: h,
        width: w,
        keep,
        bands_stopped: bands.to_vec(),
    })
}

/// Draws `n_select` distinct bands uniformly and stops their union.
pub fn sample_freq_mask<R: RngCore + ?Sized>(
    rng: &mut R,
    cfg: &FreqMaskConfig,
    h: usize,
    w: usize,
) -> Result<FreqMask> {
    cfg.validate()?;
    let mut bands = rand::seq::index::sample(rng, cfg.n_bands, cfg.n_select).into_vec();
    bands.sort_unstable();
    combine_bands(&bands, cfg.n_bands, h, w, cfg.preserve)
}

/// Zeroes every stopped bin. Works on either layout.
pub fn apply_freq_mask(spec: &Spectrum, mask: &FreqMask) -> Result<Spectrum> {
    if spec.shape() != (mask.height, mask.width) {
        return Err(Error::ShapeMismatch {
            expected_h: spec.height,
            expected_w: spec.width,
            got_h: mask.height,
            got_w: mask.width,
        });
    }
    debug_assert!(mask.is_conjugate_symmetric());
    let (h, w) = spec.shape();
    let (ch, cw) = match spec.layout {
        Layout::Natural => (h / 2, w / 2),
        Layout::Centered => (0, 0),
    };
    let mut out = spec.clone();
    for r in 0..h {
        let mr = (r + ch) % h;
        for c in 0..w {
            let mc = (c + cw) % w;
            if mask.keep[mr * w + mc] == 0 {
                out.real[r * w + c] = 0.0;
                out.imag[r * w + c] = 0.0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_field(h: usize, w: usize, seed: u64) -> FloatField {
        let mut r = rng(seed);
        FloatField::from_fn(h, w, |_, _| r.gen::<f64>()).unwrap()
    }

    #[test]
    fn constant_field_is_dc_only() {
        let f = FloatField::filled(6, 5, 0.3).unwrap();
        let s = dft2(&f);
        assert!((s.real()[0] - 0.3 * 30.0).abs() < 1e-9);
        for i in 1..30 {
            assert!(s.real()[i].abs() < 1e-9 && s.imag()[i].abs() < 1e-9);
        }
        assert!((amplitude(&s).data()[0] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn impulse_is_flat() {
        let mut data = vec![0.0; 12];
        data[0] = 1.0;
        let s = dft2(&FloatField::new(3, 4, data).unwrap());
        for i in 0..12 {
            assert!((s.real()[i] - 1.0).abs() < 1e-12 && s.imag()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn idft_of_zero_is_zero() {
        let f = idft2(&Spectrum::zeros(4, 3).unwrap()).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idft_rejects_centered() {
        let s = center_shift(&dft2(&random_field(4, 4, 1))).unwrap();
        assert!(matches!(idft2(&s), Err(Error::LayoutMismatch { .. })));
        assert!(center_shift(&s).is_err());
    }

    #[test]
    fn amplitude_and_phase_bins() {
        let s = Spectrum::new(
            1,
            5,
            vec![3.0, 0.0, 1.0, 0.0, -1.0],
            vec![4.0, 0.0, 0.0, 1.0, 0.0],
            Layout::Natural,
        )
        .unwrap();
        let a = amplitude(&s);
        assert_eq!(a.data()[0], 5.0);
        assert_eq!(a.data()[1], 0.0);
        let p = phase(&s);
        assert_eq!(p.data()[1], 0.0);
        assert_eq!(p.data()[2], 0.0);
        assert!((p.data()[3] - PI / 2.0).abs() < 1e-15);
        assert!((p.data()[4] - PI).abs() < 1e-15);
    }

    #[test]
    fn negative_zero_imag_on_negative_axis_is_pi() {
        let s = Spectrum::new(1, 1, vec![-1.0], vec![-0.0], Layout::Natural).unwrap();
        assert_eq!(phase(&s).data()[0], PI);
    }

    #[test]
    fn shift_moves_dc_to_center() {
        let s = dft2(&FloatField::filled(6, 8, 1.0).unwrap());
        let c = center_shift(&s).unwrap();
        assert!((c.bin(3, 4).0 - 48.0).abs() < 1e-9);
        assert_eq!(c.at_frequency(0, 0), s.at_frequency(0, 0));
        assert_eq!(c.at_frequency(-2, 3), s.at_frequency(-2, 3));
    }

    #[test]
    fn shift_twice_is_identity_for_even_sizes() {
        let s = dft2(&random_field(6, 8, 2));
        let c = center_shift(&s).unwrap();
        // Relabel as natural and shift again: an involution for even sizes.
        let relabeled = Spectrum::new(6, 8, c.real().to_vec(), c.imag().to_vec(), Layout::Natural).unwrap();
        let twice = center_shift(&relabeled).unwrap();
        assert_eq!(twice.real(), s.real());
        assert_eq!(twice.imag(), s.imag());
    }

    #[test]
    fn odd_shift_round_trip_matches_index_permutation() {
        let s = dft2(&random_field(5, 5, 3));
        let c = center_shift(&s).unwrap();
        // Oracle: centered index j holds natural index (j - 2) mod 5.
        for j in 0..5 {
            for k in 0..5 {
                let (u, v) = ((j + 3) % 5, (k + 3) % 5);
                assert_eq!(c.bin(j, k), s.bin(u, v));
            }
        }
        assert_eq!(inverse_shift(&c).unwrap(), s);
    }

    #[test]
    fn band_index_out_of_range() {
        assert!(matches!(
            make_bandstop_filter(7, 7, 8, 8, 0),
            Err(Error::BandOutOfRange { index: 7, n_bands: 7 })
        ));
    }

    #[test]
    fn band_zero_keeps_preserve_window() {
        let m = make_bandstop_filter(0, 7, 224, 224, 10).unwrap();
        for r in 107..117 {
            for c in 107..117 {
                assert!(m.keep_at(r, c));
            }
        }
        // Just outside the window along an axis, radius 6, lies in band 0.
        assert!(!m.keep_at(112 + 6, 112));
        assert!(!m.keep_at(112 - 6, 112));
        assert!(m.stopped_count() > 0);
        assert!(m.is_conjugate_symmetric());
    }

    #[test]
    fn empty_selection_is_all_keep() {
        let cfg = FreqMaskConfig {
            n_bands: 7,
            n_select: 0,
            preserve: 10,
        };
        let m = sample_freq_mask(&mut rng(0), &cfg, 16, 16).unwrap();
        assert_eq!(m.stopped_count(), 0);
        assert!(m.bands_stopped().is_empty());
    }

    #[test]
    fn invalid_select_is_error() {
        let cfg = FreqMaskConfig {
            n_bands: 3,
            n_select: 4,
            preserve: 0,
        };
        assert!(sample_freq_mask(&mut rng(0), &cfg, 8, 8).is_err());
    }

    #[test]
    fn seeded_draw_support() {
        let cfg = FreqMaskConfig::default();
        let mut r = rng(9);
        for _ in 0..100 {
            let m = sample_freq_mask(&mut r, &cfg, 32, 32).unwrap();
            let b = m.bands_stopped();
            assert_eq!(b.len(), 2);
            assert!(b[0] < b[1] && b[1] < 7);
        }
    }

    #[test]
    fn pair_frequencies_are_uniform() {
        // 21 unordered pairs, each with probability 1/21.
        let cfg = FreqMaskConfig::default();
        let mut r = rng(2024);
        let mut counts = [[0usize; 7]; 7];
        let draws = 10_000;
        for _ in 0..draws {
            let m = sample_freq_mask(&mut r, &cfg, 8, 8).unwrap();
            let b = m.bands_stopped();
            counts[b[0]][b[1]] += 1;
        }
        let p = 1.0 / 21.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for i in 0..7 {
            for j in i + 1..7 {
                let dev = (counts[i][j] as f64 - draws as f64 * p).abs();
                assert!(dev <= 3.0 * sigma, "pair ({i},{j}) count {}", counts[i][j]);
            }
        }
    }

    #[test]
    fn from_keep_rejects_asymmetric() {
        let mut keep = vec![1u8; 16];
        keep[1] = 0;
        assert!(FreqMask::from_keep(4, 4, keep).is_err());
        assert!(FreqMask::from_keep(4, 4, vec![2; 16]).is_err());
    }

    #[test]
    fn apply_shape_mismatch() {
        let s = dft2(&random_field(4, 4, 1));
        let m = FreqMask::all_keep(4, 5).unwrap();
        assert!(apply_freq_mask(&s, &m).is_err());
    }

    #[test]
    fn all_keep_is_identity() {
        let s = dft2(&random_field(7, 6, 5));
        let m = FreqMask::all_keep(7, 6).unwrap();
        assert_eq!(apply_freq_mask(&s, &m).unwrap(), s);
    }

    #[test]
    fn stop_all_but_dc_on_constant_image() {
        let f = FloatField::filled(8, 8, 0.7).unwrap();
        let s = dft2(&f);
        let mut keep = vec![0u8; 64];
        keep[4 * 8 + 4] = 1;
        let m = FreqMask::from_keep(8, 8, keep).unwrap();
        let out = apply_freq_mask(&s, &m).unwrap();
        assert_eq!(out.real()[0], s.real()[0]);
        for i in 0..64 {
            assert!((out.real()[i] - s.real()[i]).abs() < 1e-9);
            assert!((out.imag()[i] - s.imag()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn masks_on_centered_and_natural_agree() {
        let s = dft2(&random_field(9, 8, 6));
        let m = make_bandstop_filter(1, 4, 9, 8, 2).unwrap();
        let via_natural = apply_freq_mask(&s, &m).unwrap();
        let via_centered =
            inverse_shift(&apply_freq_mask(&center_shift(&s).unwrap(), &m).unwrap()).unwrap();
        assert_eq!(via_natural, via_centered);
    }
}
