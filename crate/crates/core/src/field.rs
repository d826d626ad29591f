//! Grayscale rasters: the 8-bit on-disk form and the real-valued working form.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// An 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidDimensions { height, width });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }
}

/// A real-valued raster, row-major. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FloatField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidDimensions { height, width });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("field contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Builds a field by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    /// Wraps data without the finiteness scan. Callers guarantee the invariant.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Clamps every value into `[0, 1]`.
    pub fn clamp_unit(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Quantizes to 8 bits, clamping to `[0, 1]` and rounding to nearest.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|&v| math::round(v.clamp(0.0, 1.0) * 255.0) as u8)
            .collect();
        GrayImage {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub(crate) fn check_same_shape(&self, other: &FloatField) -> Result<()> {
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

    /// Copies the `h x w` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(Error::CropTooLarge {
                target_h: h,
                target_w: w,
                height: self.height,
                width: self.width,
            });
        }
        let mut data = Vec::with_capacity(h * w);
        for r in top..top + h {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Self::from_raw(h, w, data))
    }
}

/// Scales 8-bit intensities to `[0, 1]`.
pub fn normalize(img: &GrayImage) -> FloatField {
    let data = img.data.iter().map(|&p| p as f64 / 255.0).collect();
    FloatField::from_raw(img.height, img.width, data)
}

/// Arithmetic mean over every pixel, accumulated relative to the first value
/// so that a constant field returns its constant exactly.
pub fn field_mean(field: &FloatField) -> f64 {
    let origin = field.data[0];
    let offset: f64 = field.data.iter().map(|&v| v - origin).sum();
    origin + offset / field.data.len() as f64
}

/// Bilinear resize with half-pixel-center alignment and edge clamping.
pub fn resize_bilinear(field: &FloatField, out_h: usize, out_w: usize) -> Result<FloatField> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimensions {
            height: out_h,
            width: out_w,
        });
    }
    if (out_h, out_w) == field.shape() {
        return Ok(field.clone());
    }
    let rows = axis_taps(field.height, out_h);
    let cols = axis_taps(field.width, out_w);
    let mut data = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, tr) in &rows {
        for &(c0, c1, tc) in &cols {
            let top = lerp(field.get(r0, c0), field.get(r0, c1), tc);
            let bottom = lerp(field.get(r1, c0), field.get(r1, c1), tc);
            data.push(lerp(top, bottom, tr));
        }
    }
    Ok(FloatField::from_raw(out_h, out_w, data))
}

/// Samples `field` at a fractional `(row, col)` with edge clamping.
pub(crate) fn sample_bilinear(field: &FloatField, row: f64, col: f64) -> f64 {
    let (r0, r1, tr) = clamp_tap(row, field.height);
    let (c0, c1, tc) = clamp_tap(col, field.width);
    let top = lerp(field.get(r0, c0), field.get(r0, c1), tc);
    let bottom = lerp(field.get(r1, c0), field.get(r1, c1), tc);
    lerp(top, bottom, tr)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| clamp_tap((i as f64 + 0.5) * scale - 0.5, input))
        .collect()
}

fn clamp_tap(pos: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let pos = pos.clamp(0.0, max);
    let i0 = math::floor(pos) as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, pos - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_endpoints() {
        let img = GrayImage::new(1, 3, vec![0, 128, 255]).unwrap();
        let f = normalize(&img);
        assert_eq!(f.data(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(FloatField::new(2, 2, vec![0.0; 3]).is_err());
        assert!(FloatField::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn mean_cases() {
        assert_eq!(field_mean(&FloatField::filled(3, 5, 0.5).unwrap()), 0.5);
        let f = FloatField::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(field_mean(&f), 0.5);
    }

    #[test]
    fn mean_matches_compensated_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = FloatField::from_fn(16, 16, |_, _| rng.gen::<f64>()).unwrap();
        // Kahan summation oracle.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in f.data() {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        assert!((field_mean(&f) - sum / 256.0).abs() < 1e-12);
    }

    #[test]
    fn resize_zero_target_is_error() {
        let f = FloatField::filled(2, 2, 0.3).unwrap();
        assert!(resize_bilinear(&f, 0, 4).is_err());
    }

    #[test]
    fn resize_identity_is_bit_exact() {
        let f = FloatField::from_fn(5, 7, |r, c| (r * 7 + c) as f64 / 35.0).unwrap();
        assert_eq!(resize_bilinear(&f, 5, 7).unwrap(), f);
    }

    #[test]
    fn resize_two_by_two_to_two_by_four() {
        let f = FloatField::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let out = resize_bilinear(&f, 2, 4).unwrap();
        // Half-pixel centers: source columns -0.25 (clamped), 0.25, 0.75, 1.25 (clamped).
        let expected = [0.0, 0.25, 0.75, 1.0];
        for r in 0..2 {
            for c in 0..4 {
                assert!((out.get(r, c) - expected[c]).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn resize_constant_preserved(v in 0.0f64..1.0, h in 1usize..9, w in 1usize..9, oh in 1usize..20, ow in 1usize..20) {
            let f = FloatField::filled(h, w, v).unwrap();
            let out = resize_bilinear(&f, oh, ow).unwrap();
            prop_assert_eq!(out.shape(), (oh, ow));
            for &x in out.data() {
                prop_assert!((x - v).abs() < 1e-15);
            }
        }

        #[test]
        fn resize_has_no_overshoot(seed in any::<u64>(), h in 1usize..8, w in 1usize..8, oh in 1usize..16, ow in 1usize..16) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = FloatField::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap();
            let (lo, hi) = f.min_max();
            let out = resize_bilinear(&f, oh, ow).unwrap();
            for &x in out.data() {
                prop_assert!(x >= lo - 1e-15 && x <= hi + 1e-15);
            }
        }

        #[test]
        fn normalize_is_monotone(a in any::<u8>(), b in any::<u8>()) {
            let f = normalize(&GrayImage::new(1, 2, vec![a, b]).unwrap());
            prop_assert_eq!(a.cmp(&b), f.get(0, 0).partial_cmp(&f.get(0, 1)).unwrap());
        }
    }
}
