//! Spatial mean-fill patch masking and dual spatial/frequency masking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::field::{field_mean, FloatField};
use crate::math;
use crate::spectral::{apply_freq_mask, dft2, idft2_with_residue, FreqMask};
use crate::{Error, Result};

/// Which patches of a `grid_h x grid_w` grid of `patch x patch` blocks are masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialMask {
    grid_h: usize,
    grid_w: usize,
    patch: usize,
    masked: Vec<u8>,
}

impl SpatialMask {
    pub fn new(grid_h: usize, grid_w: usize, patch: usize, masked: Vec<u8>) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 || patch == 0 || masked.len() != grid_h * grid_w {
            return Err(Error::InvalidConfig(format!(
                "spatial mask {grid_h}x{grid_w} with patch {patch} and {} entries",
                masked.len()
            )));
        }
        if masked.iter().any(|&m| m > 1) {
            return Err(Error::InvalidConfig("spatial mask must be binary".into()));
        }
        Ok(Self {
            grid_h,
            grid_w,
            patch,
            masked,
        })
    }

    pub fn empty(grid_h: usize, grid_w: usize, patch: usize) -> Result<Self> {
        Self::new(grid_h, grid_w, patch, vec![0; grid_h * grid_w])
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn masked(&self) -> &[u8] {
        &self.masked
    }

    pub fn is_masked(&self, gr: usize, gc: usize) -> bool {
        self.masked[gr * self.grid_w + gc] == 1
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m == 1).count()
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.grid_h * self.patch, self.grid_w * self.patch)
    }

    /// Whether pixel `(row, col)` falls in a masked patch.
    #[inline]
    pub fn covers(&self, row: usize, col: usize) -> bool {
        self.is_masked(row / self.patch, col / self.patch)
    }

    /// Row-major per-pixel coverage.
    pub fn pixel_mask(&self) -> Vec<bool> {
        let (h, w) = self.image_shape();
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                out.push(self.covers(r, c));
            }
        }
        out
    }

    fn check_field(&self, field: &FloatField) -> Result<()> {
        if self.image_shape() != field.shape() {
            let (h, w) = self.image_shape();
            return Err(Error::GeometryMismatch(format!(
                "mask covers {h}x{w}, image is {}x{}",
                field.height(),
                field.width()
            )));
        }
        Ok(())
    }
}

/// Number of masked patches for a ratio: `round(ratio * n)`, half away from zero.
pub fn masked_patch_count(ratio: f64, n_patches: usize) -> usize {
    math::round(ratio * n_patches as f64) as usize
}

/// Masks exactly `round(ratio * grid_h * grid_w)` patches chosen uniformly
/// without replacement.
pub fn sample_spatial_mask<R: RngCore + ?Sized>(
    rng: &mut R,
    grid_h: usize,
    grid_w: usize,
    patch: usize,
    ratio: f64,
) -> Result<SpatialMask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!(
            "mask ratio {ratio} outside [0, 1]"
        )));
    }
    let n = grid_h * grid_w;
    let count = masked_patch_count(ratio, n);
    let mut masked = vec![0u8; n];
    for i in rand::seq::index::sample(rng, n, count) {
        masked[i] = 1;
    }
    SpatialMask::new(grid_h, grid_w, patch, masked)
}

/// Replaces every pixel of a masked patch by the mean of the whole image.
pub fn apply_spatial_mean_mask(field: &FloatField, mask: &SpatialMask) -> Result<FloatField> {
    mask.check_field(field)?;
    let fill = field_mean(field);
    let mut out = field.clone();
    fill_masked(&mut out, mask, fill);
    Ok(out)
}

fn fill_masked(out: &mut FloatField, mask: &SpatialMask, fill: f64) {
    let (h, w) = out.shape();
    for r in 0..h {
        for c in 0..w {
            if mask.covers(r, c) {
                out.set(r, c, fill);
            }
        }
    }
}

/// Everything needed to reproduce one dual-masked input.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMaskRecord {
    pub spatial: SpatialMask,
    pub freq: FreqMask,
    /// Mean of the source image, stored into masked patches.
    pub fill_value: f64,
    /// Largest imaginary magnitude discarded by the inverse transform.
    pub imag_residue: f64,
}

/// Band-stop filters `field` in the frequency domain and transforms back.
/// Returns the real image and the discarded imaginary residue.
pub fn frequency_mask_image(field: &FloatField, fmask: &FreqMask) -> Result<(FloatField, f64)> {
    let spec = apply_freq_mask(&dft2(field), fmask)?;
    idft2_with_residue(&spec)
}

/// Builds the dual-masked input: frequency-masked reconstruction everywhere,
/// with spatially masked patches overwritten by the image mean.
pub fn dual_mask(
    field: &FloatField,
    smask: &SpatialMask,
    fmask: &FreqMask,
) -> Result<(FloatField, DualMaskRecord)> {
    smask.check_field(field)?;
    if (fmask.height(), fmask.width()) != field.shape() {
        return Err(Error::GeometryMismatch(format!(
            "frequency mask is {}x{}, image is {}x{}",
            fmask.height(),
            fmask.width(),
            field.height(),
            field.width()
        )));
    }
    let fill = field_mean(field);
    let (mut out, imag_residue) = frequency_mask_image(field, fmask)?;
    fill_masked(&mut out, smask, fill);
    Ok((
        out,
        DualMaskRecord {
            spatial: smask.clone(),
            freq: fmask.clone(),
            fill_value: fill,
            imag_residue,
        },
    ))
}
