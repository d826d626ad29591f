//! Ultrasound-like synthetic corpus: speckled organs with distinct shapes and
//! texture bands.
//!
//! Every image is `(background + shape + texture) * speckle`, clamped to
//! `[0, 1]`. The texture is a sum of plane waves whose radial frequencies
//! (cycles per image) lie in the organ's band; speckle is `1 - s + s * E` with
//! `E` unit-mean exponential.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::field::FloatField;
use crate::math;
use crate::rng::{derive_seed, exponential, stream_rng, uniform};
use crate::sampling::{DatasetManifest, ImageEntry, Organ};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Ellipse,
    Ring,
    StripedLesion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrganTemplate {
    pub name: String,
    pub shape: ShapeKind,
    pub count: usize,
    /// Semi-axis range as a fraction of the image side.
    pub size_range: (f64, f64),
    /// Radial texture frequencies in cycles per image.
    pub texture_band: (f64, f64),
    pub texture_amplitude: f64,
    pub speckle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub image_size: usize,
    pub seed: u64,
    pub organs: Vec<OrganTemplate>,
}

const TEXTURE_WAVES: usize = 4;

impl Default for SynthSpec {
    fn default() -> Self {
        let organ = |name: &str, shape, count, size_range, texture_band| OrganTemplate {
            name: name.into(),
            shape,
            count,
            size_range,
            texture_band,
            texture_amplitude: 0.08,
            speckle: 0.3,
        };
        Self {
            image_size: 72,
            seed: 0,
            organs: alloc::vec![
                organ("ellipse", ShapeKind::Ellipse, 400, (0.22, 0.34), (5.0, 8.0)),
                organ("ring", ShapeKind::Ring, 100, (0.22, 0.34), (12.0, 17.0)),
                organ("lesion", ShapeKind::StripedLesion, 25, (0.15, 0.25), (22.0, 30.0)),
            ],
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::InvalidConfig("synth image_size must be at least 8".into()));
        }
        if self.organs.is_empty() {
            return Err(Error::InvalidConfig("synth spec has no organs".into()));
        }
        let nyquist = self.image_size as f64 / 2.0;
        for o in &self.organs {
            let bad = |what: &str| Err(Error::InvalidConfig(format!("organ {}: {what}", o.name)));
            if o.name.is_empty() || o.name.contains(['\t', '/', '\\']) {
                return bad("name must be non-empty without tabs or slashes");
            }
            if o.count == 0 {
                return bad("count must be at least 1");
            }
            let (lo, hi) = o.size_range;
            if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
                return bad("size range must satisfy 0 < lo <= hi <= 0.5");
            }
            let (lo, hi) = o.texture_band;
            if !(lo > 0.0 && lo <= hi && hi < nyquist) {
                return bad("texture band must lie strictly inside Nyquist");
            }
            if !(0.0..=1.0).contains(&o.speckle) || !(o.texture_amplitude >= 0.0) {
                return bad("speckle must lie in [0, 1] and amplitude be non-negative");
            }
        }
        Ok(())
    }

    /// Relative path of an image: `<organ>/<organ>_<index>.png`.
    pub fn image_path(&self, organ: usize, index: usize) -> String {
        let name = &self.organs[organ].name;
        format!("{name}/{name}_{index:04}.png")
    }

    /// The manifest of the corpus, labelled by organ name.
    pub fn manifest(&self) -> Result<DatasetManifest> {
        self.validate()?;
        let organs = self
            .organs
            .iter()
            .enumerate()
            .map(|(oi, o)| Organ {
                name: o.name.clone(),
                images: (0..o.count)
                    .map(|i| ImageEntry {
                        path: self.image_path(oi, i),
                        label: Some(o.name.clone()),
                    })
                    .collect(),
            })
            .collect();
        DatasetManifest::new(organs)
    }
}

/// Smooth inside-indicator: 1 well inside `rho < 1`, 0 outside, with an edge
/// about `width` pixels wide for a shape of pixel radius `radius`.
fn soft_inside(rho: f64, radius: f64, width: f64) -> f64 {
    0.5 * (1.0 - math::tanh((rho - 1.0) * radius / width))
}

/// Renders image `index` of organ `organ`. Deterministic in
/// `(spec.seed, organ, index)`.
pub fn render(spec: &SynthSpec, organ: usize, index: usize) -> Result<FloatField> {
    let t = spec
        .organs
        .get(organ)
        .ok_or_else(|| Error::InvalidConfig(format!("no organ {organ}")))?;
    let mut rng = stream_rng(derive_seed(spec.seed, organ as u64), index as u64);
    let n = spec.image_size as f64;
    let centre = (n - 1.0) / 2.0;

    let base = uniform(&mut rng, 0.25, 0.35);
    let slope = uniform(&mut rng, -0.1, 0.1);
    let (gs, gc) = math::sin_cos(uniform(&mut rng, 0.0, TAU));

    let cr = centre + uniform(&mut rng, -0.12, 0.12) * n;
    let cc = centre + uniform(&mut rng, -0.12, 0.12) * n;
    let a = uniform(&mut rng, t.size_range.0, t.size_range.1) * n;
    let b = uniform(&mut rng, t.size_range.0, t.size_range.1) * n;
    let (ps, pc) = math::sin_cos(uniform(&mut rng, 0.0, PI));
    let stripe_freq = 0.5 * (t.texture_band.0 + t.texture_band.1);

    let waves: Vec<(f64, f64, f64)> = (0..TEXTURE_WAVES)
        .map(|_| {
            let radius = uniform(&mut rng, t.texture_band.0, t.texture_band.1);
            let (s, c) = math::sin_cos(uniform(&mut rng, 0.0, TAU));
            (radius * c / n, radius * s / n, uniform(&mut rng, 0.0, TAU))
        })
        .collect();

    let size = spec.image_size;
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let (y, x) = (r as f64 - cr, c as f64 - cc);
            let along = pc * x + ps * y;
            let across = -ps * x + pc * y;
            let rho = math::sqrt((along / a) * (along / a) + (across / b) * (across / b));
            let radius = a.min(b);
            let shape = match t.shape {
                ShapeKind::Ellipse => 0.3 * soft_inside(rho, radius, 1.5),
                ShapeKind::Ring => {
                    0.35 * (soft_inside(rho, radius, 1.5) - soft_inside(rho / 0.6, 0.6 * radius, 1.5))
                }
                ShapeKind::StripedLesion => {
                    let stripes = 0.5 * (1.0 + math::cos(TAU * stripe_freq * along / n));
                    soft_inside(rho, radius, 1.5) * (-0.15 + 0.1 * stripes)
                }
            };
            let background = base + slope * ((r as f64 - centre) * gc + (c as f64 - centre) * gs) / n;
            let texture: f64 = waves
                .iter()
                .map(|&(fr, fc, phase)| math::cos(TAU * (fr * r as f64 + fc * c as f64) + phase))
                .sum::<f64>()
                * t.texture_amplitude;
            let speckle = 1.0 - t.speckle + t.speckle * exponential(&mut rng);
            data.push(((background + shape + texture) * speckle).clamp(0.0, 1.0));
        }
    }
    FloatField::new(size, size, data)
}

/// Renders the whole corpus in manifest order.
pub fn generate(spec: &SynthSpec) -> Result<(DatasetManifest, Vec<Vec<FloatField>>)> {
    let manifest = spec.manifest()?;
    let images = spec
        .organs
        .iter()
        .enumerate()
        .map(|(oi, o)| (0..o.count).map(|i| render(spec, oi, i)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, images))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_in_range() {
        let spec = SynthSpec::default();
        let a = render(&spec, 2, 3).unwrap();
        assert_eq!(a, render(&spec, 2, 3).unwrap());
        assert_ne!(a, render(&spec, 2, 4).unwrap());
        assert_eq!(a.shape(), (72, 72));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn manifest_matches_counts() {
        let spec = SynthSpec::default();
        let m = spec.manifest().unwrap();
        assert_eq!(m.counts(), alloc::vec![400, 100, 25]);
        assert_eq!(m.entry(1, 7).path, "ring/ring_0007.png");
        assert_eq!(m.entry(1, 7).label.as_deref(), Some("ring"));
    }

    #[test]
    fn validation_rejects_bad_bands() {
        let mut spec = SynthSpec::default();
        spec.organs[0].texture_band = (3.0, 36.0);
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::default();
        spec.organs[1].count = 0;
        assert!(spec.validate().is_err());
    }

    fn band_energy(field: &FloatField, band: (f64, f64)) -> f64 {
        let spec = crate::spectral::dft2(field);
        let (h, w) = spec.shape();
        let mut e = 0.0;
        for u in 0..h {
            for v in 0..w {
                let fu = if u <= h / 2 { u as f64 } else { u as f64 - h as f64 };
                let fv = if v <= w / 2 { v as f64 } else { v as f64 - w as f64 };
                let r = math::sqrt(fu * fu + fv * fv);
                if r >= band.0 && r <= band.1 {
                    let (re, im) = spec.bin(u, v);
                    e += re * re + im * im;
                }
            }
        }
        e
    }

    #[test]
    fn texture_bands_dominate() {
        let spec = SynthSpec::default();
        for (i, own) in spec.organs.iter().enumerate() {
            for (j, other) in spec.organs.iter().enumerate() {
                if i == j {
                    continue;
                }
                let ratio: f64 = (0..10)
                    .map(|k| {
                        let img = render(&spec, i, k).unwrap();
                        band_energy(&img, own.texture_band) / band_energy(&img, other.texture_band)
                    })
                    .sum::<f64>()
                    / 10.0;
                std::println!("{} vs {}: {ratio}", own.name, other.name);
                assert!(ratio > 2.0, "{} vs {}: {ratio}", own.name, other.name);
            }
        }
    }
}
