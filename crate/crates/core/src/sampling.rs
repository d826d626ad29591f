//! Dataset manifests, organ-balanced sampling and input augmentation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::field::{field_mean, resize_bilinear, sample_bilinear, FloatField};
use crate::math;
use crate::rng::uniform;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageEntry {
    pub path: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Organ {
    pub name: String,
    pub images: Vec<ImageEntry>,
}

/// Images grouped by organ. Paths are unique and every organ is non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    organs: Vec<Organ>,
}

impl DatasetManifest {
    pub fn new(organs: Vec<Organ>) -> Result<Self> {
        if organs.is_empty() {
            return Err(Error::Manifest("manifest has no organs".into()));
        }
        let mut names = BTreeSet::new();
        let mut paths = BTreeSet::new();
        for organ in &organs {
            if organ.images.is_empty() {
                return Err(Error::Manifest(format!("organ {} has no images", organ.name)));
            }
            if !names.insert(organ.name.as_str()) {
                return Err(Error::Manifest(format!("organ {} listed twice", organ.name)));
            }
            for img in &organ.images {
                if !paths.insert(img.path.as_str()) {
                    return Err(Error::Manifest(format!("duplicate path {}", img.path)));
                }
            }
        }
        Ok(Self { organs })
    }

    pub fn organs(&self) -> &[Organ] {
        &self.organs
    }

    pub fn counts(&self) -> Vec<usize> {
        self.organs.iter().map(|o| o.images.len()).collect()
    }

    pub fn total_images(&self) -> usize {
        self.organs.iter().map(|o| o.images.len()).sum()
    }

    pub fn entry(&self, organ: usize, image: usize) -> &ImageEntry {
        &self.organs[organ].images[image]
    }

    /// Every image in manifest order as `(organ index, entry)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &ImageEntry)> {
        self.organs
            .iter()
            .enumerate()
            .flat_map(|(i, o)| o.images.iter().map(move |e| (i, e)))
    }

    /// Parses `organ<TAB>path[<TAB>label]` lines. Blank lines are ignored;
    /// organs keep their order of first appearance.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut organs: Vec<Organ> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let organ = parts.next().unwrap_or_default();
            let path = parts.next().unwrap_or_default();
            let label = parts.next().filter(|l| !l.is_empty()).map(ToString::to_string);
            if organ.is_empty() || path.is_empty() || parts.next().is_some() {
                return Err(Error::Manifest(format!("malformed line {}", lineno + 1)));
            }
            let entry = ImageEntry {
                path: path.to_string(),
                label,
            };
            match organs.iter_mut().find(|o| o.name == organ) {
                Some(o) => o.images.push(entry),
                None => organs.push(Organ {
                    name: organ.to_string(),
                    images: alloc::vec![entry],
                }),
            }
        }
        Self::new(organs)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for organ in &self.organs {
            for img in &organ.images {
                out.push_str(&organ.name);
                out.push('\t');
                out.push_str(&img.path);
                if let Some(label) = &img.label {
                    out.push('\t');
                    out.push_str(label);
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Per-organ sampling probabilities, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerWeights {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SamplerWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Organ weights proportional to `1 / sqrt(N_organ)`, normalized to sum 1.
pub fn organ_weights(manifest: &DatasetManifest) -> Result<SamplerWeights> {
    weights_from_counts(&manifest.counts())
}

pub fn weights_from_counts(counts: &[usize]) -> Result<SamplerWeights> {
    if counts.is_empty() {
        return Err(Error::Manifest("no organ counts".into()));
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Manifest(format!("organ {i} has zero images")));
    }
    let raw: Vec<f64> = counts.iter().map(|&n| 1.0 / math::sqrt(n as f64)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut acc = 0.0;
    let cumulative = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    Ok(SamplerWeights { weights, cumulative })
}

/// Draws `(organ index, image index)`: the organ by weight, the image
/// uniformly within it.
pub fn sample_index<R: RngCore + ?Sized>(
    rng: &mut R,
    manifest: &DatasetManifest,
    weights: &SamplerWeights,
) -> (usize, usize) {
    let u: f64 = rng.gen();
    let last = weights.cumulative.len() - 1;
    let organ = weights.cumulative.iter().position(|&c| u < c).unwrap_or(last);
    let image = rng.gen_range(0..manifest.organs[organ].images.len());
    (organ, image)
}

/// Draws an `(organ name, image path)` pair, see [`sample_index`].
pub fn sample_image<'a, R: RngCore + ?Sized>(
    rng: &mut R,
    manifest: &'a DatasetManifest,
    weights: &SamplerWeights,
) -> (&'a str, &'a str) {
    let (o, i) = sample_index(rng, manifest, weights);
    let organ = &manifest.organs[o];
    (&organ.name, &organ.images[i].path)
}

/// How augmented fields reach the training resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bridge {
    /// Random window when the crop transform fires, centered window otherwise.
    Crop,
    /// Random window of `crop_fraction` when the crop transform fires, then a
    /// bilinear resize.
    Resize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub out_size: usize,
    pub bridge: Bridge,
    pub rotation_deg: f64,
    pub scale: (f64, f64),
    pub crop_fraction: f64,
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub p_rotate: f64,
    pub p_scale: f64,
    pub p_crop: f64,
    pub p_brightness: f64,
    pub p_contrast: f64,
    pub p_blur: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            out_size: 64,
            bridge: Bridge::Crop,
            rotation_deg: 15.0,
            scale: (0.9, 1.1),
            crop_fraction: 0.8,
            brightness: (-0.1, 0.1),
            contrast: (0.9, 1.1),
            blur_sigma: (0.1, 1.0),
            p_rotate: 0.5,
            p_scale: 0.5,
            p_crop: 1.0,
            p_brightness: 0.5,
            p_contrast: 0.5,
            p_blur: 0.5,
        }
    }
}

impl AugmentConfig {
    /// The evaluation pipeline: every transform off, centered bridge.
    pub fn eval(out_size: usize) -> Self {
        Self {
            out_size,
            p_rotate: 0.0,
            p_scale: 0.0,
            p_crop: 0.0,
            p_brightness: 0.0,
            p_contrast: 0.0,
            p_blur: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("augment: {what}")));
        if self.out_size == 0 {
            return bad("out_size must be positive");
        }
        for p in [
            self.p_rotate,
            self.p_scale,
            self.p_crop,
            self.p_brightness,
            self.p_contrast,
            self.p_blur,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        let ordered = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !(self.rotation_deg.is_finite() && self.rotation_deg >= 0.0) {
            return bad("rotation must be a non-negative angle");
        }
        if !ordered(self.scale) || self.scale.0 <= 0.0 {
            return bad("scale range must be positive and ordered");
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return bad("crop_fraction must lie in (0, 1]");
        }
        if !ordered(self.brightness) {
            return bad("brightness range must be ordered");
        }
        if !ordered(self.contrast) || self.contrast.0 < 0.0 {
            return bad("contrast range must be non-negative and ordered");
        }
        if !ordered(self.blur_sigma) || self.blur_sigma.0 < 0.0 {
            return bad("blur sigma range must be non-negative and ordered");
        }
        Ok(())
    }
}

fn fires<R: RngCore + ?Sized>(rng: &mut R, p: f64) -> bool {
    p > 0.0 && rng.gen::<f64>() < p
}

fn draw<R: RngCore + ?Sized>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        uniform(rng, range.0, range.1)
    }
}

/// Resamples `field` through an inverse map about the image center.
fn warp(field: &FloatField, inverse: impl Fn(f64, f64) -> (f64, f64)) -> FloatField {
    let (h, w) = field.shape();
    let (cr, cc) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = inverse(r as f64 - cr, c as f64 - cc);
            data.push(sample_bilinear(field, sr + cr, sc + cc));
        }
    }
    FloatField::from_raw(h, w, data)
}

pub fn rotate(field: &FloatField, degrees: f64) -> FloatField {
    let (s, c) = math::sin_cos(degrees.to_radians());
    warp(field, |dr, dc| (c * dr + s * dc, -s * dr + c * dc))
}

pub fn scale(field: &FloatField, factor: f64) -> FloatField {
    warp(field, |dr, dc| (dr / factor, dc / factor))
}

/// Separable Gaussian blur with edge clamping. The kernel has radius
/// `max(1, ceil(3 sigma))`; `sigma = 0` is the identity.
pub fn gaussian_blur(field: &FloatField, sigma: f64) -> FloatField {
    if sigma <= 0.0 {
        return field.clone();
    }
    let radius = (math::ceil(3.0 * sigma) as usize).max(1);
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            math::exp(-x * x / (2.0 * sigma * sigma))
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (h, w) = field.shape();
    let tap = |i: usize, k: usize, len: usize| (i + k).saturating_sub(radius).min(len - 1);
    let mut rows: Vec<f64> = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            rows.push(kernel.iter().enumerate().map(|(k, wk)| wk * field.get(r, tap(c, k, w))).sum());
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push(kernel.iter().enumerate().map(|(k, wk)| wk * rows[tap(r, k, h) * w + c]).sum());
        }
    }
    FloatField::from_raw(h, w, out)
}

fn random_window<R: RngCore + ?Sized>(rng: &mut R, field: &FloatField, h: usize, w: usize) -> Result<FloatField> {
    let (fh, fw) = field.shape();
    if h > fh || w > fw {
        return Err(Error::CropTooLarge {
            target_h: h,
            target_w: w,
            height: fh,
            width: fw,
        });
    }
    let top = rng.gen_range(0..=fh - h);
    let left = rng.gen_range(0..=fw - w);
    field.crop(top, left, h, w)
}

fn center_window(field: &FloatField, h: usize, w: usize) -> Result<FloatField> {
    let (fh, fw) = field.shape();
    if h > fh || w > fw {
        return Err(Error::CropTooLarge {
            target_h: h,
            target_w: w,
            height: fh,
            width: fw,
        });
    }
    field.crop((fh - h) / 2, (fw - w) / 2, h, w)
}

/// Applies rotate, scale, crop, brightness, contrast and blur, each with its
/// own probability, then clamps to `[0, 1]`. The output is
/// `out_size x out_size`.
pub fn augment<R: RngCore + ?Sized>(field: &FloatField, rng: &mut R, cfg: &AugmentConfig) -> Result<FloatField> {
    cfg.validate()?;
    let n = cfg.out_size;
    if cfg.bridge == Bridge::Crop && (n > field.height() || n > field.width()) {
        return Err(Error::CropTooLarge {
            target_h: n,
            target_w: n,
            height: field.height(),
            width: field.width(),
        });
    }
    let mut x = field.clone();
    if fires(rng, cfg.p_rotate) {
        let deg = uniform(rng, -cfg.rotation_deg, cfg.rotation_deg);
        x = rotate(&x, deg);
    }
    if fires(rng, cfg.p_scale) {
        let s = draw(rng, cfg.scale);
        x = scale(&x, s);
    }
    let crop = fires(rng, cfg.p_crop);
    x = match cfg.bridge {
        Bridge::Crop if crop => random_window(rng, &x, n, n)?,
        Bridge::Crop => center_window(&x, n, n)?,
        Bridge::Resize => {
            if crop {
                let (h, w) = x.shape();
                let ch = (math::round(h as f64 * cfg.crop_fraction) as usize).clamp(1, h);
                let cw = (math::round(w as f64 * cfg.crop_fraction) as usize).clamp(1, w);
                x = random_window(rng, &x, ch, cw)?;
            }
            resize_bilinear(&x, n, n)?
        }
    };
    if fires(rng, cfg.p_brightness) {
        let delta = draw(rng, cfg.brightness);
        x.data_mut().iter_mut().for_each(|v| *v += delta);
    }
    if fires(rng, cfg.p_contrast) {
        let factor = draw(rng, cfg.contrast);
        let mean = field_mean(&x);
        x.data_mut().iter_mut().for_each(|v| *v = mean + (*v - mean) * factor);
    }
    if fires(rng, cfg.p_blur) {
        let sigma = draw(rng, cfg.blur_sigma);
        x = gaussian_blur(&x, sigma);
    }
    Ok(x.clamp_unit())
}

/// A seeded permutation of `0..n` truncated to `ceil(fraction * n)` items.
/// For a fixed seed, smaller fractions are prefixes of larger ones.
pub fn label_subset(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("label fraction {fraction} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = crate::rng::stream_rng(seed, 0x1abe1);
    order.shuffle(&mut rng);
    // Guard against 0.2 * 10 evaluating to 2.0000000000000004.
    let k = math::ceil(fraction * n as f64 - 1e-9) as usize;
    order.truncate(k.min(n));
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use alloc::vec;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn manifest(counts: &[(&str, usize)]) -> DatasetManifest {
        DatasetManifest::new(
            counts
                .iter()
                .map(|&(name, n)| Organ {
                    name: name.into(),
                    images: (0..n)
                        .map(|i| ImageEntry {
                            path: format!("{name}/{i:04}.png"),
                            label: None,
                        })
                        .collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn weights_two_organs() {
        let w = organ_weights(&manifest(&[("A", 100), ("B", 400)])).unwrap();
        assert!((w.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_counts_are_uniform() {
        let w = weights_from_counts(&[7, 7, 7, 7]).unwrap();
        for &x in w.weights() {
            assert!((x - 0.25).abs() < 1e-15);
        }
        assert!(weights_from_counts(&[3, 0]).is_err());
    }

    #[test]
    fn manifest_validation() {
        assert!(DatasetManifest::new(vec![]).is_err());
        let dup = vec![
            Organ {
                name: "a".into(),
                images: vec![ImageEntry { path: "x".into(), label: None }],
            },
            Organ {
                name: "b".into(),
                images: vec![ImageEntry { path: "x".into(), label: None }],
            },
        ];
        assert!(DatasetManifest::new(dup).is_err());
        let empty = vec![Organ {
            name: "a".into(),
            images: vec![],
        }];
        assert!(DatasetManifest::new(empty).is_err());
    }

    #[test]
    fn manifest_text_round_trip() {
        let text = "liver\tliver/0.png\tcyst\nliver\tliver/1.png\nkidney\tkidney/0.png\tnormal\n";
        let m = DatasetManifest::from_text(text).unwrap();
        assert_eq!(m.counts(), vec![2, 1]);
        assert_eq!(m.entry(0, 0).label.as_deref(), Some("cyst"));
        assert_eq!(m.entry(0, 1).label, None);
        assert_eq!(m.to_text(), text);
        assert!(DatasetManifest::from_text("liver\n").is_err());
        assert!(DatasetManifest::from_text("a\tb\tc\td\n").is_err());
    }

    #[test]
    fn single_organ_always_drawn() {
        let m = manifest(&[("only", 3)]);
        let w = organ_weights(&m).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_image(&mut rng, &m, &w).0, "only");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = manifest(&[("a", 4), ("b", 9)]);
        let w = organ_weights(&m).unwrap();
        let draws = |seed| {
            let mut rng = stream_rng(seed, 0);
            (0..50).map(|_| sample_index(&mut rng, &m, &w)).collect::<Vec<_>>()
        };
        assert_eq!(draws(5), draws(5));
        assert_ne!(draws(5), draws(6));
    }

    #[test]
    fn brightness_clamps() {
        let f = FloatField::filled(8, 8, 0.95).unwrap();
        let cfg = AugmentConfig {
            out_size: 8,
            brightness: (0.1, 0.1),
            p_brightness: 1.0,
            ..AugmentConfig::eval(8)
        };
        let out = augment(&f, &mut stream_rng(0, 0), &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn disabled_pipeline_is_center_crop() {
        let f = FloatField::from_fn(10, 10, |r, c| (r * 10 + c) as f64 / 100.0).unwrap();
        let out = augment(&f, &mut stream_rng(0, 0), &AugmentConfig::eval(6)).unwrap();
        assert_eq!(out, f.crop(2, 2, 6, 6).unwrap());
        let resize = AugmentConfig {
            bridge: Bridge::Resize,
            ..AugmentConfig::eval(10)
        };
        assert_eq!(augment(&f, &mut stream_rng(0, 0), &resize).unwrap(), f);
    }

    #[test]
    fn crop_too_large_is_error() {
        let f = FloatField::filled(8, 8, 0.5).unwrap();
        assert!(matches!(
            augment(&f, &mut stream_rng(0, 0), &AugmentConfig::eval(9)),
            Err(Error::CropTooLarge { .. })
        ));
    }

    #[test]
    fn blur_kernel_tends_to_delta() {
        let mut rng = stream_rng(2, 0);
        let f = FloatField::from_fn(12, 12, |_, _| rng.gen()).unwrap();
        // At sigma 0.1 the side taps weigh exp(-50) relative to the center.
        let out = gaussian_blur(&f, 0.1);
        for (a, b) in out.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let f = FloatField::filled(9, 7, 0.4).unwrap();
        for (&a, _) in gaussian_blur(&f, 1.3).data().iter().zip(0..) {
            assert!((a - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn rotation_by_zero_and_quarter_turn() {
        let f = FloatField::from_fn(5, 5, |r, c| (r * 5 + c) as f64 / 25.0).unwrap();
        let same = rotate(&f, 0.0);
        for (a, b) in same.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let q = rotate(&f, 90.0);
        for r in 0..5 {
            for c in 0..5 {
                // Output (r, c) samples input (c, 4 - r).
                assert!((q.get(r, c) - f.get(c, 4 - r)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn label_subset_nested_and_sized() {
        let full = label_subset(37, 1.0, 9).unwrap();
        assert_eq!(full.len(), 37);
        for f in [0.2, 0.4, 0.6, 0.8] {
            let s = label_subset(37, f, 9).unwrap();
            assert_eq!(s.len(), (f * 37.0f64).ceil() as usize);
            assert_eq!(&full[..s.len()], &s[..]);
        }
        assert_eq!(label_subset(10, 0.2, 1).unwrap().len(), 2);
        assert!(label_subset(10, 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_ignore_order(counts in proptest::collection::vec(1usize..5000, 1..12)) {
            let w = weights_from_counts(&counts).unwrap();
            let sum: f64 = w.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(w.weights().iter().all(|&x| x > 0.0));
            let mut rev = counts.clone();
            rev.reverse();
            let wr = weights_from_counts(&rev).unwrap();
            for (a, b) in w.weights().iter().zip(wr.weights().iter().rev()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let doubled: Vec<usize> = counts.iter().map(|c| 2 * c).collect();
            let wd = weights_from_counts(&doubled).unwrap();
            for (a, b) in w.weights().iter().zip(wd.weights()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn augment_stays_in_range_and_is_deterministic(seed in any::<u64>()) {
            let mut src = stream_rng(seed, 1);
            let f = FloatField::from_fn(20, 20, |_, _| src.gen()).unwrap();
            let cfg = AugmentConfig {
                out_size: 16,
                p_rotate: 1.0,
                p_scale: 1.0,
                p_brightness: 1.0,
                p_contrast: 1.0,
                p_blur: 1.0,
                ..AugmentConfig::default()
            };
            let a = augment(&f, &mut stream_rng(seed, 2), &cfg).unwrap();
            let b = augment(&f, &mut stream_rng(seed, 2), &cfg).unwrap();
            prop_assert_eq!(a.shape(), (16, 16));
            prop_assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert_eq!(a, b);
        }
    }
}
