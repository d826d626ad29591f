//! Classification scores and image-similarity metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::field::FloatField;
use crate::math;
use crate::{Error, Result};

/// Rows are true classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n_classes * n_classes {
            return Err(Error::InvalidConfig(format!(
                "{} counts for {n_classes} classes",
                counts.len()
            )));
        }
        Ok(Self { n_classes, counts })
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::LabelMismatch(format!(
                "{} truths for {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n_classes || predicted >= self.n_classes {
            return Err(Error::LabelMismatch(format!(
                "label ({truth}, {predicted}) outside {} classes",
                self.n_classes
            )));
        }
        self.counts[truth * self.n_classes + predicted] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, k: usize) -> u64 {
        (0..self.n_classes).map(|j| self.get(k, j)).sum()
    }

    fn col_sum(&self, k: usize) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, k)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub mcc: f64,
}

/// Accuracy, macro-averaged recall/precision/F1 (undefined ratios count as 0)
/// and the multiclass Matthews correlation coefficient.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let total = cm.total();
    if total == 0 || cm.n_classes == 0 {
        return Err(Error::EmptyConfusion);
    }
    let k = cm.n_classes;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut recall = 0.0;
    let mut precision = 0.0;
    let mut f1 = 0.0;
    let mut trace = 0u64;
    for c in 0..k {
        let tp = cm.get(c, c);
        trace += tp;
        let r = ratio(tp, cm.row_sum(c));
        let p = ratio(tp, cm.col_sum(c));
        recall += r;
        precision += p;
        f1 += if r + p > 0.0 { 2.0 * r * p / (r + p) } else { 0.0 };
    }
    let s = total as f64;
    let c = trace as f64;
    let (mut pt, mut pp, mut tt) = (0.0, 0.0, 0.0);
    for j in 0..k {
        let t = cm.row_sum(j) as f64;
        let p = cm.col_sum(j) as f64;
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    let den = math::sqrt((s * s - pp) * (s * s - tt));
    let mcc = if den > 0.0 {
        (c * s - pt) / den
    } else if trace == total {
        // A single class, predicted perfectly.
        1.0
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy: c / s,
        recall: recall / k as f64,
        precision: precision / k as f64,
        f1: f1 / k as f64,
        mcc,
    })
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean SSIM over every fully contained 7x7 window (uniform weights,
/// population statistics, unit dynamic range).
pub fn ssim(x: &FloatField, y: &FloatField) -> Result<f64> {
    x.check_same_shape(y)?;
    let (h, w) = x.shape();
    let win = SSIM_WINDOW;
    if h < win || w < win {
        return Err(Error::InvalidDimensions { height: h, width: w });
    }
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - win {
        for c in 0..=w - win {
            let (mut sx, mut sy) = (0.0, 0.0);
            for i in r..r + win {
                for j in c..c + win {
                    sx += x.get(i, j);
                    sy += y.get(i, j);
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in r..r + win {
                for j in c..c + win {
                    let (dx, dy) = (x.get(i, j) - mx, y.get(i, j) - my);
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

const ZERO_VARIANCE: f64 = 1e-18;

/// Default LNCC window side.
pub const LNCC_WINDOW: usize = 9;

/// Mean squared local Pearson correlation over every fully contained
/// `window x window` patch. Patches where both images are constant count as
/// 1; patches where exactly one is constant are skipped. Returns 0 when every
/// patch is skipped.
pub fn lncc(x: &FloatField, y: &FloatField, window: usize) -> Result<f64> {
    x.check_same_shape(y)?;
    let (h, w) = x.shape();
    if window == 0 || window.is_multiple_of(2) || h < window || w < window {
        return Err(Error::InvalidConfig(format!(
            "lncc window {window} on a {h}x{w} image"
        )));
    }
    let n = (window * window) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - window {
        for c in 0..=w - window {
            let (mut sx, mut sy) = (0.0, 0.0);
            for i in r..r + window {
                for j in c..c + window {
                    sx += x.get(i, j);
                    sy += y.get(i, j);
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in r..r + window {
                for j in c..c + window {
                    let (dx, dy) = (x.get(i, j) - mx, y.get(i, j) - my);
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            let (cx, cy) = (vx / n <= ZERO_VARIANCE, vy / n <= ZERO_VARIANCE);
            match (cx, cy) {
                (true, true) => {
                    total += 1.0;
                    count += 1;
                }
                (false, false) => {
                    total += (cxy * cxy) / (vx * vy);
                    count += 1;
                }
                _ => {}
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

pub const NMI_BINS: usize = 32;

fn bin_of(v: f64, bins: usize) -> usize {
    let b = math::floor(v.clamp(0.0, 1.0) * bins as f64) as usize;
    b.min(bins - 1)
}

fn entropy(counts: &[u64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * math::ln(p)
        })
        .sum()
}

/// Histogram NMI, `2 I(X; Y) / (H(X) + H(Y))`, equal-width bins over `[0, 1]`.
/// Two single-bin images score 1.
pub fn nmi(x: &FloatField, y: &FloatField, bins: usize) -> Result<f64> {
    x.check_same_shape(y)?;
    if bins < 2 {
        return Err(Error::InvalidConfig("nmi needs at least 2 bins".into()));
    }
    let mut hx = vec![0u64; bins];
    let mut hy = vec![0u64; bins];
    let mut joint = vec![0u64; bins * bins];
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (i, j) = (bin_of(a, bins), bin_of(b, bins));
        hx[i] += 1;
        hy[j] += 1;
        joint[i * bins + j] += 1;
    }
    let n = x.len() as f64;
    let (ex, ey, exy) = (entropy(&hx, n), entropy(&hy, n), entropy(&joint, n));
    if ex + ey <= 0.0 {
        return Ok(1.0);
    }
    let mi = ex + ey - exy;
    Ok((2.0 * mi / (ex + ey)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_field(h: usize, w: usize, seed: u64) -> FloatField {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FloatField::from_fn(h, w, |_, _| r.gen()).unwrap()
    }

    #[test]
    fn perfect_diagonal() {
        let cm = ConfusionMatrix::from_counts(3, vec![5, 0, 0, 0, 2, 0, 0, 0, 9]).unwrap();
        let m = classification_metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.mcc, 1.0);
    }

    #[test]
    fn binary_two_one() {
        let cm = ConfusionMatrix::from_counts(2, vec![2, 1, 1, 2]).unwrap();
        let m = classification_metrics(&cm).unwrap();
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        // Binary MCC: (tp tn - fp fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn)) = 3 / 9.
        assert!((m.mcc - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_matrix_is_error() {
        assert_eq!(
            classification_metrics(&ConfusionMatrix::new(2)),
            Err(Error::EmptyConfusion)
        );
    }

    #[test]
    fn random_predictions_have_near_zero_mcc() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let truth: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
        let pred: Vec<usize> = (0..10_000).map(|_| r.gen_range(0..2)).collect();
        let m = classification_metrics(&ConfusionMatrix::from_labels(&truth, &pred, 2).unwrap()).unwrap();
        assert!(m.mcc.abs() < 0.05);
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }

    #[test]
    fn ssim_self_and_symmetry() {
        let x = random_field(16, 16, 1);
        let y = random_field(16, 16, 2);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-12);
        assert!(ssim(&FloatField::zeros(6, 6).unwrap(), &FloatField::zeros(6, 6).unwrap()).is_err());
    }

    #[test]
    fn ssim_is_negative_for_inverted_images() {
        let x = random_field(16, 16, 4);
        let inv = FloatField::from_fn(16, 16, |r, c| 1.0 - x.get(r, c)).unwrap();
        let s = ssim(&x, &inv).unwrap();
        assert!((-1.0..0.0).contains(&s), "{s}");
    }

    #[test]
    fn ssim_constant_pair_closed_form() {
        let (a, b) = (0.2, 0.7);
        let x = FloatField::filled(10, 10, a).unwrap();
        let y = FloatField::filled(10, 10, b).unwrap();
        let lum = (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1);
        let s = ssim(&x, &y).unwrap();
        assert!((s - lum).abs() < 1e-12);
        assert!(s < 1.0);
    }

    #[test]
    fn lncc_self_and_affine() {
        let x = random_field(12, 12, 3);
        assert!((lncc(&x, &x, 5).unwrap() - 1.0).abs() < 1e-12);
        let y = FloatField::new(12, 12, x.data().iter().map(|v| 0.5 * v + 0.2).collect()).unwrap();
        assert!((lncc(&x, &y, 5).unwrap() - 1.0).abs() < 1e-9);
        assert!(lncc(&x, &y, 4).is_err());
    }

    #[test]
    fn lncc_constant_windows() {
        let x = FloatField::filled(8, 8, 0.3).unwrap();
        let y = FloatField::filled(8, 8, 0.6).unwrap();
        assert_eq!(lncc(&x, &y, 3).unwrap(), 1.0);
        let z = random_field(8, 8, 4);
        assert_eq!(lncc(&x, &z, 3).unwrap(), 0.0);
    }

    #[test]
    fn nmi_cases() {
        let x = random_field(32, 32, 5);
        assert!((nmi(&x, &x, 32).unwrap() - 1.0).abs() < 1e-12);
        let inv = FloatField::new(32, 32, x.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        // Flipping intensities relabels bins one-to-one except exactly on bin edges.
        assert!((nmi(&x, &inv, 32).unwrap() - 1.0).abs() < 1e-9);
        assert!(nmi(&x, &x, 1).is_err());
        let a = random_field(64, 64, 6);
        let b = random_field(64, 64, 7);
        assert!(nmi(&a, &b, 32).unwrap() < 0.05);
    }
}
