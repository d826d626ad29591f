//! Linear probe on frozen pooled encoder features.
//!
//! Features are standardized per dimension with training-set statistics, then
//! a softmax-linear classifier is fit by full-batch gradient descent from zero
//! weights. The probe has no randomness.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::field::FloatField;
use crate::math;
use crate::metrics::{argmax, classification_metrics, ClassificationMetrics, ConfusionMatrix};
use crate::model::{encode, pooled_features, ModelState};
use crate::trainer::softmax_cross_entropy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub train: ClassificationMetrics,
    pub eval: ClassificationMetrics,
}

/// Pooled encoder features, encoded in chunks.
pub fn probe_features(state: &ModelState, images: &[FloatField]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(32) {
        out.extend(encode(state, chunk)?.iter().map(pooled_features));
    }
    Ok(out)
}

pub(crate) struct Standardizer {
    pub(crate) mean: Vec<f64>,
    pub(crate) inv_std: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for row in x {
            for k in 0..d {
                var[k] += (row[k] - mean[k]) * (row[k] - mean[k]) / n;
            }
        }
        let inv_std = var.iter().map(|v| 1.0 / (math::sqrt(*v) + 1e-8)).collect();
        Self { mean, inv_std }
    }

    pub(crate) fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

struct Linear {
    w: Vec<f64>,
    b: Vec<f64>,
    dim: usize,
}

impl Linear {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.b
            .iter()
            .enumerate()
            .map(|(j, b)| b + self.w[j * self.dim..(j + 1) * self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

fn check_labels(labels: &[usize], n: usize, n_classes: usize, what: &str) -> Result<()> {
    if labels.len() != n {
        return Err(Error::LabelMismatch(format!("{what}: {n} items but {} labels", labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelMismatch(format!("{what}: label {l} with {n_classes} classes")));
    }
    Ok(())
}

fn metrics(model: &Linear, x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<ClassificationMetrics> {
    let mut cm = ConfusionMatrix::new(n_classes);
    for (row, &l) in x.iter().zip(labels) {
        cm.add(l, argmax(&model.scores(row)))?;
    }
    classification_metrics(&cm)
}

/// Fits the probe on `(train, train_labels)` and scores both splits.
pub fn linear_probe_features(
    train: &[Vec<f64>],
    train_labels: &[usize],
    eval: &[Vec<f64>],
    eval_labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if train.is_empty() || eval.is_empty() || n_classes < 2 {
        return Err(Error::InvalidConfig("probe needs data in both splits and two classes".into()));
    }
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::InvalidConfig("probe lr must be positive".into()));
    }
    check_labels(train_labels, train.len(), n_classes, "train")?;
    check_labels(eval_labels, eval.len(), n_classes, "eval")?;
    let dim = train[0].len();
    if train.iter().chain(eval).any(|r| r.len() != dim) {
        return Err(Error::InvalidConfig("probe features have ragged dimensions".into()));
    }
    let z = Standardizer::fit(train);
    let xt: Vec<Vec<f64>> = train.iter().map(|r| z.apply(r)).collect();
    let xe: Vec<Vec<f64>> = eval.iter().map(|r| z.apply(r)).collect();
    let mut model = Linear {
        w: vec![0.0; n_classes * dim],
        b: vec![0.0; n_classes],
        dim,
    };
    let scale = 1.0 / xt.len() as f64;
    for _ in 0..cfg.iterations {
        let mut gw = vec![0.0; model.w.len()];
        let mut gb = vec![0.0; n_classes];
        for (row, &l) in xt.iter().zip(train_labels) {
            let (_, g) = softmax_cross_entropy(&model.scores(row), l);
            for (j, gj) in g.iter().enumerate() {
                gb[j] += gj * scale;
                gw[j * dim..(j + 1) * dim]
                    .iter_mut()
                    .zip(row)
                    .for_each(|(w, v)| *w += gj * v * scale);
            }
        }
        model.w.iter_mut().zip(&gw).for_each(|(w, g)| *w -= cfg.lr * g);
        model.b.iter_mut().zip(&gb).for_each(|(b, g)| *b -= cfg.lr * g);
    }
    Ok(ProbeReport {
        train: metrics(&model, &xt, train_labels, n_classes)?,
        eval: metrics(&model, &xe, eval_labels, n_classes)?,
    })
}

/// Encodes both splits with `state` and runs [`linear_probe_features`].
pub fn linear_probe(
    state: &ModelState,
    train: &[FloatField],
    train_labels: &[usize],
    eval: &[FloatField],
    eval_labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    let ft = probe_features(state, train)?;
    let fe = probe_features(state, eval)?;
    linear_probe_features(&ft, train_labels, &fe, eval_labels, n_classes, cfg)
}
