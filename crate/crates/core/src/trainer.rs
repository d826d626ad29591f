//! Pre-training and fine-tuning loops.
//!
//! Step `s` draws all of its randomness from `stream_rng(seed, s)`, so a run
//! resumed from a checkpoint taken after step `s - 1` replays the same batches
//! and masks as the uninterrupted run.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::field::FloatField;
use crate::losses::{total_loss_with, LossConfig, LossValue};
use crate::masking::{dual_mask, sample_spatial_mask};
use crate::math;
use crate::metrics::{argmax, classification_metrics, ClassificationMetrics, ConfusionMatrix};
use crate::model::{
    backward, backward_classify, backward_pooled, classify_pooled, forward_classify, forward_mim,
    layerwise_lr_multipliers, ModelState,
};
use crate::optim::{adam_step, cosine_lr, AdamConfig, LrSchedule};
use crate::probe::{probe_features, Standardizer};
use crate::rng::{derive_seed, stream_rng};
use crate::sampling::{augment, label_subset, organ_weights, sample_index, AugmentConfig, DatasetManifest};
use crate::spectral::{sample_freq_mask, FreqMask, FreqMaskConfig};
use crate::{Error, Result};

/// Loads training images by manifest path.
pub trait ImageSource {
    fn load(&mut self, path: &str) -> Result<FloatField>;
}

/// An in-memory [`ImageSource`].
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    images: BTreeMap<String, FloatField>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, field: FloatField) {
        self.images.insert(path.into(), field);
    }
}

impl ImageSource for MemorySource {
    fn load(&mut self, path: &str) -> Result<FloatField> {
        self.images
            .get(path)
            .cloned()
            .ok_or_else(|| Error::Source(format!("no image at {path}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pretrain,
    FinetuneFull,
    FinetuneFrozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub l1_masked_only: bool,
    pub mask_ratio: f64,
    pub freq: FreqMaskConfig,
    /// When false every frequency mask keeps all bins (spatial-only masking).
    pub freq_masking: bool,
    pub seed: u64,
    pub label_fraction: f64,
    pub val_fraction: f64,
    pub layer_decay: f64,
    pub eval_every: usize,
    /// Zero disables periodic checkpoints; the final state is always reported.
    pub checkpoint_every: usize,
    pub augment: AugmentConfig,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Pretrain,
            steps: 200,
            batch_size: 8,
            base_lr: 1e-3,
            warmup_steps: 20,
            lambda: 0.4,
            alpha: 1.0,
            l1_masked_only: false,
            mask_ratio: 0.4,
            freq: FreqMaskConfig::default(),
            freq_masking: true,
            seed: 0,
            label_fraction: 1.0,
            val_fraction: 0.2,
            layer_decay: 0.75,
            eval_every: 50,
            checkpoint_every: 0,
            augment: AugmentConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("train: {what}")));
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return bad("steps, batch_size and eval_every must be positive");
        }
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return bad("base_lr must be finite and non-negative");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad("mask_ratio must lie in [0, 1]");
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return bad("label_fraction must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if !(self.layer_decay > 0.0 && self.layer_decay <= 1.0) {
            return bad("layer_decay must lie in (0, 1]");
        }
        self.freq.validate()?;
        self.augment.validate()
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            warmup_steps: self.warmup_steps,
            total_steps: self.steps,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            alpha: self.alpha,
            l1_masked_only: self.l1_masked_only,
        }
    }
}

/// Loss and learning rate of one optimizer step, measured before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: LossValue,
}

/// Hooks called by the training loops.
pub trait Observer {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called with the number of completed steps.
    fn on_checkpoint(&mut self, _completed: usize, _state: &ModelState) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    /// `(completed steps, validation accuracy)` for fine-tuning runs.
    pub validation: Vec<(usize, f64)>,
    pub best_step: Option<usize>,
    pub val_metrics: Option<ClassificationMetrics>,
    pub train_metrics: Option<ClassificationMetrics>,
}

impl TrainReport {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            validation: Vec::new(),
            best_step: None,
            val_metrics: None,
            train_metrics: None,
        }
    }

    pub fn lr_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lr).collect()
    }

    pub fn loss_series(&self) -> Vec<LossValue> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

/// One reconstruction example: the clean target, the dual-masked input and
/// the pixels covered by the spatial mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample {
    pub target: FloatField,
    pub input: FloatField,
    pub masked_pixels: Vec<bool>,
}

fn draw_masks<R: Rng + ?Sized>(rng: &mut R, cfg: &TrainConfig, size: usize, patch: usize) -> Result<(crate::masking::SpatialMask, FreqMask)> {
    let grid = size / patch;
    let smask = sample_spatial_mask(rng, grid, grid, patch, cfg.mask_ratio)?;
    let fmask = if cfg.freq_masking {
        sample_freq_mask(rng, &cfg.freq, size, size)?
    } else {
        FreqMask::all_keep(size, size)?
    };
    Ok((smask, fmask))
}

fn masked_sample<R: Rng + ?Sized>(rng: &mut R, target: FloatField, cfg: &TrainConfig, patch: usize) -> Result<MaskedSample> {
    let size = target.height();
    let (smask, fmask) = draw_masks(rng, cfg, size, patch)?;
    let (input, _) = dual_mask(&target, &smask, &fmask)?;
    Ok(MaskedSample {
        target,
        input,
        masked_pixels: smask.pixel_mask(),
    })
}

fn check_image_size(state: &ModelState, aug: &AugmentConfig) -> Result<()> {
    if aug.out_size != state.config.image_size {
        return Err(Error::GeometryMismatch(format!(
            "augment out_size {} but model image_size {}",
            aug.out_size, state.config.image_size
        )));
    }
    Ok(())
}

/// The batch of step `step`: weighted draws, augmentation and fresh masks per
/// image.
pub fn pretrain_batch(
    cfg: &TrainConfig,
    state: &ModelState,
    manifest: &DatasetManifest,
    source: &mut dyn ImageSource,
    step: usize,
) -> Result<Vec<MaskedSample>> {
    let weights = organ_weights(manifest)?;
    let mut rng = stream_rng(cfg.seed, step as u64);
    (0..cfg.batch_size)
        .map(|_| {
            let (o, i) = sample_index(&mut rng, manifest, &weights);
            let raw = source.load(&manifest.entry(o, i).path)?;
            let target = augment(&raw, &mut rng, &cfg.augment)?;
            masked_sample(&mut rng, target, cfg, state.config.patch_size)
        })
        .collect()
}

/// Batch-mean loss and one Adam step on a batch of masked samples.
pub fn pretrain_step(state: &mut ModelState, batch: &[MaskedSample], cfg: &TrainConfig, lr: f64, step: usize) -> Result<LossValue> {
    let inputs: Vec<FloatField> = batch.iter().map(|s| s.input.clone()).collect();
    let (recs, acts) = forward_mim(state, &inputs)?;
    let loss_cfg = cfg.loss();
    let scale = 1.0 / batch.len() as f64;
    let mut values = Vec::with_capacity(batch.len());
    let mut upstream = Vec::with_capacity(batch.len());
    for (rec, s) in recs.iter().zip(batch) {
        let (v, mut g) = total_loss_with(rec, &s.target, &loss_cfg, Some(&s.masked_pixels))?;
        g.data_mut().iter_mut().for_each(|x| *x *= scale);
        values.push(v);
        upstream.push(g);
    }
    let loss = LossValue::mean(&values);
    if !loss.total.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    let bw = backward(state, &acts, &upstream)?;
    adam_step(state, &bw.grads, lr, None, &cfg.adam)?;
    Ok(loss)
}

/// Runs pre-training steps `start_step..cfg.steps` on `state`.
pub fn pretrain(
    cfg: &TrainConfig,
    mut state: ModelState,
    start_step: usize,
    manifest: &DatasetManifest,
    source: &mut dyn ImageSource,
    observer: &mut dyn Observer,
) -> Result<(ModelState, TrainReport)> {
    cfg.validate()?;
    state.validate()?;
    check_image_size(&state, &cfg.augment)?;
    let sched = cfg.schedule();
    let mut report = TrainReport::new();
    for step in start_step..cfg.steps {
        let batch = pretrain_batch(cfg, &state, manifest, source, step)?;
        let lr = cosine_lr(step, &sched);
        let loss = pretrain_step(&mut state, &batch, cfg, lr, step)?;
        let record = StepRecord { step, lr, loss };
        observer.on_step(&record)?;
        report.records.push(record);
        let done = step + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps {
            observer.on_checkpoint(done, &state)?;
        }
    }
    observer.on_checkpoint(cfg.steps.max(start_step), &state)?;
    Ok((state, report))
}

/// A fixed evaluation set: `n` images in manifest order (cycled), prepared
/// with the evaluation pipeline and masked under `seed`.
pub fn reconstruction_set(
    cfg: &TrainConfig,
    patch: usize,
    manifest: &DatasetManifest,
    source: &mut dyn ImageSource,
    n: usize,
    seed: u64,
) -> Result<Vec<MaskedSample>> {
    let entries: Vec<&str> = manifest.iter().map(|(_, e)| e.path.as_str()).collect();
    let eval = AugmentConfig::eval(cfg.augment.out_size);
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|k| {
            let raw = source.load(entries[k % entries.len()])?;
            let target = augment(&raw, &mut rng, &eval)?;
            masked_sample(&mut rng, target, cfg, patch)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconScore {
    pub loss: LossValue,
    /// Mean absolute error over all pixels.
    pub l1: f64,
    /// Mean absolute error over spatially masked pixels.
    pub masked_l1: f64,
}

fn score(recs: &[FloatField], samples: &[MaskedSample], loss_cfg: &LossConfig) -> Result<ReconScore> {
    let mut values = Vec::with_capacity(samples.len());
    let (mut abs, mut count, mut mabs, mut mcount) = (0.0, 0usize, 0.0, 0usize);
    for (rec, s) in recs.iter().zip(samples) {
        let (v, _) = total_loss_with(rec, &s.target, loss_cfg, Some(&s.masked_pixels))?;
        values.push(v);
        for ((a, b), &m) in rec.data().iter().zip(s.target.data()).zip(&s.masked_pixels) {
            let d = (a - b).abs();
            abs += d;
            count += 1;
            if m {
                mabs += d;
                mcount += 1;
            }
        }
    }
    Ok(ReconScore {
        loss: LossValue::mean(&values),
        l1: abs / count.max(1) as f64,
        masked_l1: mabs / mcount.max(1) as f64,
    })
}

/// Scores the model's reconstructions of `samples`.
pub fn evaluate_reconstruction(state: &ModelState, samples: &[MaskedSample], loss_cfg: &LossConfig) -> Result<ReconScore> {
    let inputs: Vec<FloatField> = samples.iter().map(|s| s.input.clone()).collect();
    let (recs, _) = forward_mim(state, &inputs)?;
    score(&recs, samples, loss_cfg)
}

/// Scores the constant predictor that outputs each target's own mean.
pub fn mean_predictor_score(samples: &[MaskedSample], loss_cfg: &LossConfig) -> Result<ReconScore> {
    let recs: Vec<FloatField> = samples
        .iter()
        .map(|s| {
            let (h, w) = s.target.shape();
            FloatField::filled(h, w, crate::field::field_mean(&s.target))
        })
        .collect::<Result<_>>()?;
    score(&recs, samples, loss_cfg)
}

/// Labelled images with classes indexed in sorted label order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub classes: Vec<String>,
    pub items: Vec<(String, usize)>,
}

pub fn labeled_set(manifest: &DatasetManifest) -> Result<LabeledSet> {
    let mut classes: Vec<String> = Vec::new();
    for (_, e) in manifest.iter() {
        let label = e
            .label
            .as_ref()
            .ok_or_else(|| Error::LabelMismatch(format!("{} has no label", e.path)))?;
        if !classes.contains(label) {
            classes.push(label.clone());
        }
    }
    classes.sort();
    if classes.len() < 2 {
        return Err(Error::LabelMismatch("fine-tuning needs at least two classes".into()));
    }
    let items = manifest
        .iter()
        .map(|(_, e)| {
            let label = e.label.as_ref().expect("checked above");
            let class = classes.iter().position(|c| c == label).expect("collected above");
            (e.path.clone(), class)
        })
        .collect();
    Ok(LabeledSet { classes, items })
}

/// Per-class seeded split. Each class keeps at least one training item and
/// gives `ceil(val_fraction * n_class)` items (capped) to validation.
pub fn split_train_val(set: &LabeledSet, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream_rng(derive_seed(seed, 0x5b1), 0);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in 0..set.classes.len() {
        let mut members: Vec<usize> = (0..set.items.len()).filter(|&i| set.items[i].1 == class).collect();
        members.shuffle(&mut rng);
        let want = math::ceil(val_fraction * members.len() as f64 - 1e-9) as usize;
        let n_val = want.min(members.len().saturating_sub(1));
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    (train, val)
}

pub(crate) fn softmax_cross_entropy(scores: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| math::exp(s - max)).collect();
    let z: f64 = exps.iter().sum();
    let loss = math::ln(z) - (scores[target] - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(k, e)| e / z - if k == target { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

enum Features {
    Images(Vec<FloatField>),
    Pooled(Vec<Vec<f64>>),
}

impl Features {
    fn scores(&self, state: &ModelState, idx: &[usize]) -> Result<Vec<Vec<f64>>> {
        match self {
            Features::Images(imgs) => {
                let batch: Vec<FloatField> = idx.iter().map(|&i| imgs[i].clone()).collect();
                Ok(forward_classify(state, &batch, false)?.0)
            }
            Features::Pooled(p) => idx.iter().map(|&i| classify_pooled(state, &p[i])).collect(),
        }
    }
}

fn evaluate_split(state: &ModelState, feats: &Features, idx: &[usize], labels: &[usize]) -> Result<ClassificationMetrics> {
    let mut cm = ConfusionMatrix::new(state.config.num_classes);
    for chunk in idx.chunks(32) {
        for (scores, &i) in feats.scores(state, chunk)?.iter().zip(chunk) {
            cm.add(labels[i], argmax(scores))?;
        }
    }
    classification_metrics(&cm)
}

/// Rewrites a head trained on standardized features so that it applies to
/// raw pooled features: `W' = W diag(1/sd)`, `b' = b - W' mean`.
fn fold_standardization(state: &ModelState, z: &Standardizer) -> ModelState {
    let mut out = state.clone();
    let d = state.config.embed_dim;
    let wi = out.param_index("classifier.weight").expect("head present");
    let bi = out.param_index("classifier.bias").expect("head present");
    let mut shifts = Vec::with_capacity(state.config.num_classes);
    let w = out.param_data_mut(wi);
    for row in w.chunks_mut(d) {
        let mut shift = 0.0;
        for ((w, s), m) in row.iter_mut().zip(&z.inv_std).zip(&z.mean) {
            *w *= s;
            shift += *w * m;
        }
        shifts.push(shift);
    }
    out.param_data_mut(bi).iter_mut().zip(&shifts).for_each(|(b, s)| *b -= s);
    out
}

/// Fine-tunes `state` on the labelled manifest. Full mode trains encoder and
/// head with layer-wise learning-rate multipliers. Frozen mode trains only the
/// head on cached pooled features standardized with training-split
/// statistics, then folds the standardization into the head. Returns the
/// state with the best validation accuracy (earliest on ties).
pub fn finetune(
    cfg: &TrainConfig,
    state: ModelState,
    manifest: &DatasetManifest,
    source: &mut dyn ImageSource,
    observer: &mut dyn Observer,
) -> Result<(ModelState, TrainReport)> {
    cfg.validate()?;
    state.validate()?;
    check_image_size(&state, &cfg.augment)?;
    let set = labeled_set(manifest)?;
    let k = set.classes.len();
    let mut state = if state.has_classifier() {
        if state.config.num_classes != k {
            return Err(Error::LabelMismatch(format!(
                "checkpoint head has {} classes, data has {k}",
                state.config.num_classes
            )));
        }
        state
    } else {
        state.with_classifier(k, &mut stream_rng(derive_seed(cfg.seed, 0xc1a5), 0))?
    };
    let frozen = match cfg.mode {
        Mode::FinetuneFrozen => true,
        Mode::FinetuneFull => false,
        Mode::Pretrain => return Err(Error::InvalidConfig("finetune needs a finetune mode".into())),
    };
    if frozen {
        state.freeze_backbone();
    } else {
        state.set_frozen_where(|p| p.name.starts_with("decoder."));
    }

    let (train_all, val) = split_train_val(&set, cfg.val_fraction, cfg.seed);
    let subset = label_subset(train_all.len(), cfg.label_fraction, cfg.seed)?;
    let train: Vec<usize> = subset.iter().map(|&i| train_all[i]).collect();
    let labels: Vec<usize> = set.items.iter().map(|(_, c)| *c).collect();

    let eval_aug = AugmentConfig::eval(cfg.augment.out_size);
    let mut images = Vec::with_capacity(set.items.len());
    let mut rng = stream_rng(cfg.seed, u64::MAX);
    for (path, _) in &set.items {
        images.push(augment(&source.load(path)?, &mut rng, &eval_aug)?);
    }
    let mut standardizer = None;
    let feats = if frozen {
        let pooled = probe_features(&state, &images)?;
        let train_rows: Vec<Vec<f64>> = train.iter().map(|&i| pooled[i].clone()).collect();
        let z = Standardizer::fit(&train_rows);
        let out = Features::Pooled(pooled.iter().map(|p| z.apply(p)).collect());
        standardizer = Some(z);
        out
    } else {
        Features::Images(images)
    };
    let export = |s: &ModelState| match &standardizer {
        Some(z) => fold_standardization(s, z),
        None => s.clone(),
    };
    let multipliers = if frozen {
        None
    } else {
        Some(layerwise_lr_multipliers(&state, cfg.layer_decay)?)
    };

    let sched = cfg.schedule();
    let mut report = TrainReport::new();
    let mut best: Option<(f64, usize, ModelState)> = None;
    let val_or_train = if val.is_empty() { &train } else { &val };
    for step in 0..cfg.steps {
        let mut rng = stream_rng(cfg.seed, step as u64);
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| train[rng.gen_range(0..train.len())]).collect();
        let scale = 1.0 / idx.len() as f64;
        let mut total = 0.0;
        let mut d_scores = Vec::with_capacity(idx.len());
        let grads = match &feats {
            Features::Images(imgs) => {
                let batch: Vec<FloatField> = idx.iter().map(|&i| imgs[i].clone()).collect();
                let (scores, acts) = forward_classify(&state, &batch, false)?;
                for (s, &i) in scores.iter().zip(&idx) {
                    let (l, mut g) = softmax_cross_entropy(s, labels[i]);
                    total += l * scale;
                    g.iter_mut().for_each(|x| *x *= scale);
                    d_scores.push(g);
                }
                backward_classify(&state, &acts, &d_scores)?.grads
            }
            Features::Pooled(p) => {
                let pooled: Vec<Vec<f64>> = idx.iter().map(|&i| p[i].clone()).collect();
                for (f, &i) in pooled.iter().zip(&idx) {
                    let (l, mut g) = softmax_cross_entropy(&classify_pooled(&state, f)?, labels[i]);
                    total += l * scale;
                    g.iter_mut().for_each(|x| *x *= scale);
                    d_scores.push(g);
                }
                backward_pooled(&state, &pooled, &d_scores)?
            }
        };
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let lr = cosine_lr(step, &sched);
        adam_step(&mut state, &grads, lr, multipliers.as_deref(), &cfg.adam)?;
        let record = StepRecord {
            step,
            lr,
            loss: LossValue {
                total,
                spatial: total,
                frequency: 0.0,
                lambda: 0.0,
            },
        };
        observer.on_step(&record)?;
        report.records.push(record);
        let done = step + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            let acc = evaluate_split(&state, &feats, val_or_train, &labels)?.accuracy;
            report.validation.push((done, acc));
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, done, state.clone()));
            }
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps {
            observer.on_checkpoint(done, &export(&state))?;
        }
    }
    let (_, best_step, best_state) = best.expect("at least one evaluation runs");
    report.best_step = Some(best_step);
    report.val_metrics = Some(evaluate_split(&best_state, &feats, val_or_train, &labels)?);
    report.train_metrics = Some(evaluate_split(&best_state, &feats, &train, &labels)?);
    let best_state = export(&best_state);
    observer.on_checkpoint(best_step, &best_state)?;
    Ok((best_state, report))
}
