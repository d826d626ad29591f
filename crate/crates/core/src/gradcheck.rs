//! Central finite-difference checks of every analytic gradient.
//!
//! The focal weight map is treated as a constant, so the finite-difference
//! objective recomputes the frequency term with the map from the unperturbed
//! point. Targets are placed away from the reconstruction so that no L1 kink
//! lies within one step of the evaluation point.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::field::FloatField;
use crate::losses::{focal_freq_loss, focal_weight_map, l1_spatial, pullback_through_dft, total_loss_with, LossConfig};
use crate::model::{backward, backward_classify, forward_classify, forward_mim, init_model, ModelConfig, ModelState};
use crate::rng::{standard_normal, stream_rng};
use crate::spectral::{dft2, Layout, Spectrum};
use crate::trainer::softmax_cross_entropy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    L1,
    Focal,
    FocalPixels,
    Total,
    Model,
    Classifier,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::L1,
        Component::Focal,
        Component::FocalPixels,
        Component::Total,
        Component::Model,
        Component::Classifier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::L1 => "l1",
            Component::Focal => "focal",
            Component::FocalPixels => "focal-pixels",
            Component::Total => "total",
            Component::Model => "model",
            Component::Classifier => "classifier",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    fn uses_frequency(self) -> bool {
        matches!(self, Component::Focal | Component::FocalPixels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub model: ModelConfig,
    pub lambda: f64,
    pub alpha: f64,
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub loss_threshold: f64,
    pub model_threshold: f64,
    pub batch: usize,
    pub seed: u64,
    /// Test hook: perturbs the largest analytic entry of one component.
    pub corrupt: Option<Component>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                image_size: 8,
                patch_size: 4,
                embed_dim: 8,
                depth: 2,
                decoder_depth: 1,
                heads: 2,
                mlp_ratio: 2.0,
                num_classes: 3,
                layer_norm: true,
            },
            lambda: 0.4,
            alpha: 1.0,
            step: 1e-5,
            floor: 1e-6,
            loss_threshold: 1e-5,
            model_threshold: 1e-4,
            batch: 2,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    pub component: Component,
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
    pub threshold: f64,
    pub skipped: Option<&'static str>,
}

impl ComponentReport {
    pub fn passed(&self) -> bool {
        self.skipped.is_some() || self.worst < self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub components: Vec<ComponentReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(ComponentReport::passed)
    }

    pub fn get(&self, c: Component) -> Option<&ComponentReport> {
        self.components.iter().find(|r| r.component == c)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

struct Tally {
    worst: f64,
    worst_at: String,
    checked: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            worst: 0.0,
            worst_at: String::new(),
            checked: 0,
        }
    }

    fn add(&mut self, analytic: f64, numeric: f64, floor: f64, at: impl FnOnce() -> String) {
        let e = relative_error(analytic, numeric, floor);
        self.checked += 1;
        if e > self.worst || self.worst_at.is_empty() {
            self.worst = e;
            self.worst_at = at();
        }
    }
}

fn corrupt_largest(values: &mut [f64]) {
    if let Some((i, _)) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    {
        values[i] = values[i] * 1.01 + 1e-3;
    }
}

fn random_field<R: Rng>(rng: &mut R, n: usize) -> FloatField {
    FloatField::from_fn(n, n, |_, _| rng.gen::<f64>()).expect("finite")
}

/// A target at least 0.05 away from `rec` in every pixel.
fn offset_target<R: Rng>(rng: &mut R, rec: &FloatField) -> FloatField {
    let data = rec
        .data()
        .iter()
        .map(|&v| {
            let d = 0.05 + 0.3 * rng.gen::<f64>();
            if rng.gen::<bool>() {
                v + d
            } else {
                v - d
            }
        })
        .collect();
    FloatField::new(rec.height(), rec.width(), data).expect("finite")
}

/// Frequency term with a fixed weight map.
fn fixed_focal(rec: &FloatField, target: &Spectrum, weights: &FloatField) -> f64 {
    let s = dft2(rec);
    let n = rec.len() as f64;
    s.real()
        .iter()
        .zip(s.imag())
        .zip(target.real().iter().zip(target.imag()))
        .zip(weights.data())
        .map(|(((a, b), (c, d)), w)| w * ((a - c) * (a - c) + (b - d) * (b - d)))
        .sum::<f64>()
        / n
}

struct Objective {
    target: FloatField,
    spectrum: Spectrum,
    weights: FloatField,
}

impl Objective {
    fn new(rec: &FloatField, target: FloatField, alpha: f64) -> Result<Self> {
        let spectrum = dft2(&target);
        let weights = focal_weight_map(&dft2(rec), &spectrum, alpha)?;
        Ok(Self {
            target,
            spectrum,
            weights,
        })
    }

    fn value(&self, rec: &FloatField, lambda: f64) -> f64 {
        let l1 = rec
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / rec.len() as f64;
        let freq = if lambda > 0.0 {
            fixed_focal(rec, &self.spectrum, &self.weights)
        } else {
            0.0
        };
        l1 + lambda * freq
    }
}

fn perturbed(field: &FloatField, i: usize, delta: f64) -> FloatField {
    let mut d = field.data().to_vec();
    d[i] += delta;
    FloatField::new(field.height(), field.width(), d).expect("finite")
}

fn check_pixels(
    cfg: &GradcheckConfig,
    component: Component,
    rec: &FloatField,
    obj: &Objective,
    lambda: f64,
    mut analytic: Vec<f64>,
) -> ComponentReport {
    if cfg.corrupt == Some(component) {
        corrupt_largest(&mut analytic);
    }
    let h = cfg.step;
    let mut t = Tally::new();
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = (obj.value(&perturbed(rec, i, h), lambda) - obj.value(&perturbed(rec, i, -h), lambda)) / (2.0 * h);
        t.add(a, numeric, cfg.floor, || format!("pixel {i}"));
    }
    ComponentReport {
        component,
        checked: t.checked,
        worst: t.worst,
        worst_at: t.worst_at,
        threshold: cfg.loss_threshold,
        skipped: None,
    }
}

fn check_focal_spectrum(cfg: &GradcheckConfig, rec: &FloatField, obj: &Objective) -> Result<ComponentReport> {
    let f_rec = dft2(rec);
    let (_, grad) = focal_freq_loss(&f_rec, &obj.spectrum, cfg.alpha)?;
    let mut analytic: Vec<f64> = grad.real().iter().chain(grad.imag()).copied().collect();
    if cfg.corrupt == Some(Component::Focal) {
        corrupt_largest(&mut analytic);
    }
    let n = f_rec.real().len();
    let value = |re: &[f64], im: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            let (dr, di) = (re[i] - obj.spectrum.real()[i], im[i] - obj.spectrum.imag()[i]);
            s += obj.weights.data()[i] * (dr * dr + di * di);
        }
        s / n as f64
    };
    // Spectrum bins are O(HW) in size; scale the step to match.
    let h = cfg.step * n as f64;
    let mut t = Tally::new();
    for (k, &a) in analytic.iter().enumerate() {
        let (mut re, mut im) = (f_rec.real().to_vec(), f_rec.imag().to_vec());
        let slot = |re: &mut Vec<f64>, im: &mut Vec<f64>, d: f64| {
            if k < n {
                re[k] += d;
            } else {
                im[k - n] += d;
            }
        };
        slot(&mut re, &mut im, h);
        let plus = value(&re, &im);
        slot(&mut re, &mut im, -2.0 * h);
        let minus = value(&re, &im);
        let part = if k < n { "re" } else { "im" };
        t.add(a, (plus - minus) / (2.0 * h), cfg.floor, || format!("bin {} {part}", k % n));
    }
    Ok(ComponentReport {
        component: Component::Focal,
        checked: t.checked,
        worst: t.worst,
        worst_at: t.worst_at,
        threshold: cfg.loss_threshold,
        skipped: None,
    })
}

fn jitter_state(state: &mut ModelState, seed: u64) {
    let mut rng = stream_rng(seed, 7);
    for i in 0..state.params.len() {
        for v in state.param_data_mut(i) {
            *v += 0.2 * standard_normal(&mut rng);
        }
    }
}

fn check_params(
    cfg: &GradcheckConfig,
    component: Component,
    state: &mut ModelState,
    mut analytic: Vec<Vec<f64>>,
    loss: &dyn Fn(&ModelState) -> Result<f64>,
) -> Result<ComponentReport> {
    if cfg.corrupt == Some(component) {
        let mut flat: Vec<f64> = analytic.iter().flatten().copied().collect();
        corrupt_largest(&mut flat);
        let mut it = flat.into_iter();
        for g in analytic.iter_mut().flatten() {
            *g = it.next().expect("same length");
        }
    }
    let h = cfg.step;
    let mut t = Tally::new();
    for (p, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = state.params[p].data[j];
            state.param_data_mut(p)[j] = orig + h;
            let plus = loss(state)?;
            state.param_data_mut(p)[j] = orig - h;
            let minus = loss(state)?;
            state.param_data_mut(p)[j] = orig;
            let name = &state.params[p].name;
            t.add(a, (plus - minus) / (2.0 * h), cfg.floor, || format!("{name}[{j}]"));
        }
    }
    Ok(ComponentReport {
        component,
        checked: t.checked,
        worst: t.worst,
        worst_at: t.worst_at,
        threshold: cfg.model_threshold,
        skipped: None,
    })
}

fn check_model(cfg: &GradcheckConfig, state: &mut ModelState) -> Result<ComponentReport> {
    let mut rng = stream_rng(cfg.seed, 3);
    let n = cfg.model.image_size;
    let inputs: Vec<FloatField> = (0..cfg.batch).map(|_| random_field(&mut rng, n)).collect();
    let (recs, acts) = forward_mim(state, &inputs)?;
    let objectives: Vec<Objective> = recs
        .iter()
        .map(|r| Objective::new(r, offset_target(&mut rng, r), cfg.alpha))
        .collect::<Result<_>>()?;
    let loss_cfg = LossConfig {
        lambda: cfg.lambda,
        alpha: cfg.alpha,
        l1_masked_only: false,
    };
    let scale = 1.0 / cfg.batch as f64;
    let mut upstream = Vec::with_capacity(cfg.batch);
    for (r, o) in recs.iter().zip(&objectives) {
        let (_, mut g) = total_loss_with(r, &o.target, &loss_cfg, None)?;
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
        upstream.push(g);
    }
    let analytic = backward(state, &acts, &upstream)?.grads.grads;
    let lambda = cfg.lambda;
    let loss = |s: &ModelState| -> Result<f64> {
        let (recs, _) = forward_mim(s, &inputs)?;
        Ok(recs.iter().zip(&objectives).map(|(r, o)| o.value(r, lambda)).sum::<f64>() * scale)
    };
    check_params(cfg, Component::Model, state, analytic, &loss)
}

fn check_classifier(cfg: &GradcheckConfig, state: &mut ModelState) -> Result<ComponentReport> {
    let mut rng = stream_rng(cfg.seed, 4);
    let n = cfg.model.image_size;
    let k = cfg.model.num_classes;
    let inputs: Vec<FloatField> = (0..cfg.batch).map(|_| random_field(&mut rng, n)).collect();
    let labels: Vec<usize> = (0..cfg.batch).map(|_| rng.gen_range(0..k)).collect();
    let scale = 1.0 / cfg.batch as f64;
    let (scores, acts) = forward_classify(state, &inputs, false)?;
    let d_scores: Vec<Vec<f64>> = scores
        .iter()
        .zip(&labels)
        .map(|(s, &y)| softmax_cross_entropy(s, y).1.into_iter().map(|g| g * scale).collect())
        .collect();
    let analytic = backward_classify(state, &acts, &d_scores)?.grads.grads;
    let loss = |s: &ModelState| -> Result<f64> {
        let (scores, _) = forward_classify(s, &inputs, false)?;
        Ok(scores
            .iter()
            .zip(&labels)
            .map(|(sc, &y)| softmax_cross_entropy(sc, y).0)
            .sum::<f64>()
            * scale)
    };
    check_params(cfg, Component::Classifier, state, analytic, &loss)
}

/// Runs every suite. With `lambda = 0` the frequency suites are skipped and
/// the composite suites check the spatial term alone.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.model.validate()?;
    if cfg.model.num_classes < 2 {
        return Err(Error::InvalidConfig("gradcheck needs a classifier with at least 2 classes".into()));
    }
    if !(cfg.step > 0.0 && cfg.floor > 0.0 && cfg.batch > 0) {
        return Err(Error::InvalidConfig("gradcheck step, floor and batch must be positive".into()));
    }
    let mut rng = stream_rng(cfg.seed, 1);
    let n = cfg.model.image_size;
    let rec = random_field(&mut rng, n);
    let target = offset_target(&mut rng, &rec);
    let obj = Objective::new(&rec, target, cfg.alpha)?;
    let mut components = Vec::new();

    let (_, g_l1) = l1_spatial(&rec, &obj.target)?;
    components.push(check_pixels(cfg, Component::L1, &rec, &obj, 0.0, g_l1.into_data()));

    if cfg.lambda > 0.0 {
        components.push(check_focal_spectrum(cfg, &rec, &obj)?);
        let (_, g_spec) = focal_freq_loss(&dft2(&rec), &obj.spectrum, cfg.alpha)?;
        debug_assert_eq!(g_spec.layout(), Layout::Natural);
        let g_pix = pullback_through_dft(&g_spec)?;
        // Checked as l1 + freq at unit weight; the l1 part is verified on its own above.
        let (_, g_l1) = l1_spatial(&rec, &obj.target)?;
        let combined: Vec<f64> = g_pix.data().iter().zip(g_l1.data()).map(|(a, b)| a + b).collect();
        components.push(check_pixels(cfg, Component::FocalPixels, &rec, &obj, 1.0, combined));
    } else {
        for c in Component::ALL.into_iter().filter(|c| c.uses_frequency()) {
            components.push(ComponentReport {
                component: c,
                checked: 0,
                worst: 0.0,
                worst_at: String::new(),
                threshold: cfg.loss_threshold,
                skipped: Some("lambda = 0, frequency gradient not used"),
            });
        }
    }

    let loss_cfg = LossConfig {
        lambda: cfg.lambda,
        alpha: cfg.alpha,
        l1_masked_only: false,
    };
    let (_, g_total) = total_loss_with(&rec, &obj.target, &loss_cfg, None)?;
    components.push(check_pixels(cfg, Component::Total, &rec, &obj, cfg.lambda, g_total.into_data()));

    let mut state = init_model(&cfg.model, &mut stream_rng(cfg.seed, 2))?;
    jitter_state(&mut state, cfg.seed);
    components.push(check_model(cfg, &mut state)?);
    components.push(check_classifier(cfg, &mut state)?);
    Ok(GradcheckReport { components })
}
