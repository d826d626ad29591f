//! A small vision-transformer encoder/decoder for dense masked reconstruction,
//! with an optional linear classification head.
//!
//! Every learnable tensor lives in [`ModelState::params`] with a name, a shape
//! and a layer index: patch embedding is layer 0, encoder block `i` is layer
//! `i + 1` (the final encoder norm shares the last block's index), and
//! everything above the encoder (decoder blocks, reconstruction head,
//! classification head) sits at `depth + 1` or higher.

mod network;
mod ops;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::math;
use crate::rng::truncated_normal;
use crate::{Error, Result};

pub use network::{
    backward, backward_classify, backward_features, backward_pooled, classify, classify_pooled, decode, encode,
    extract_features, forward_classify, forward_mim, pooled_features, Activations, Backward, FeatureMap,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub decoder_depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    /// Classification head width; 0 leaves the head out.
    pub num_classes: usize,
    /// When false, every layer norm reduces to its affine part.
    pub layer_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            embed_dim: 64,
            depth: 2,
            decoder_depth: 1,
            heads: 4,
            mlp_ratio: 4.0,
            num_classes: 0,
            layer_norm: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.image_size == 0 || self.patch_size == 0 || self.embed_dim == 0 || self.heads == 0 {
            return bad("image size, patch size, embed dim and heads must be at least 1".into());
        }
        if self.depth == 0 || self.decoder_depth == 0 {
            return bad("encoder and decoder depth must be at least 1".into());
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return bad(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "embed dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if !(self.mlp_ratio > 0.0) || self.hidden_dim() == 0 {
            return bad("mlp ratio must give a positive hidden width".into());
        }
        if self.num_classes == 1 {
            return bad("a classification head needs at least 2 classes".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn hidden_dim(&self) -> usize {
        math::round(self.embed_dim as f64 * self.mlp_ratio) as usize
    }

    /// Layer index of the first parameter group above the encoder.
    pub fn head_layer(&self) -> usize {
        self.depth + 1
    }
}

/// One named tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub layer: usize,
    pub frozen: bool,
    pub data: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Adam first and second moments for every parameter plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

/// Parameters, optimizer moments and a version counter bumped on every update.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Vec<Param>,
    pub optimizer: OptimizerState,
    version: u64,
}

/// The version counter only guards activation reuse and is not compared.
impl PartialEq for ModelState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.optimizer == other.optimizer
    }
}

/// Gradients aligned with [`ModelState::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(state: &ModelState) -> Self {
        Self {
            grads: state.params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// `self += other * scale`
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            *g *= s;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.grads.iter().flatten().copied().collect()
    }
}

/// Parameter indices of one transformer block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockIdx(usize);

impl BlockIdx {
    pub const LEN: usize = 12;
    pub fn norm1_g(self) -> usize {
        self.0
    }
    pub fn norm1_b(self) -> usize {
        self.0 + 1
    }
    pub fn qkv_w(self) -> usize {
        self.0 + 2
    }
    pub fn qkv_b(self) -> usize {
        self.0 + 3
    }
    pub fn proj_w(self) -> usize {
        self.0 + 4
    }
    pub fn proj_b(self) -> usize {
        self.0 + 5
    }
    pub fn norm2_g(self) -> usize {
        self.0 + 6
    }
    pub fn norm2_b(self) -> usize {
        self.0 + 7
    }
    pub fn fc1_w(self) -> usize {
        self.0 + 8
    }
    pub fn fc1_b(self) -> usize {
        self.0 + 9
    }
    pub fn fc2_w(self) -> usize {
        self.0 + 10
    }
    pub fn fc2_b(self) -> usize {
        self.0 + 11
    }
}

/// Index arithmetic over the flat parameter list.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    depth: usize,
    decoder_depth: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            depth: cfg.depth,
            decoder_depth: cfg.decoder_depth,
        }
    }
    pub const PATCH_W: usize = 0;
    pub const PATCH_B: usize = 1;
    pub const POS: usize = 2;
    pub fn enc_block(self, i: usize) -> BlockIdx {
        BlockIdx(3 + i * BlockIdx::LEN)
    }
    pub fn enc_norm_g(self) -> usize {
        3 + self.depth * BlockIdx::LEN
    }
    pub fn enc_norm_b(self) -> usize {
        self.enc_norm_g() + 1
    }
    pub fn dec_block(self, j: usize) -> BlockIdx {
        BlockIdx(self.enc_norm_g() + 2 + j * BlockIdx::LEN)
    }
    pub fn dec_norm_g(self) -> usize {
        self.enc_norm_g() + 2 + self.decoder_depth * BlockIdx::LEN
    }
    pub fn dec_norm_b(self) -> usize {
        self.dec_norm_g() + 1
    }
    pub fn head_w(self) -> usize {
        self.dec_norm_g() + 2
    }
    pub fn head_b(self) -> usize {
        self.dec_norm_g() + 3
    }
    pub fn cls_w(self) -> usize {
        self.dec_norm_g() + 4
    }
    pub fn cls_b(self) -> usize {
        self.dec_norm_g() + 5
    }
    /// Everything that feeds the encoder output.
    pub fn encoder_range(self) -> core::ops::Range<usize> {
        0..self.enc_norm_b() + 1
    }
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

fn block_params(prefix: &str, layer: usize, d: usize, hidden: usize) -> Vec<(String, Vec<usize>, usize, Init)> {
    let n = |s: &str| format!("{prefix}.{s}");
    vec![
        (n("norm1.gamma"), vec![d], layer, Init::Ones),
        (n("norm1.beta"), vec![d], layer, Init::Zeros),
        (n("attn.qkv.weight"), vec![3 * d, d], layer, Init::Normal),
        (n("attn.qkv.bias"), vec![3 * d], layer, Init::Zeros),
        (n("attn.proj.weight"), vec![d, d], layer, Init::Normal),
        (n("attn.proj.bias"), vec![d], layer, Init::Zeros),
        (n("norm2.gamma"), vec![d], layer, Init::Ones),
        (n("norm2.beta"), vec![d], layer, Init::Zeros),
        (n("mlp.fc1.weight"), vec![hidden, d], layer, Init::Normal),
        (n("mlp.fc1.bias"), vec![hidden], layer, Init::Zeros),
        (n("mlp.fc2.weight"), vec![d, hidden], layer, Init::Normal),
        (n("mlp.fc2.bias"), vec![d], layer, Init::Zeros),
    ]
}

fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, usize, Init)> {
    let d = cfg.embed_dim;
    let pp = cfg.patch_pixels();
    let hidden = cfg.hidden_dim();
    let mut specs = vec![
        ("patch_embed.weight".into(), vec![d, pp], 0, Init::Normal),
        ("patch_embed.bias".into(), vec![d], 0, Init::Zeros),
        ("pos_embed".into(), vec![cfg.tokens(), d], 0, Init::Normal),
    ];
    for i in 0..cfg.depth {
        specs.extend(block_params(&format!("encoder.{i}"), i + 1, d, hidden));
    }
    specs.push(("encoder.norm.gamma".into(), vec![d], cfg.depth, Init::Ones));
    specs.push(("encoder.norm.beta".into(), vec![d], cfg.depth, Init::Zeros));
    for j in 0..cfg.decoder_depth {
        specs.extend(block_params(&format!("decoder.{j}"), cfg.depth + 1 + j, d, hidden));
    }
    let top = cfg.depth + cfg.decoder_depth + 1;
    specs.push(("decoder.norm.gamma".into(), vec![d], top, Init::Ones));
    specs.push(("decoder.norm.beta".into(), vec![d], top, Init::Zeros));
    specs.push(("decoder.head.weight".into(), vec![pp, d], top, Init::Normal));
    specs.push(("decoder.head.bias".into(), vec![pp], top, Init::Zeros));
    if cfg.num_classes > 0 {
        let c = cfg.num_classes;
        specs.push(("classifier.weight".into(), vec![c, d], cfg.head_layer(), Init::Normal));
        specs.push(("classifier.bias".into(), vec![c], cfg.head_layer(), Init::Zeros));
    }
    specs
}

/// Closed-form parameter count.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    param_specs(cfg)
        .iter()
        .map(|(_, s, _, _)| s.iter().product::<usize>())
        .sum()
}

pub const INIT_STD: f64 = 0.02;

/// Truncated-normal (std 0.02) weights, zero biases, unit norm gains.
pub fn init_model<R: RngCore + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<ModelState> {
    cfg.validate()?;
    let params: Vec<Param> = param_specs(cfg)
        .into_iter()
        .map(|(name, shape, layer, init)| {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Normal => (0..n).map(|_| truncated_normal(rng, INIT_STD)).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            Param {
                name,
                shape,
                layer,
                frozen: false,
                data,
            }
        })
        .collect();
    Ok(ModelState::from_params(cfg.clone(), params))
}

impl ModelState {
    /// Assembles a state with fresh optimizer moments.
    pub fn from_params(config: ModelConfig, params: Vec<Param>) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            config,
            optimizer: OptimizerState {
                m: zeros.clone(),
                v: zeros,
                step: 0,
            },
            params,
            version: 0,
        }
    }

    /// Checks names, shapes, layer indices and finiteness against the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let specs = param_specs(&self.config);
        if specs.len() != self.params.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, found {}",
                specs.len(),
                self.params.len()
            )));
        }
        for ((name, shape, layer, _), p) in specs.iter().zip(&self.params) {
            if *name != p.name || *shape != p.shape || *layer != p.layer {
                return Err(Error::InvalidConfig(format!(
                    "parameter `{}` does not match the configuration",
                    p.name
                )));
            }
            if p.data.len() != shape.iter().product::<usize>() {
                return Err(Error::InvalidConfig(format!("parameter `{}` has wrong length", p.name)));
            }
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("parameter `{}` is not finite", p.name)));
            }
        }
        let opt = &self.optimizer;
        if opt.m.len() != self.params.len() || opt.v.len() != self.params.len() {
            return Err(Error::InvalidConfig("optimizer moments do not match parameters".into()));
        }
        for ((m, v), p) in opt.m.iter().zip(&opt.v).zip(&self.params) {
            if m.len() != p.len() || v.len() != p.len() {
                return Err(Error::InvalidConfig(format!(
                    "optimizer moments for `{}` have wrong length",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version = self.version.wrapping_add(1);
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Mutable access to parameter data. Bumps the version, invalidating
    /// retained activations.
    pub fn param_data_mut(&mut self, index: usize) -> &mut [f64] {
        self.bump_version();
        &mut self.params[index].data
    }

    pub fn max_layer(&self) -> usize {
        self.params.iter().map(|p| p.layer).max().unwrap_or(0)
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub(crate) fn p(&self, index: usize) -> &[f64] {
        &self.params[index].data
    }

    pub fn set_frozen_where(&mut self, mut pred: impl FnMut(&Param) -> bool) {
        for p in &mut self.params {
            p.frozen = pred(p);
        }
    }

    /// Freezes everything except the classification head.
    pub fn freeze_backbone(&mut self) {
        self.set_frozen_where(|p| !p.name.starts_with("classifier."));
    }

    /// Whether this state carries a classification head.
    pub fn has_classifier(&self) -> bool {
        self.config.num_classes > 0
    }

    /// Adds (or replaces) a classification head, keeping every other tensor.
    pub fn with_classifier<R: RngCore + ?Sized>(&self, num_classes: usize, rng: &mut R) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.num_classes = num_classes;
        cfg.validate()?;
        let mut fresh = init_model(&cfg, rng)?;
        let keep = Layout::new(&self.config).cls_w();
        for (dst, src) in fresh.params.iter_mut().zip(&self.params).take(keep) {
            dst.data.clone_from(&src.data);
        }
        Ok(fresh)
    }
}

/// Learning-rate multiplier per parameter: `decay^(L - layer)` with
/// `L = depth + 1`; everything at or above `L` gets 1.
pub fn layerwise_lr_multipliers(state: &ModelState, decay: f64) -> Result<Vec<f64>> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::InvalidConfig(format!("layer decay {decay} outside (0, 1]")));
    }
    let top = state.config.head_layer();
    Ok(state
        .params
        .iter()
        .map(|p| {
            let gap = top.saturating_sub(p.layer);
            math::powi(decay, gap as i32)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn same_seed_same_state() {
        let cfg = ModelConfig::default();
        let a = init_model(&cfg, &mut stream_rng(1, 0)).unwrap();
        let b = init_model(&cfg, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn closed_form_param_count() {
        let cfg = ModelConfig {
            image_size: 224,
            patch_size: 16,
            embed_dim: 64,
            depth: 2,
            decoder_depth: 1,
            heads: 4,
            mlp_ratio: 4.0,
            num_classes: 0,
            layer_norm: true,
        };
        let (d, pp, n, hid) = (64usize, 256usize, 196usize, 256usize);
        let block = 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (hid * d + hid) + (d * hid + d);
        let expected = (d * pp + d) + n * d + 3 * block + 2 * d + 2 * d + (pp * d + pp);
        assert_eq!(parameter_count(&cfg), expected);
        let state = init_model(&cfg, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(state.num_parameters(), expected);
    }

    #[test]
    fn config_errors() {
        let mut cfg = ModelConfig::default();
        cfg.heads = 3;
        assert!(matches!(init_model(&cfg, &mut stream_rng(0, 0)), Err(Error::InvalidConfig(_))));
        let mut cfg = ModelConfig::default();
        cfg.patch_size = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.num_classes = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn layer_indices_are_contiguous() {
        let cfg = ModelConfig {
            num_classes: 3,
            ..ModelConfig::default()
        };
        let s = init_model(&cfg, &mut stream_rng(0, 0)).unwrap();
        let mut layers: Vec<usize> = s.params.iter().map(|p| p.layer).collect();
        layers.sort_unstable();
        layers.dedup();
        assert_eq!(layers, (0..=s.max_layer()).collect::<Vec<_>>());
        assert_eq!(s.param("patch_embed.weight").unwrap().layer, 0);
        assert_eq!(s.param("encoder.1.mlp.fc2.bias").unwrap().layer, 2);
        assert_eq!(s.param("classifier.weight").unwrap().layer, 3);
    }

    #[test]
    fn multipliers() {
        let cfg = ModelConfig {
            depth: 1,
            num_classes: 2,
            ..ModelConfig::default()
        };
        let s = init_model(&cfg, &mut stream_rng(0, 0)).unwrap();
        let uniform = layerwise_lr_multipliers(&s, 1.0).unwrap();
        assert!(uniform.iter().all(|&m| m == 1.0));
        let m = layerwise_lr_multipliers(&s, 0.75).unwrap();
        let at = |name: &str| m[s.param_index(name).unwrap()];
        assert!((at("patch_embed.weight") - 0.5625).abs() < 1e-15);
        assert!((at("encoder.0.attn.qkv.weight") - 0.75).abs() < 1e-15);
        assert_eq!(at("classifier.weight"), 1.0);
        assert_eq!(at("decoder.head.weight"), 1.0);
        assert!(layerwise_lr_multipliers(&s, 0.0).is_err());
        assert!(layerwise_lr_multipliers(&s, 1.5).is_err());
    }

    #[test]
    fn multipliers_monotone_in_depth() {
        let cfg = ModelConfig {
            depth: 4,
            ..ModelConfig::default()
        };
        let s = init_model(&cfg, &mut stream_rng(0, 0)).unwrap();
        let m = layerwise_lr_multipliers(&s, 0.6).unwrap();
        let mut pairs: Vec<(usize, f64)> = s.params.iter().map(|p| p.layer).zip(m).collect();
        pairs.sort_by_key(|&(l, _)| l);
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
        let min = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        assert!(pairs.iter().filter(|p| p.1 == min).all(|p| p.0 == 0));
    }

    #[test]
    fn with_classifier_keeps_backbone() {
        let s = init_model(&ModelConfig::default(), &mut stream_rng(0, 0)).unwrap();
        let c = s.with_classifier(3, &mut stream_rng(9, 0)).unwrap();
        assert_eq!(c.params.len(), s.params.len() + 2);
        for (a, b) in s.params.iter().zip(&c.params) {
            assert_eq!(a, b);
        }
        c.validate().unwrap();
    }
}
