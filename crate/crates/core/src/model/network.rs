//! Forward passes with retained activations and their exact reverse passes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{
    attention, attention_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, linear,
    linear_backward, NormCache,
};
use super::{BlockIdx, Gradients, Layout, ModelState};
use crate::field::FloatField;
use crate::{Error, Result};

/// Encoder output tokens for one image, `[grid_h * grid_w, dim]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn tokens(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn token(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Mean over tokens.
pub fn pooled_features(fm: &FeatureMap) -> Vec<f64> {
    let n = fm.tokens();
    let mut out = vec![0.0; fm.dim];
    for t in 0..n {
        for (o, v) in out.iter_mut().zip(fm.token(t)) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= n as f64;
    }
    out
}

struct BlockCache {
    n1: NormCache,
    a: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    attn: Vec<f64>,
    n2: NormCache,
    c: Vec<f64>,
    h_pre: Vec<f64>,
    h_act: Vec<f64>,
}

struct EncCache {
    patches: Vec<f64>,
    blocks: Vec<BlockCache>,
    norm: NormCache,
}

struct DecCache {
    blocks: Vec<BlockCache>,
    norm: NormCache,
    normed: Vec<f64>,
}

enum Head {
    Mim(Vec<DecCache>),
    Classify(Vec<Vec<f64>>),
    Features,
}

/// Activations retained by a forward pass for the matching backward pass.
pub struct Activations {
    version: u64,
    freeze_encoder: bool,
    enc: Vec<EncCache>,
    head: Head,
}

impl Activations {
    pub fn batch_len(&self) -> usize {
        self.enc.len()
    }

    pub fn encoder_frozen(&self) -> bool {
        self.freeze_encoder
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient with respect to each input image. All zeros when the encoder
    /// was frozen for the forward pass.
    pub input_grads: Vec<FloatField>,
}

fn check_batch(state: &ModelState, batch: &[FloatField]) -> Result<()> {
    let s = state.config.image_size;
    for img in batch {
        if img.shape() != (s, s) {
            return Err(Error::ShapeMismatch {
                expected_h: s,
                expected_w: s,
                got_h: img.height(),
                got_w: img.width(),
            });
        }
    }
    Ok(())
}

fn patchify(img: &FloatField, patch: usize) -> Vec<f64> {
    let grid = img.width() / patch;
    let pp = patch * patch;
    let mut out = vec![0.0; grid * grid * pp];
    for gr in 0..grid {
        for gc in 0..grid {
            let t = gr * grid + gc;
            for pr in 0..patch {
                for pc in 0..patch {
                    out[t * pp + pr * patch + pc] = img.get(gr * patch + pr, gc * patch + pc);
                }
            }
        }
    }
    out
}

fn unpatchify(tokens: &[f64], grid: usize, patch: usize) -> FloatField {
    let size = grid * patch;
    let pp = patch * patch;
    let mut data = vec![0.0; size * size];
    for gr in 0..grid {
        for gc in 0..grid {
            let t = gr * grid + gc;
            for pr in 0..patch {
                for pc in 0..patch {
                    data[(gr * patch + pr) * size + gc * patch + pc] = tokens[t * pp + pr * patch + pc];
                }
            }
        }
    }
    FloatField::from_raw(size, size, data)
}

fn block_forward(state: &ModelState, b: BlockIdx, x: Vec<f64>, n: usize) -> (Vec<f64>, BlockCache) {
    let cfg = &state.config;
    let d = cfg.embed_dim;
    let ln = cfg.layer_norm;
    let (a, n1) = layer_norm(&x, n, d, state.p(b.norm1_g()), state.p(b.norm1_b()), ln);
    let qkv = linear(&a, n, d, state.p(b.qkv_w()), state.p(b.qkv_b()));
    let (attn, probs) = attention(&qkv, n, d, cfg.heads);
    let proj = linear(&attn, n, d, state.p(b.proj_w()), state.p(b.proj_b()));
    let x_mid: Vec<f64> = x.iter().zip(&proj).map(|(u, v)| u + v).collect();
    let (c, n2) = layer_norm(&x_mid, n, d, state.p(b.norm2_g()), state.p(b.norm2_b()), ln);
    let hidden = cfg.hidden_dim();
    let h_pre = linear(&c, n, d, state.p(b.fc1_w()), state.p(b.fc1_b()));
    let h_act: Vec<f64> = h_pre.iter().map(|&v| gelu(v)).collect();
    let mlp = linear(&h_act, n, hidden, state.p(b.fc2_w()), state.p(b.fc2_b()));
    let out = x_mid.iter().zip(&mlp).map(|(u, v)| u + v).collect();
    (
        out,
        BlockCache {
            n1,
            a,
            qkv,
            probs,
            attn,
            n2,
            c,
            h_pre,
            h_act,
        },
    )
}

fn grad_slots(grads: &mut Gradients, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (lo, hi) = grads.grads.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

fn block_backward(
    state: &ModelState,
    b: BlockIdx,
    cache: &BlockCache,
    dy: &[f64],
    n: usize,
    grads: &mut Gradients,
) -> Vec<f64> {
    let cfg = &state.config;
    let d = cfg.embed_dim;
    let ln = cfg.layer_norm;
    let hidden = cfg.hidden_dim();

    // MLP branch.
    let (dw, db) = grad_slots(grads, b.fc2_w(), b.fc2_b());
    let mut dh = linear_backward(&cache.h_act, dy, n, hidden, state.p(b.fc2_w()), Some(dw), Some(db), true);
    for (g, &x) in dh.iter_mut().zip(&cache.h_pre) {
        *g *= gelu_grad(x);
    }
    let (dw, db) = grad_slots(grads, b.fc1_w(), b.fc1_b());
    let dc = linear_backward(&cache.c, &dh, n, d, state.p(b.fc1_w()), Some(dw), Some(db), true);
    let (dg, dbeta) = grad_slots(grads, b.norm2_g(), b.norm2_b());
    let dn2 = layer_norm_backward(&cache.n2, &dc, n, d, state.p(b.norm2_g()), Some(dg), Some(dbeta), ln);
    let dx_mid: Vec<f64> = dy.iter().zip(&dn2).map(|(a, b)| a + b).collect();

    // Attention branch.
    let (dw, db) = grad_slots(grads, b.proj_w(), b.proj_b());
    let dattn = linear_backward(&cache.attn, &dx_mid, n, d, state.p(b.proj_w()), Some(dw), Some(db), true);
    let dqkv = attention_backward(&cache.qkv, &cache.probs, &dattn, n, d, cfg.heads);
    let (dw, db) = grad_slots(grads, b.qkv_w(), b.qkv_b());
    let da = linear_backward(&cache.a, &dqkv, n, d, state.p(b.qkv_w()), Some(dw), Some(db), true);
    let (dg, dbeta) = grad_slots(grads, b.norm1_g(), b.norm1_b());
    let dn1 = layer_norm_backward(&cache.n1, &da, n, d, state.p(b.norm1_g()), Some(dg), Some(dbeta), ln);
    dx_mid.iter().zip(&dn1).map(|(a, b)| a + b).collect()
}

fn encoder_forward(state: &ModelState, img: &FloatField) -> (FeatureMap, EncCache) {
    let cfg = &state.config;
    let lay = state.layout();
    let n = cfg.tokens();
    let d = cfg.embed_dim;
    let patches = patchify(img, cfg.patch_size);
    let mut x = linear(&patches, n, cfg.patch_pixels(), state.p(Layout::PATCH_W), state.p(Layout::PATCH_B));
    for (xi, pi) in x.iter_mut().zip(state.p(Layout::POS)) {
        *xi += pi;
    }
    let mut blocks = Vec::with_capacity(cfg.depth);
    for i in 0..cfg.depth {
        let (out, cache) = block_forward(state, lay.enc_block(i), x, n);
        blocks.push(cache);
        x = out;
    }
    let (y, norm) = layer_norm(&x, n, d, state.p(lay.enc_norm_g()), state.p(lay.enc_norm_b()), cfg.layer_norm);
    let grid = cfg.grid();
    (
        FeatureMap {
            grid_h: grid,
            grid_w: grid,
            dim: d,
            data: y,
        },
        EncCache {
            patches,
            blocks,
            norm,
        },
    )
}

fn encoder_backward(state: &ModelState, cache: &EncCache, dy: &[f64], grads: &mut Gradients) -> FloatField {
    let cfg = &state.config;
    let lay = state.layout();
    let n = cfg.tokens();
    let d = cfg.embed_dim;
    let (dg, db) = grad_slots(grads, lay.enc_norm_g(), lay.enc_norm_b());
    let mut dx = layer_norm_backward(&cache.norm, dy, n, d, state.p(lay.enc_norm_g()), Some(dg), Some(db), cfg.layer_norm);
    for i in (0..cfg.depth).rev() {
        dx = block_backward(state, lay.enc_block(i), &cache.blocks[i], &dx, n, grads);
    }
    for (g, v) in grads.grads[Layout::POS].iter_mut().zip(&dx) {
        *g += v;
    }
    let (dw, db) = grad_slots(grads, Layout::PATCH_W, Layout::PATCH_B);
    let dpatch = linear_backward(&cache.patches, &dx, n, cfg.patch_pixels(), state.p(Layout::PATCH_W), Some(dw), Some(db), true);
    unpatchify(&dpatch, cfg.grid(), cfg.patch_size)
}

fn decoder_forward(state: &ModelState, fm: &FeatureMap) -> (FloatField, DecCache) {
    let cfg = &state.config;
    let lay = state.layout();
    let n = cfg.tokens();
    let d = cfg.embed_dim;
    let mut x = fm.data.clone();
    let mut blocks = Vec::with_capacity(cfg.decoder_depth);
    for j in 0..cfg.decoder_depth {
        let (out, cache) = block_forward(state, lay.dec_block(j), x, n);
        blocks.push(cache);
        x = out;
    }
    let (normed, norm) = layer_norm(&x, n, d, state.p(lay.dec_norm_g()), state.p(lay.dec_norm_b()), cfg.layer_norm);
    let pix = linear(&normed, n, d, state.p(lay.head_w()), state.p(lay.head_b()));
    (
        unpatchify(&pix, cfg.grid(), cfg.patch_size),
        DecCache { blocks, norm, normed },
    )
}

fn decoder_backward(state: &ModelState, cache: &DecCache, d_img: &FloatField, grads: &mut Gradients) -> Vec<f64> {
    let cfg = &state.config;
    let lay = state.layout();
    let n = cfg.tokens();
    let d = cfg.embed_dim;
    let dpix = patchify(d_img, cfg.patch_size);
    let (dw, db) = grad_slots(grads, lay.head_w(), lay.head_b());
    let dnormed = linear_backward(&cache.normed, &dpix, n, d, state.p(lay.head_w()), Some(dw), Some(db), true);
    let (dg, db) = grad_slots(grads, lay.dec_norm_g(), lay.dec_norm_b());
    let mut dx = layer_norm_backward(&cache.norm, &dnormed, n, d, state.p(lay.dec_norm_g()), Some(dg), Some(db), cfg.layer_norm);
    for j in (0..cfg.decoder_depth).rev() {
        dx = block_backward(state, lay.dec_block(j), &cache.blocks[j], &dx, n, grads);
    }
    dx
}

/// Encoder output for every image of the batch.
pub fn encode(state: &ModelState, batch: &[FloatField]) -> Result<Vec<FeatureMap>> {
    check_batch(state, batch)?;
    Ok(batch.iter().map(|img| encoder_forward(state, img).0).collect())
}

/// Reconstruction from encoder features.
pub fn decode(state: &ModelState, features: &[FeatureMap]) -> Result<Vec<FloatField>> {
    let cfg = &state.config;
    for fm in features {
        if fm.grid_h != cfg.grid() || fm.grid_w != cfg.grid() || fm.dim != cfg.embed_dim || fm.data.len() != fm.tokens() * fm.dim {
            return Err(Error::GeometryMismatch(format!(
                "feature map {}x{}x{} does not match the model",
                fm.grid_h, fm.grid_w, fm.dim
            )));
        }
    }
    Ok(features.iter().map(|fm| decoder_forward(state, fm).0).collect())
}

/// Dense masked-image-modeling forward pass, retaining activations.
pub fn forward_mim(state: &ModelState, batch: &[FloatField]) -> Result<(Vec<FloatField>, Activations)> {
    check_batch(state, batch)?;
    let mut enc = Vec::with_capacity(batch.len());
    let mut dec = Vec::with_capacity(batch.len());
    let mut out = Vec::with_capacity(batch.len());
    for img in batch {
        let (fm, ec) = encoder_forward(state, img);
        let (rec, dc) = decoder_forward(state, &fm);
        enc.push(ec);
        dec.push(dc);
        out.push(rec);
    }
    Ok((
        out,
        Activations {
            version: state.version(),
            freeze_encoder: false,
            enc,
            head: Head::Mim(dec),
        },
    ))
}

/// Features with the encoder frozen: identical values to [`encode`], and any
/// backward pass through the returned activations leaves encoder gradients at
/// zero.
pub fn extract_features(state: &ModelState, batch: &[FloatField]) -> Result<(Vec<FeatureMap>, Activations)> {
    check_batch(state, batch)?;
    let (feats, enc): (Vec<_>, Vec<_>) = batch.iter().map(|img| encoder_forward(state, img)).unzip();
    Ok((
        feats,
        Activations {
            version: state.version(),
            freeze_encoder: true,
            enc,
            head: Head::Features,
        },
    ))
}

fn classifier_scores(state: &ModelState, pooled: &[f64]) -> Vec<f64> {
    let lay = state.layout();
    linear(pooled, 1, state.config.embed_dim, state.p(lay.cls_w()), state.p(lay.cls_b()))
}

/// Class scores for precomputed pooled features.
pub fn classify_pooled(state: &ModelState, pooled: &[f64]) -> Result<Vec<f64>> {
    if !state.has_classifier() {
        return Err(Error::NoClassHead);
    }
    if pooled.len() != state.config.embed_dim {
        return Err(Error::LabelMismatch(format!(
            "pooled feature of length {} for embed dim {}",
            pooled.len(),
            state.config.embed_dim
        )));
    }
    Ok(classifier_scores(state, pooled))
}

/// Head-only gradients for [`classify_pooled`]; every other parameter gets zero.
pub fn backward_pooled(state: &ModelState, pooled: &[Vec<f64>], d_scores: &[Vec<f64>]) -> Result<Gradients> {
    if !state.has_classifier() {
        return Err(Error::NoClassHead);
    }
    if pooled.len() != d_scores.len() {
        return Err(Error::LabelMismatch(format!(
            "{} features for {} score gradients",
            pooled.len(),
            d_scores.len()
        )));
    }
    let lay = state.layout();
    let d = state.config.embed_dim;
    let mut grads = Gradients::zeros_like(state);
    for (p, ds) in pooled.iter().zip(d_scores) {
        if ds.len() != state.config.num_classes || p.len() != d {
            return Err(Error::LabelMismatch("head gradient shape".into()));
        }
        let (dw, db) = grad_slots(&mut grads, lay.cls_w(), lay.cls_b());
        linear_backward(p, ds, 1, d, state.p(lay.cls_w()), Some(dw), Some(db), false);
    }
    for (g, prm) in grads.grads.iter_mut().zip(&state.params) {
        if prm.frozen {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(grads)
}

/// Class scores from mean-pooled encoder tokens through the linear head.
pub fn classify(state: &ModelState, batch: &[FloatField]) -> Result<Vec<Vec<f64>>> {
    forward_classify(state, batch, false).map(|(s, _)| s)
}

/// Classification forward pass retaining activations. With `freeze_encoder`
/// the backward pass only reaches the head.
pub fn forward_classify(
    state: &ModelState,
    batch: &[FloatField],
    freeze_encoder: bool,
) -> Result<(Vec<Vec<f64>>, Activations)> {
    if !state.has_classifier() {
        return Err(Error::NoClassHead);
    }
    check_batch(state, batch)?;
    let mut enc = Vec::with_capacity(batch.len());
    let mut pooled = Vec::with_capacity(batch.len());
    let mut scores = Vec::with_capacity(batch.len());
    for img in batch {
        let (fm, ec) = encoder_forward(state, img);
        let p = pooled_features(&fm);
        scores.push(classifier_scores(state, &p));
        pooled.push(p);
        enc.push(ec);
    }
    Ok((
        scores,
        Activations {
            version: state.version(),
            freeze_encoder,
            enc,
            head: Head::Classify(pooled),
        },
    ))
}

fn check_fresh(state: &ModelState, acts: &Activations, upstream_len: usize) -> Result<()> {
    if acts.version != state.version() {
        return Err(Error::StaleCache(format!(
            "activations recorded at version {}, state is at {}",
            acts.version,
            state.version()
        )));
    }
    if upstream_len != acts.enc.len() {
        return Err(Error::StaleCache(format!(
            "upstream batch of {upstream_len} for activations of {}",
            acts.enc.len()
        )));
    }
    Ok(())
}

fn finish(state: &ModelState, acts: &Activations, mut grads: Gradients, input_grads: Vec<FloatField>) -> Backward {
    if acts.freeze_encoder {
        for i in state.layout().encoder_range() {
            grads.grads[i].iter_mut().for_each(|g| *g = 0.0);
        }
    }
    for (g, p) in grads.grads.iter_mut().zip(&state.params) {
        if p.frozen {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Backward { grads, input_grads }
}

fn encoder_pass(state: &ModelState, acts: &Activations, cache: &EncCache, d_tokens: &[f64], grads: &mut Gradients) -> FloatField {
    if acts.freeze_encoder {
        let s = state.config.image_size;
        return FloatField::from_raw(s, s, vec![0.0; s * s]);
    }
    encoder_backward(state, cache, d_tokens, grads)
}

/// Reverse pass of [`forward_mim`] for per-pixel upstream gradients.
pub fn backward(state: &ModelState, acts: &Activations, upstream: &[FloatField]) -> Result<Backward> {
    check_fresh(state, acts, upstream.len())?;
    let Head::Mim(dec) = &acts.head else {
        return Err(Error::StaleCache("activations are not from a reconstruction pass".into()));
    };
    let s = state.config.image_size;
    let mut grads = Gradients::zeros_like(state);
    let mut input_grads = Vec::with_capacity(upstream.len());
    for ((g, ec), dc) in upstream.iter().zip(&acts.enc).zip(dec) {
        if g.shape() != (s, s) {
            return Err(Error::ShapeMismatch {
                expected_h: s,
                expected_w: s,
                got_h: g.height(),
                got_w: g.width(),
            });
        }
        let d_tokens = decoder_backward(state, dc, g, &mut grads);
        input_grads.push(encoder_pass(state, acts, ec, &d_tokens, &mut grads));
    }
    Ok(finish(state, acts, grads, input_grads))
}

/// Reverse pass of [`extract_features`] for upstream feature gradients.
pub fn backward_features(state: &ModelState, acts: &Activations, upstream: &[FeatureMap]) -> Result<Backward> {
    check_fresh(state, acts, upstream.len())?;
    if !matches!(acts.head, Head::Features) {
        return Err(Error::StaleCache("activations are not from a feature pass".into()));
    }
    let mut grads = Gradients::zeros_like(state);
    let input_grads = upstream
        .iter()
        .zip(&acts.enc)
        .map(|(g, ec)| encoder_pass(state, acts, ec, &g.data, &mut grads))
        .collect();
    Ok(finish(state, acts, grads, input_grads))
}

/// Reverse pass of [`forward_classify`] for upstream score gradients.
pub fn backward_classify(state: &ModelState, acts: &Activations, d_scores: &[Vec<f64>]) -> Result<Backward> {
    check_fresh(state, acts, d_scores.len())?;
    let Head::Classify(pooled) = &acts.head else {
        return Err(Error::StaleCache("activations are not from a classification pass".into()));
    };
    let cfg = &state.config;
    let lay = state.layout();
    let (n, d) = (cfg.tokens(), cfg.embed_dim);
    let mut grads = Gradients::zeros_like(state);
    let mut input_grads = Vec::with_capacity(d_scores.len());
    for ((ds, p), ec) in d_scores.iter().zip(pooled).zip(&acts.enc) {
        if ds.len() != cfg.num_classes {
            return Err(Error::LabelMismatch(format!(
                "score gradient of length {} for {} classes",
                ds.len(),
                cfg.num_classes
            )));
        }
        let (dw, db) = grad_slots(&mut grads, lay.cls_w(), lay.cls_b());
        let dp = linear_backward(p, ds, 1, d, state.p(lay.cls_w()), Some(dw), Some(db), !acts.freeze_encoder);
        let d_tokens: Vec<f64> = if acts.freeze_encoder {
            Vec::new()
        } else {
            (0..n).flat_map(|_| dp.iter().map(|v| v / n as f64)).collect()
        };
        input_grads.push(encoder_pass(state, acts, ec, &d_tokens, &mut grads));
    }
    Ok(finish(state, acts, grads, input_grads))
}
