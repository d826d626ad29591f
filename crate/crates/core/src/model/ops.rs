//! Dense token-matrix primitives with their reverse-mode counterparts.
//!
//! Matrices are row-major `[tokens, features]`; weights are `[out, in]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

pub(crate) const LN_EPS: f64 = 1e-6;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y = x W^T + b` for `n` rows.
pub(crate) fn linear(x: &[f64], n: usize, in_dim: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out_dim = b.len();
    debug_assert_eq!(x.len(), n * in_dim);
    debug_assert_eq!(w.len(), out_dim * in_dim);
    let mut y = vec![0.0; n * out_dim];
    for t in 0..n {
        let xt = &x[t * in_dim..(t + 1) * in_dim];
        let yt = &mut y[t * out_dim..(t + 1) * out_dim];
        for o in 0..out_dim {
            yt[o] = dot(xt, &w[o * in_dim..(o + 1) * in_dim]) + b[o];
        }
    }
    y
}

/// Accumulates `dW`, `db` and returns `dx` for [`linear`].
/// Skips `dx` when `need_dx` is false (returns an empty vector).
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    in_dim: usize,
    w: &[f64],
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
    need_dx: bool,
) -> Vec<f64> {
    let out_dim = w.len() / in_dim;
    if let Some(db) = db {
        for t in 0..n {
            for (g, d) in db.iter_mut().zip(&dy[t * out_dim..(t + 1) * out_dim]) {
                *g += d;
            }
        }
    }
    if let Some(dw) = dw {
        for t in 0..n {
            let xt = &x[t * in_dim..(t + 1) * in_dim];
            for o in 0..out_dim {
                let g = dy[t * out_dim + o];
                if g != 0.0 {
                    axpy(g, xt, &mut dw[o * in_dim..(o + 1) * in_dim]);
                }
            }
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; n * in_dim];
    for t in 0..n {
        let dxt = &mut dx[t * in_dim..(t + 1) * in_dim];
        for o in 0..out_dim {
            let g = dy[t * out_dim + o];
            if g != 0.0 {
                axpy(g, &w[o * in_dim..(o + 1) * in_dim], dxt);
            }
        }
    }
    dx
}

/// Layer normalization cache: normalized input and reciprocal std per row.
/// With `normalize == false` the layer is the affine map alone.
pub(crate) struct NormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(
    x: &[f64],
    n: usize,
    dim: usize,
    gamma: &[f64],
    beta: &[f64],
    normalize: bool,
) -> (Vec<f64>, NormCache) {
    let mut xhat = vec![0.0; n * dim];
    let mut rstd = vec![1.0; n];
    let mut y = vec![0.0; n * dim];
    for t in 0..n {
        let row = &x[t * dim..(t + 1) * dim];
        let xr = &mut xhat[t * dim..(t + 1) * dim];
        if normalize {
            let mean = row.iter().sum::<f64>() / dim as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
            let r = 1.0 / math::sqrt(var + LN_EPS);
            rstd[t] = r;
            for (o, v) in xr.iter_mut().zip(row) {
                *o = (v - mean) * r;
            }
        } else {
            xr.copy_from_slice(row);
        }
        let yr = &mut y[t * dim..(t + 1) * dim];
        for i in 0..dim {
            yr[i] = gamma[i] * xr[i] + beta[i];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward(
    cache: &NormCache,
    dy: &[f64],
    n: usize,
    dim: usize,
    gamma: &[f64],
    dgamma: Option<&mut [f64]>,
    dbeta: Option<&mut [f64]>,
    normalize: bool,
) -> Vec<f64> {
    if let Some(dg) = dgamma {
        for t in 0..n {
            for i in 0..dim {
                dg[i] += dy[t * dim + i] * cache.xhat[t * dim + i];
            }
        }
    }
    if let Some(db) = dbeta {
        for t in 0..n {
            for i in 0..dim {
                db[i] += dy[t * dim + i];
            }
        }
    }
    let mut dx = vec![0.0; n * dim];
    for t in 0..n {
        let dyr = &dy[t * dim..(t + 1) * dim];
        let xr = &cache.xhat[t * dim..(t + 1) * dim];
        let dxr = &mut dx[t * dim..(t + 1) * dim];
        if normalize {
            let mut mean_d = 0.0;
            let mut mean_dx = 0.0;
            for i in 0..dim {
                let d = dyr[i] * gamma[i];
                mean_d += d;
                mean_dx += d * xr[i];
            }
            mean_d /= dim as f64;
            mean_dx /= dim as f64;
            let r = cache.rstd[t];
            for i in 0..dim {
                dxr[i] = r * (dyr[i] * gamma[i] - mean_d - xr[i] * mean_dx);
            }
        } else {
            for i in 0..dim {
                dxr[i] = dyr[i] * gamma[i];
            }
        }
    }
    dx
}

/// Exact GELU, `x * Phi(x)`.
#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = math::exp(-0.5 * x * x) / math::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

/// Multi-head scaled dot-product attention over a packed `[n, 3 dim]`
/// query/key/value matrix. Returns `[n, dim]` and the per-head
/// probabilities `[heads, n, n]`.
pub(crate) fn attention(qkv: &[f64], n: usize, dim: usize, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let dh = dim / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let stride = 3 * dim;
    let mut out = vec![0.0; n * dim];
    let mut probs = vec![0.0; heads * n * n];
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, dim + h * dh, 2 * dim + h * dh);
        for t in 0..n {
            let q = &qkv[t * stride + qo..t * stride + qo + dh];
            let p = &mut probs[(h * n + t) * n..(h * n + t + 1) * n];
            let mut max = f64::NEG_INFINITY;
            for s in 0..n {
                let k = &qkv[s * stride + ko..s * stride + ko + dh];
                p[s] = dot(q, k) * scale;
                max = max.max(p[s]);
            }
            let mut sum = 0.0;
            for v in p.iter_mut() {
                *v = math::exp(*v - max);
                sum += *v;
            }
            for v in p.iter_mut() {
                *v /= sum;
            }
            let o = &mut out[t * dim + h * dh..t * dim + (h + 1) * dh];
            for s in 0..n {
                axpy(p[s], &qkv[s * stride + vo..s * stride + vo + dh], o);
            }
        }
    }
    (out, probs)
}

pub(crate) fn attention_backward(
    qkv: &[f64],
    probs: &[f64],
    d_out: &[f64],
    n: usize,
    dim: usize,
    heads: usize,
) -> Vec<f64> {
    let dh = dim / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let stride = 3 * dim;
    let mut d_qkv = vec![0.0; n * stride];
    let mut dp = vec![0.0; n];
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, dim + h * dh, 2 * dim + h * dh);
        for t in 0..n {
            let p = &probs[(h * n + t) * n..(h * n + t + 1) * n];
            let dot_t = &d_out[t * dim + h * dh..t * dim + (h + 1) * dh];
            // dP and dV
            for s in 0..n {
                let v = &qkv[s * stride + vo..s * stride + vo + dh];
                dp[s] = dot(dot_t, v);
                axpy(p[s], dot_t, &mut d_qkv[s * stride + vo..s * stride + vo + dh]);
            }
            // softmax backward
            let inner: f64 = (0..n).map(|s| dp[s] * p[s]).sum();
            for s in 0..n {
                let ds = p[s] * (dp[s] - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                let (qs, ks) = (t * stride + qo, s * stride + ko);
                for i in 0..dh {
                    d_qkv[qs + i] += ds * qkv[ks + i];
                    d_qkv[ks + i] += ds * qkv[qs + i];
                }
            }
        }
    }
    d_qkv
}
