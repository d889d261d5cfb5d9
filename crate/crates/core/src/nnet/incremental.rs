//! Inference-only decoder stepping with cached keys and values.
//!
//! The tape decoder recomputes the whole prefix and re-projects the
//! encoder memory on every step. Beam search instead projects the memory
//! once per sentence ([`CrossCache`]) and appends one row of self-attention
//! keys and values per emitted token ([`SelfCache`]). Results agree with
//! [`Decoder::forward`] up to float rounding.

use super::params::ParamStore;
use super::tape::{gelu, LAYER_NORM_EPS};
use super::tensor::{dot, softmax};
use super::transformer::{Attention, Decoder, FeedForward, Norm};
use super::Matrix;
use crate::error::{Error, Result};

fn vec_mat(x: &[f64], w: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &wij) in out.iter_mut().zip(w.row(i)) {
            *o += xi * wij;
        }
    }
    out
}

fn affine(params: &ParamStore, x: &[f64], w: super::ParamId, b: super::ParamId) -> Vec<f64> {
    let mut y = vec_mat(x, params.get(w));
    for (v, bias) in y.iter_mut().zip(params.get(b).row(0)) {
        *v += bias;
    }
    y
}

fn layer_norm(params: &ParamStore, norm: &Norm, x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let (g, b) = (params.get(norm.gain).row(0), params.get(norm.bias).row(0));
    x.iter()
        .enumerate()
        .map(|(c, v)| (v - mean) * rs * g[c] + b[c])
        .collect()
}

fn feed_forward(params: &ParamStore, ffn: &FeedForward, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = affine(params, x, ffn.w1, ffn.b1).into_iter().map(gelu).collect();
    affine(params, &h, ffn.w2, ffn.b2)
}

/// Attention of one query row over `n` cached key/value rows stored flat.
fn attend(
    params: &ParamStore,
    attn: &Attention,
    x: &[f64],
    keys: &[f64],
    values: &[f64],
    n_heads: usize,
) -> Vec<f64> {
    let d = x.len();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q: Vec<f64> = affine(params, x, attn.wq, attn.bq).into_iter().map(|v| v * scale).collect();
    let n = keys.len() / d;
    let mut cat = vec![0.0; d];
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let scores: Vec<f64> = (0..n)
            .map(|j| dot(&q[cols.clone()], &keys[j * d + cols.start..j * d + cols.end]))
            .collect();
        let weights = softmax(&scores);
        for (j, w) in weights.iter().enumerate() {
            for c in cols.clone() {
                cat[c] += w * values[j * d + c];
            }
        }
    }
    affine(params, &cat, attn.wo, attn.bo)
}

/// Cross-attention keys and values for one encoder memory, per layer.
#[derive(Clone, Debug)]
pub struct CrossCache {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Self-attention keys and values of the tokens fed so far, per layer.
#[derive(Clone, Debug, Default)]
pub struct SelfCache {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
    len: usize,
}

impl SelfCache {
    /// Number of tokens already fed.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Decoder {
    /// Projects `memory` through every layer's cross-attention once.
    pub fn cross_cache(&self, params: &ParamStore, memory: &Matrix) -> CrossCache {
        let layers = self
            .stack
            .layers
            .iter()
            .map(|layer| match &layer.cross {
                Some((_, attn)) => {
                    let mut k = Vec::with_capacity(memory.len());
                    let mut v = Vec::with_capacity(memory.len());
                    for r in 0..memory.rows() {
                        k.extend(affine(params, memory.row(r), attn.wk, attn.bk));
                        v.extend(affine(params, memory.row(r), attn.wv, attn.bv));
                    }
                    (k, v)
                }
                None => (Vec::new(), Vec::new()),
            })
            .collect();
        CrossCache { layers }
    }

    /// Feeds one token at the next position and returns its final hidden
    /// state.
    pub fn step_cached(
        &self,
        params: &ParamStore,
        token: usize,
        cross: &CrossCache,
        cache: &mut SelfCache,
    ) -> Result<Vec<f64>> {
        let table = params.get(self.embed.table);
        if token >= table.rows() {
            return Err(Error::OutOfVocab {
                id: token,
                vocab: table.rows(),
            });
        }
        let pos = cache.len;
        if pos >= self.embed.positions.rows() {
            return Err(Error::Position {
                pos,
                max: self.embed.positions.rows(),
            });
        }
        if cache.layers.is_empty() {
            cache.layers = vec![(Vec::new(), Vec::new()); self.stack.layers.len()];
        }
        let mut x: Vec<f64> = table
            .row(token)
            .iter()
            .zip(self.embed.positions.row(pos))
            .map(|(e, p)| e * self.embed.scale + p)
            .collect();
        let heads = self.stack.n_heads;
        for (l, layer) in self.stack.layers.iter().enumerate() {
            let h = layer_norm(params, &layer.ln1, &x);
            let (keys, values) = &mut cache.layers[l];
            keys.extend(affine(params, &h, layer.self_attn.wk, layer.self_attn.bk));
            values.extend(affine(params, &h, layer.self_attn.wv, layer.self_attn.bv));
            let a = attend(params, &layer.self_attn, &h, keys, values, heads);
            x.iter_mut().zip(&a).for_each(|(x, a)| *x += a);
            if let Some((ln, attn)) = &layer.cross {
                let h = layer_norm(params, ln, &x);
                let (k, v) = &cross.layers[l];
                let a = attend(params, attn, &h, k, v, heads);
                x.iter_mut().zip(&a).for_each(|(x, a)| *x += a);
            }
            let h = layer_norm(params, &layer.ln_ffn, &x);
            let f = feed_forward(params, &layer.ffn, &h);
            x.iter_mut().zip(&f).for_each(|(x, f)| *x += f);
        }
        cache.len += 1;
        Ok(layer_norm(params, &self.stack.ln_final, &x))
    }
}
