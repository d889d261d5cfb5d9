//! Pre-norm transformer encoder/decoder stacks on the tape.

use rand::Rng;

use super::dropout::Dropout;
use super::params::{glorot, normal_matrix, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::{Matrix, ModelConfig};
use crate::error::{Error, Result};

/// Sinusoidal position table, `max_positions × d`.
pub fn sinusoidal_table(max_positions: usize, d: usize) -> Matrix {
    let mut m = Matrix::zeros(max_positions, d);
    for pos in 0..max_positions {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            m.set(pos, 2 * i, angle.sin());
            m.set(pos, 2 * i + 1, angle.cos());
        }
    }
    m
}

/// Additive causal mask: `0` on and below the diagonal, `-inf` above.
pub fn causal_mask(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            m.set(i, j, f64::NEG_INFINITY);
        }
    }
    m
}

#[derive(Clone, Debug)]
pub(super) struct Attention {
    pub(super) wq: ParamId,
    pub(super) bq: ParamId,
    pub(super) wk: ParamId,
    pub(super) bk: ParamId,
    pub(super) wv: ParamId,
    pub(super) bv: ParamId,
    pub(super) wo: ParamId,
    pub(super) bo: ParamId,
}

impl Attention {
    fn init<R: Rng>(store: &mut ParamStore, p: &str, d: usize, rng: &mut R) {
        for w in ["wq", "wk", "wv", "wo"] {
            store.add(format!("{p}.{w}"), glorot(d, d, rng));
            store.add(format!("{p}.b{}", &w[1..]), Matrix::zeros(1, d));
        }
    }

    fn bind(store: &ParamStore, p: &str) -> Result<Self> {
        let id = |n: &str| store.expect_id(&format!("{p}.{n}"));
        Ok(Self {
            wq: id("wq")?,
            bq: id("bq")?,
            wk: id("wk")?,
            bk: id("bk")?,
            wv: id("wv")?,
            bv: id("bv")?,
            wo: id("wo")?,
            bo: id("bo")?,
        })
    }

    fn forward(
        &self,
        t: &mut Tape,
        query: Var,
        kv: Var,
        n_heads: usize,
        mask: Option<&Matrix>,
    ) -> Var {
        let d = t.shape(query).1;
        let dh = d / n_heads;
        let proj = |t: &mut Tape, x: Var, w: ParamId, b: ParamId| {
            let (w, b) = (t.param(w), t.param(b));
            let y = t.matmul(x, w);
            t.add_row(y, b)
        };
        let q = proj(t, query, self.wq, self.bq);
        let q = t.scale(q, 1.0 / (dh as f64).sqrt());
        let k = proj(t, kv, self.wk, self.bk);
        let v = proj(t, kv, self.wv, self.bv);
        let mask = mask.map(|m| t.constant(m.clone()));
        let heads: Vec<Var> = (0..n_heads)
            .map(|h| {
                let qh = t.slice_cols(q, h * dh, dh);
                let kh = t.slice_cols(k, h * dh, dh);
                let vh = t.slice_cols(v, h * dh, dh);
                let mut scores = t.matmul_bt(qh, kh);
                if let Some(m) = mask {
                    scores = t.add(scores, m);
                }
                let attn = t.softmax_rows(scores);
                t.matmul(attn, vh)
            })
            .collect();
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            t.concat_cols(&heads)
        };
        proj(t, cat, self.wo, self.bo)
    }
}

#[derive(Clone, Debug)]
pub(super) struct Norm {
    pub(super) gain: ParamId,
    pub(super) bias: ParamId,
}

impl Norm {
    fn init(store: &mut ParamStore, p: &str, d: usize) {
        store.add(format!("{p}.g"), Matrix::filled(1, d, 1.0));
        store.add(format!("{p}.b"), Matrix::zeros(1, d));
    }

    fn bind(store: &ParamStore, p: &str) -> Result<Self> {
        Ok(Self {
            gain: store.expect_id(&format!("{p}.g"))?,
            bias: store.expect_id(&format!("{p}.b"))?,
        })
    }

    fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let (g, b) = (t.param(self.gain), t.param(self.bias));
        t.layer_norm(x, g, b)
    }
}

#[derive(Clone, Debug)]
pub(super) struct FeedForward {
    pub(super) w1: ParamId,
    pub(super) b1: ParamId,
    pub(super) w2: ParamId,
    pub(super) b2: ParamId,
}

impl FeedForward {
    fn init<R: Rng>(store: &mut ParamStore, p: &str, d: usize, f: usize, rng: &mut R) {
        store.add(format!("{p}.w1"), glorot(d, f, rng));
        store.add(format!("{p}.b1"), Matrix::zeros(1, f));
        store.add(format!("{p}.w2"), glorot(f, d, rng));
        store.add(format!("{p}.b2"), Matrix::zeros(1, d));
    }

    fn bind(store: &ParamStore, p: &str) -> Result<Self> {
        let id = |n: &str| store.expect_id(&format!("{p}.{n}"));
        Ok(Self {
            w1: id("w1")?,
            b1: id("b1")?,
            w2: id("w2")?,
            b2: id("b2")?,
        })
    }

    fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let (w1, b1, w2, b2) = (
            t.param(self.w1),
            t.param(self.b1),
            t.param(self.w2),
            t.param(self.b2),
        );
        let h = t.matmul(x, w1);
        let h = t.add_row(h, b1);
        let h = t.gelu(h);
        let h = t.matmul(h, w2);
        t.add_row(h, b2)
    }
}

fn dropout(t: &mut Tape, x: Var, drop: Option<&Dropout>, name: &str) -> Var {
    match drop {
        Some(d) if d.active() => {
            let (r, c) = t.shape(x);
            let m = t.constant(d.mask(name, r, c));
            t.mul(x, m)
        }
        _ => x,
    }
}

#[derive(Clone, Debug)]
pub(super) struct Layer {
    name: String,
    pub(super) ln1: Norm,
    pub(super) self_attn: Attention,
    pub(super) cross: Option<(Norm, Attention)>,
    pub(super) ln_ffn: Norm,
    pub(super) ffn: FeedForward,
}

/// A stack of pre-norm layers followed by a final layer norm. Decoder
/// stacks carry cross-attention and apply a causal self-attention mask.
#[derive(Clone, Debug)]
pub struct Stack {
    pub(super) layers: Vec<Layer>,
    pub(super) ln_final: Norm,
    pub(super) n_heads: usize,
}

impl Stack {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        n_layers: usize,
        cross: bool,
        cfg: &ModelConfig,
        rng: &mut R,
    ) {
        let d = cfg.d_model;
        for l in 0..n_layers {
            let p = format!("{prefix}.layers.{l}");
            Norm::init(store, &format!("{p}.ln1"), d);
            Attention::init(store, &format!("{p}.self_attn"), d, rng);
            if cross {
                Norm::init(store, &format!("{p}.ln_cross"), d);
                Attention::init(store, &format!("{p}.cross_attn"), d, rng);
            }
            Norm::init(store, &format!("{p}.ln_ffn"), d);
            FeedForward::init(store, &format!("{p}.ffn"), d, cfg.ffn_dim, rng);
        }
        Norm::init(store, &format!("{prefix}.ln_final"), d);
    }

    pub fn bind(
        store: &ParamStore,
        prefix: &str,
        n_layers: usize,
        cross: bool,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let layers = (0..n_layers)
            .map(|l| {
                let p = format!("{prefix}.layers.{l}");
                Ok(Layer {
                    ln1: Norm::bind(store, &format!("{p}.ln1"))?,
                    self_attn: Attention::bind(store, &format!("{p}.self_attn"))?,
                    cross: if cross {
                        Some((
                            Norm::bind(store, &format!("{p}.ln_cross"))?,
                            Attention::bind(store, &format!("{p}.cross_attn"))?,
                        ))
                    } else {
                        None
                    },
                    ln_ffn: Norm::bind(store, &format!("{p}.ln_ffn"))?,
                    ffn: FeedForward::bind(store, &format!("{p}.ffn"))?,
                    name: p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            ln_final: Norm::bind(store, &format!("{prefix}.ln_final"))?,
            n_heads: cfg.n_heads,
        })
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        mut x: Var,
        self_mask: Option<&Matrix>,
        memory: Option<Var>,
        drop: Option<&Dropout>,
    ) -> Var {
        for layer in &self.layers {
            let h = layer.ln1.forward(t, x);
            let h = layer.self_attn.forward(t, h, h, self.n_heads, self_mask);
            let h = dropout(t, h, drop, &format!("{}.drop_self", layer.name));
            x = t.add(x, h);
            if let (Some((ln, attn)), Some(mem)) = (&layer.cross, memory) {
                let h = ln.forward(t, x);
                let h = attn.forward(t, h, mem, self.n_heads, None);
                let h = dropout(t, h, drop, &format!("{}.drop_cross", layer.name));
                x = t.add(x, h);
            }
            let h = layer.ln_ffn.forward(t, x);
            let h = layer.ffn.forward(t, h);
            let h = dropout(t, h, drop, &format!("{}.drop_ffn", layer.name));
            x = t.add(x, h);
        }
        self.ln_final.forward(t, x)
    }
}

/// Token embedding plus sinusoidal positions, scaled by `sqrt(d)`.
#[derive(Clone, Debug)]
pub struct Embedder {
    pub table: ParamId,
    pub(super) positions: Matrix,
    pub(super) scale: f64,
}

impl Embedder {
    pub fn init<R: Rng>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) {
        let std = (cfg.d_model as f64).powf(-0.5);
        store.add(name, normal_matrix(cfg.vocab_size, cfg.d_model, std, rng));
    }

    pub fn bind(store: &ParamStore, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let table = store.expect_id(name)?;
        if store.get(table).shape() != (cfg.vocab_size, cfg.d_model) {
            return Err(Error::Checkpoint(format!(
                "{name} has shape {:?}, config expects {:?}",
                store.get(table).shape(),
                (cfg.vocab_size, cfg.d_model)
            )));
        }
        Ok(Self {
            table,
            positions: sinusoidal_table(cfg.max_positions, cfg.d_model),
            scale: (cfg.d_model as f64).sqrt(),
        })
    }

    pub fn check(&self, t: &Tape, ids: &[usize], positions: &[usize]) -> Result<()> {
        let vocab = t.params().get(self.table).rows();
        if let Some(&id) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::OutOfVocab { id, vocab });
        }
        let max = self.positions.rows();
        if let Some(&pos) = positions.iter().find(|&&p| p >= max) {
            return Err(Error::Position { pos, max });
        }
        if ids.len() != positions.len() || ids.is_empty() {
            return Err(Error::Input(format!(
                "{} ids vs {} positions",
                ids.len(),
                positions.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, t: &mut Tape, ids: &[usize], positions: &[usize]) -> Result<Var> {
        self.check(t, ids, positions)?;
        let table = t.param(self.table);
        let rows = t.gather(table, ids);
        let rows = t.scale(rows, self.scale);
        let d = self.positions.cols();
        let mut pe = Matrix::zeros(positions.len(), d);
        for (r, &p) in positions.iter().enumerate() {
            pe.row_mut(r).copy_from_slice(self.positions.row(p));
        }
        let pe = t.constant(pe);
        Ok(t.add(rows, pe))
    }
}

/// Embedding + encoder stack.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub embed: Embedder,
    stack: Stack,
}

impl Encoder {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        embed_name: &str,
        cfg: &ModelConfig,
        rng: &mut R,
    ) {
        if store.id(embed_name).is_none() {
            Embedder::init(store, embed_name, cfg, rng);
        }
        Stack::init(store, prefix, cfg.n_enc_layers, false, cfg, rng);
    }

    pub fn bind(store: &ParamStore, prefix: &str, embed_name: &str, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            embed: Embedder::bind(store, embed_name, cfg)?,
            stack: Stack::bind(store, prefix, cfg.n_enc_layers, false, cfg)?,
        })
    }

    /// Hidden states `len × d`. `mask` is additive (`0` allowed, `-inf`
    /// forbidden), one row per query.
    pub fn forward(
        &self,
        t: &mut Tape,
        ids: &[usize],
        positions: &[usize],
        mask: Option<&Matrix>,
        drop: Option<&Dropout>,
    ) -> Result<Var> {
        if let Some(m) = mask {
            if m.shape() != (ids.len(), ids.len()) {
                return Err(Error::Shape(format!("mask {:?} for {} tokens", m.shape(), ids.len())));
            }
        }
        let x = self.embed.forward(t, ids, positions)?;
        Ok(self.stack.forward(t, x, mask, None, drop))
    }
}

/// Embedding + causal decoder stack with cross-attention.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub embed: Embedder,
    pub(super) stack: Stack,
}

impl Decoder {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        embed_name: &str,
        cfg: &ModelConfig,
        rng: &mut R,
    ) {
        if store.id(embed_name).is_none() {
            Embedder::init(store, embed_name, cfg, rng);
        }
        Stack::init(store, prefix, cfg.n_dec_layers, true, cfg, rng);
    }

    pub fn bind(store: &ParamStore, prefix: &str, embed_name: &str, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            embed: Embedder::bind(store, embed_name, cfg)?,
            stack: Stack::bind(store, prefix, cfg.n_dec_layers, true, cfg)?,
        })
    }

    /// Hidden states for every prefix position, `len × d`.
    pub fn forward(
        &self,
        t: &mut Tape,
        prefix: &[usize],
        memory: Var,
        drop: Option<&Dropout>,
    ) -> Result<Var> {
        let positions: Vec<usize> = (0..prefix.len()).collect();
        let x = self.embed.forward(t, prefix, &positions)?;
        let mask = causal_mask(prefix.len());
        Ok(self.stack.forward(t, x, Some(&mask), Some(memory), drop))
    }
}
