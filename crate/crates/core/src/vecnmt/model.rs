use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::constraints::ConstraintSet;
use crate::corpus::{special, Vocabulary};
use crate::error::{Error, Result};
use crate::nnet::{
    checkpoint, cosine, dot, normal_matrix, softmax, CrossCache, Matrix, ModelConfig, ParamId, ParamStore, SelfCache,
    Seq2Seq, StepOutput, Tape, Var,
};

/// How the mixture gate is obtained at each step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum GateMode {
    Learned,
    Fixed(f64),
}

impl GateMode {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "learned" {
            return Ok(Self::Learned);
        }
        let g = s
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Config(format!("gate must be `learned` or `fixed:<g>`, got `{s}`")))?;
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::Config(format!("fixed gate {g} outside [0, 1]")));
        }
        Ok(Self::Fixed(g))
    }
}

/// Encoder–decoder with a tied embedding, a scalar gate head, and the
/// cosine-based plug distribution over constraint tokens.
#[derive(Clone, Debug)]
pub struct VecNmt {
    pub cfg: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    s2s: Seq2Seq,
    gate_w: ParamId,
    gate_b: ParamId,
}

impl VecNmt {
    pub fn new<R: Rng>(cfg: ModelConfig, vocab: Vocabulary, rng: &mut R) -> Result<Self> {
        let (cfg, params) = Self::fresh(cfg, &vocab, rng)?;
        Self::from_parts(cfg, vocab, params)
    }

    fn fresh<R: Rng>(mut cfg: ModelConfig, vocab: &Vocabulary, rng: &mut R) -> Result<(ModelConfig, ParamStore)> {
        cfg.vocab_size = vocab.len();
        let mut params = ParamStore::new();
        Seq2Seq::init(&mut params, &cfg, rng)?;
        params.add("gate.w", normal_matrix(cfg.d_model, 1, 0.02, rng));
        params.add("gate.b", Matrix::zeros(1, 1));
        Ok((cfg, params))
    }

    pub fn from_parts(mut cfg: ModelConfig, vocab: Vocabulary, params: ParamStore) -> Result<Self> {
        cfg.vocab_size = vocab.len();
        let s2s = Seq2Seq::bind(&params, &cfg)?;
        Ok(Self {
            gate_w: params.expect_id("gate.w")?,
            gate_b: params.expect_id("gate.b")?,
            cfg,
            vocab,
            params,
            s2s,
        })
    }

    pub fn seq2seq(&self) -> &Seq2Seq {
        &self.s2s
    }

    pub fn embedding(&self) -> &Matrix {
        self.params.get(self.s2s.embed_id())
    }

    /// Source ids followed by `[SEP] t_n` for each constraint. Every
    /// appended segment restarts its positions at zero.
    pub fn encoder_input(&self, src: &[String], cs: &ConstraintSet) -> (Vec<usize>, Vec<usize>) {
        let mut ids = self.vocab.encode(src);
        let mut pos: Vec<usize> = (0..ids.len()).collect();
        for p in cs.pairs() {
            ids.push(special::SEP_ID);
            ids.extend(self.vocab.encode(&p.tgt));
            pos.extend(0..=p.tgt.len());
        }
        (ids, pos)
    }

    pub fn encode(&self, src: &[String], cs: &ConstraintSet) -> Result<Matrix> {
        let (ids, pos) = self.encoder_input(src, cs);
        self.s2s.encode(&self.params, &ids, &pos)
    }

    pub fn step(&self, prefix: &[usize], memory: &Matrix) -> Result<StepOutput> {
        self.s2s.decode_step(&self.params, prefix, memory)
    }

    pub fn cross_cache(&self, memory: &Matrix) -> CrossCache {
        self.s2s.cross_cache(&self.params, memory)
    }

    /// Feeds `token` after whatever `cache` already holds.
    pub fn step_cached(&self, token: usize, cross: &CrossCache, cache: &mut SelfCache) -> Result<StepOutput> {
        self.s2s.step_cached(&self.params, token, cross, cache)
    }

    /// `softmax(h·Wᵀ)` over the whole vocabulary.
    pub fn p_model(&self, h: &[f64]) -> Vec<f64> {
        let e = self.embedding();
        let logits: Vec<f64> = (0..e.rows()).map(|y| dot(e.row(y), h)).collect();
        softmax(&logits)
    }

    pub fn gate(&self, h: &[f64], mode: GateMode) -> f64 {
        match mode {
            GateMode::Fixed(g) => g,
            GateMode::Learned => {
                let z = dot(self.params.get(self.gate_w).data(), h) + self.params.get(self.gate_b).get(0, 0);
                1.0 / (1.0 + (-z).exp())
            }
        }
    }

    /// `σ(H·w_g + b_g)` as a `T×1` node.
    pub(crate) fn gate_on(&self, t: &mut Tape, h: Var) -> Var {
        let w = t.param(self.gate_w);
        let b = t.param(self.gate_b);
        let z = t.matmul(h, w);
        let z = t.add_row(z, b);
        t.sigmoid(z)
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "vecnmt",
            "model": self.cfg,
            "vocab": self.vocab,
            "run": extra,
        });
        checkpoint::save(path, &meta, &self.params)
    }

    /// Loads a checkpoint and returns it together with its run metadata.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let (meta, params) = checkpoint::load(path)?;
        if meta["kind"] != "vecnmt" {
            return Err(Error::Checkpoint(format!("{} is not a translation checkpoint", path.display())));
        }
        let cfg: ModelConfig = serde_json::from_value(meta["model"].clone())?;
        let vocab: Vocabulary = serde_json::from_value(meta["vocab"].clone())?;
        let (_, expected) = Self::fresh(cfg.clone(), &vocab, &mut ChaCha8Rng::seed_from_u64(0))?;
        checkpoint::validate_layout(&params, &expected)?;
        Ok((Self::from_parts(cfg, vocab, params)?, meta["run"].clone()))
    }
}

/// Sparse plug scores `max(0, cos(w_y, h))` for each constraint token `y`.
pub fn p_plug(h: &[f64], constraint_ids: &BTreeSet<usize>, embedding: &Matrix) -> Result<Vec<(usize, f64)>> {
    constraint_ids
        .iter()
        .map(|&y| {
            if y >= embedding.rows() {
                return Err(Error::OutOfVocab {
                    id: y,
                    vocab: embedding.rows(),
                });
            }
            Ok((y, cosine(embedding.row(y), h)?.max(0.0)))
        })
        .collect()
}
