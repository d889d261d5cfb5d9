use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{special, Vocabulary};
use crate::error::{Error, Result};
use crate::nnet::{checkpoint, cosine, glorot, Dropout, Encoder, ModelConfig, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Context,
    Constraint,
}

/// Output of an adaptation layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub side: Side,
}

/// Assembled context-encoder input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextInput {
    pub tokens: Vec<String>,
    pub positions: Vec<usize>,
}

/// `[CLS] lexicon [SEP] sentence`, with every occurrence of the lexicon in
/// the sentence replaced token-for-token by `[MASK]`. The sentence segment
/// restarts its position counter at zero.
pub fn build_context_input(lexicon: &[String], sentence: &[String], span: Range<usize>) -> Result<ContextInput> {
    if lexicon.is_empty() || span.end > sentence.len() || sentence[span.clone()] != *lexicon {
        return Err(Error::Input(format!(
            "span {span:?} does not locate lexicon {lexicon:?}"
        )));
    }
    let mut masked = sentence.to_vec();
    let n = lexicon.len();
    let mut i = 0;
    while i + n <= masked.len() {
        if sentence[i..i + n] == *lexicon {
            masked[i..i + n].iter_mut().for_each(|t| *t = special::MASK.to_owned());
            i += n;
        } else {
            i += 1;
        }
    }
    let mut tokens = vec![special::CLS.to_owned()];
    tokens.extend(lexicon.iter().cloned());
    tokens.push(special::SEP.to_owned());
    let head = tokens.len();
    tokens.extend(masked);
    let positions = (0..head).chain(0..sentence.len()).collect();
    Ok(ContextInput { tokens, positions })
}

/// Ranked result of cosine-argmax selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Disambiguation {
    pub chosen: usize,
    pub scores: Vec<f64>,
}

/// Context encoder, constraint encoder and both adaptation layers.
#[derive(Clone, Debug)]
pub struct DisambigModel {
    pub cfg: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    ctx: Encoder,
    cst: Encoder,
    w: [ParamId; 4],
}

const CTX: &str = "ctx";
const CST: &str = "cst";
const ADAPT: [&str; 4] = ["adapt.w1", "adapt.w2", "adapt.w3", "adapt.w4"];

impl DisambigModel {
    pub fn new<R: Rng>(cfg: ModelConfig, vocab: Vocabulary, rng: &mut R) -> Result<Self> {
        let params = Self::fresh_params(&cfg, &vocab, rng)?;
        Self::from_parts(cfg, vocab, params)
    }

    fn fresh_params<R: Rng>(cfg: &ModelConfig, vocab: &Vocabulary, rng: &mut R) -> Result<ParamStore> {
        let mut cfg = cfg.clone();
        cfg.vocab_size = vocab.len();
        cfg.validate()?;
        let mut params = ParamStore::new();
        Encoder::init(&mut params, CTX, "ctx.embed", &cfg, rng);
        Encoder::init(&mut params, CST, "cst.embed", &cfg, rng);
        for name in ADAPT {
            params.add(name, glorot(cfg.d_model, cfg.d_model, rng));
        }
        Ok(params)
    }

    pub fn from_parts(mut cfg: ModelConfig, vocab: Vocabulary, params: ParamStore) -> Result<Self> {
        cfg.vocab_size = vocab.len();
        cfg.validate()?;
        let ctx = Encoder::bind(&params, CTX, "ctx.embed", &cfg)?;
        let cst = Encoder::bind(&params, CST, "cst.embed", &cfg)?;
        let w = [
            params.expect_id(ADAPT[0])?,
            params.expect_id(ADAPT[1])?,
            params.expect_id(ADAPT[2])?,
            params.expect_id(ADAPT[3])?,
        ];
        Ok(Self {
            cfg,
            vocab,
            params,
            ctx,
            cst,
            w,
        })
    }

    /// Parameter ids of the context branch (encoder + W1, W2).
    pub fn context_param_ids(&self) -> Vec<ParamId> {
        self.branch_ids("ctx.", [ADAPT[0], ADAPT[1]])
    }

    /// Parameter ids of the constraint branch (encoder + W3, W4).
    pub fn constraint_param_ids(&self) -> Vec<ParamId> {
        self.branch_ids("cst.", [ADAPT[2], ADAPT[3]])
    }

    fn branch_ids(&self, prefix: &str, adapt: [&str; 2]) -> Vec<ParamId> {
        self.params
            .iter()
            .filter(|(_, n, _)| n.starts_with(prefix) || adapt.contains(n))
            .map(|(id, _, _)| id)
            .collect()
    }

    fn adapt(&self, t: &mut Tape, h: Var, wa: ParamId, wb: ParamId) -> Var {
        let (wa, wb) = (t.param(wa), t.param(wb));
        let z = t.matmul(h, wa);
        let z = t.tanh(z);
        t.matmul(z, wb)
    }

    /// `e_s` as a `1×d` tape node.
    pub fn context_on(
        &self,
        t: &mut Tape,
        input: &ContextInput,
        drop: Option<&Dropout>,
    ) -> Result<Var> {
        let ids = self.vocab.encode(&input.tokens);
        let h = self.ctx.forward(t, &ids, &input.positions, None, drop)?;
        let cls = t.gather(h, &[0]);
        Ok(self.adapt(t, cls, self.w[0], self.w[1]))
    }

    /// `e_m` as a `1×d` tape node.
    pub fn constraint_on(&self, t: &mut Tape, candidate: &[String], drop: Option<&Dropout>) -> Result<Var> {
        if candidate.is_empty() {
            return Err(Error::Input("empty candidate".into()));
        }
        let mut ids = vec![special::CLS_ID];
        ids.extend(self.vocab.encode(candidate));
        let positions: Vec<usize> = (0..ids.len()).collect();
        let h = self.cst.forward(t, &ids, &positions, None, drop)?;
        let cls = t.gather(h, &[0]);
        Ok(self.adapt(t, cls, self.w[2], self.w[3]))
    }

    pub fn encode_context(&self, lexicon: &[String], sentence: &[String], span: Range<usize>) -> Result<EmbeddingVector> {
        let input = build_context_input(lexicon, sentence, span)?;
        let mut t = Tape::new(&self.params);
        let e = self.context_on(&mut t, &input, None)?;
        Ok(EmbeddingVector {
            values: t.value(e).data().to_vec(),
            side: Side::Context,
        })
    }

    pub fn encode_constraint(&self, candidate: &[String]) -> Result<EmbeddingVector> {
        let mut t = Tape::new(&self.params);
        let e = self.constraint_on(&mut t, candidate, None)?;
        Ok(EmbeddingVector {
            values: t.value(e).data().to_vec(),
            side: Side::Constraint,
        })
    }

    /// Cosine-argmax over candidates; ties go to the lowest index.
    pub fn disambiguate(
        &self,
        lexicon: &[String],
        sentence: &[String],
        span: Range<usize>,
        candidates: &[Vec<String>],
    ) -> Result<Disambiguation> {
        if candidates.is_empty() {
            return Err(Error::Input("no candidates to choose from".into()));
        }
        let e_s = self.encode_context(lexicon, sentence, span)?;
        let scores = candidates
            .iter()
            .map(|c| cosine(&e_s.values, &self.encode_constraint(c)?.values))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Disambiguation {
            chosen: argmax_lowest(&scores),
            scores,
        })
    }

    pub fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "stage1",
            "model": self.cfg,
            "vocab": self.vocab,
            "run": extra,
        });
        checkpoint::save(path, &meta, &self.params)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (meta, params) = checkpoint::load(path)?;
        if meta["kind"] != "stage1" {
            return Err(Error::Checkpoint(format!(
                "{} is not a stage-1 checkpoint",
                path.display()
            )));
        }
        let cfg: ModelConfig = serde_json::from_value(meta["model"].clone())?;
        let vocab: Vocabulary = serde_json::from_value(meta["vocab"].clone())?;
        let expected = Self::fresh_params(&cfg, &vocab, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        checkpoint::validate_layout(&params, &expected)?;
        Self::from_parts(cfg, vocab, params)
    }
}

/// Index of the maximum, preferring the lowest index among ties.
pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
