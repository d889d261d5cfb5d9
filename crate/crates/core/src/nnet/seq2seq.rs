use rand::Rng;

use super::dropout::Dropout;
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::incremental::{CrossCache, SelfCache};
use super::tensor::{dot, softmax};
use super::transformer::{Decoder, Encoder};
use super::{Matrix, ModelConfig};
use crate::error::{Error, Result};

/// Name of the shared token embedding. The same tensor is the encoder and
/// decoder lookup table and the output projection.
pub const EMBED: &str = "embed";

/// Encoder–decoder transformer with a single tied embedding matrix.
#[derive(Clone, Debug)]
pub struct Seq2Seq {
    pub cfg: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

/// Output of one incremental decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl StepOutput {
    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

impl Seq2Seq {
    pub fn init<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Encoder::init(store, "enc", EMBED, cfg, rng);
        Decoder::init(store, "dec", EMBED, cfg, rng);
        Self::bind(store, cfg)
    }

    pub fn bind(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            encoder: Encoder::bind(store, "enc", EMBED, cfg)?,
            decoder: Decoder::bind(store, "dec", EMBED, cfg)?,
        })
    }

    pub fn embed_id(&self) -> ParamId {
        self.decoder.embed.table
    }

    /// `h · Wᵀ` with the tied embedding matrix.
    pub fn logits(&self, t: &mut Tape, hidden: Var) -> Var {
        let w = t.param(self.embed_id());
        t.matmul_bt(hidden, w)
    }

    pub fn encode_on(
        &self,
        t: &mut Tape,
        ids: &[usize],
        positions: &[usize],
        drop: Option<&Dropout>,
    ) -> Result<Var> {
        self.encoder.forward(t, ids, positions, None, drop)
    }

    /// Encoder output as a plain matrix, for decoding.
    pub fn encode(&self, params: &ParamStore, ids: &[usize], positions: &[usize]) -> Result<Matrix> {
        let mut t = Tape::new(params);
        let h = self.encode_on(&mut t, ids, positions, None)?;
        Ok(t.value(h).clone())
    }

    /// Teacher-forced decoder hidden states for a whole prefix.
    pub fn decode_all(&self, params: &ParamStore, prefix: &[usize], memory: &Matrix) -> Result<Matrix> {
        let mut t = Tape::new(params);
        let mem = t.constant(memory.clone());
        let h = self.decoder.forward(&mut t, prefix, mem, None)?;
        Ok(t.value(h).clone())
    }

    /// Cross-attention cache for stepping with [`Seq2Seq::step_cached`].
    pub fn cross_cache(&self, params: &ParamStore, memory: &Matrix) -> CrossCache {
        self.decoder.cross_cache(params, memory)
    }

    /// Same output as [`Seq2Seq::decode_step`] on the prefix fed so far
    /// plus `token`, without recomputing earlier positions.
    pub fn step_cached(
        &self,
        params: &ParamStore,
        token: usize,
        cross: &CrossCache,
        cache: &mut SelfCache,
    ) -> Result<StepOutput> {
        let hidden = self.decoder.step_cached(params, token, cross, cache)?;
        let embed = params.get(self.embed_id());
        let logits = (0..embed.rows()).map(|r| dot(&hidden, embed.row(r))).collect();
        Ok(StepOutput { hidden, logits })
    }

    /// Hidden state and vocabulary logits for the last prefix position.
    pub fn decode_step(&self, params: &ParamStore, prefix: &[usize], memory: &Matrix) -> Result<StepOutput> {
        if prefix.is_empty() {
            return Err(Error::Input("decode_step needs a non-empty prefix".into()));
        }
        let mut t = Tape::new(params);
        let mem = t.constant(memory.clone());
        let h = self.decoder.forward(&mut t, prefix, mem, None)?;
        let last = t.gather(h, &[prefix.len() - 1]);
        let logits = self.logits(&mut t, last);
        Ok(StepOutput {
            hidden: t.value(last).data().to_vec(),
            logits: t.value(logits).data().to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cached_steps_match_full_recompute() {
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 2,
            ffn_dim: 16,
            vocab_size: 12,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::default();
        let model = Seq2Seq::init(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let memory = model.encode(&store, &[3, 5, 7, 9], &[0, 1, 2, 3]).unwrap();
        let cross = model.cross_cache(&store, &memory);
        let mut cache = SelfCache::default();
        let prefix = [1, 4, 4, 10, 2];
        for n in 1..=prefix.len() {
            let full = model.decode_step(&store, &prefix[..n], &memory).unwrap();
            let inc = model.step_cached(&store, prefix[n - 1], &cross, &mut cache).unwrap();
            for (a, b) in full.hidden.iter().zip(&inc.hidden).chain(full.logits.iter().zip(&inc.logits)) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b} at step {n}");
            }
        }
        assert_eq!(cache.len(), prefix.len());
    }
}
