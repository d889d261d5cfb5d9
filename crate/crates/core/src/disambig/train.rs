use std::collections::HashMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::contrastive_on;
use super::negatives::sample_negatives;
use super::network::{build_context_input, ContextInput, DisambigModel};
use crate::corpus::{AnnotatedPair, Tokens, Vocabulary};
use crate::error::{Error, Result};
use crate::nnet::{Adam, AdamConfig, Dropout, Gradients, ModelConfig, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub model: ModelConfig,
    /// Negatives per instance.
    pub k: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            k: 5,
            batch_size: 32,
            steps: 1000,
            seed: 13,
            adam: AdamConfig {
                peak_lr: 2e-3,
                warmup: 100,
                ..AdamConfig::default()
            },
        }
    }
}

/// One training instance with its negatives already drawn.
#[derive(Clone, Debug)]
pub struct Stage1Example {
    pub input: ContextInput,
    pub positive: Tokens,
    pub negatives: Vec<Tokens>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean per-instance loss of each step.
    pub losses: Vec<f64>,
    /// Steps in which at least one instance needed padded negatives.
    pub padded_steps: usize,
}

impl TrainLog {
    /// Trailing moving average; entry `i` averages steps `i+1-window ..= i`.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        if window == 0 || self.losses.len() < window {
            return Vec::new();
        }
        self.losses
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect()
    }
}

impl DisambigModel {
    fn batch_loss_on(&self, t: &mut Tape, examples: &[Stage1Example], drop: Option<(u64, u64)>) -> Result<crate::nnet::Var> {
        let dropout = |example: u64| {
            drop.filter(|_| self.cfg.dropout > 0.0).map(|(seed, step)| Dropout {
                rate: self.cfg.dropout,
                seed,
                step,
                example,
            })
        };
        let mut ctx = Vec::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            ctx.push(self.context_on(t, &ex.input, dropout(i as u64).as_ref())?);
        }
        // Each distinct candidate is encoded once per batch.
        let mut index: HashMap<&Tokens, usize> = HashMap::new();
        let mut cand_vars = Vec::new();
        let mut rows = Vec::with_capacity(examples.len());
        for ex in examples {
            let mut r = Vec::with_capacity(1 + ex.negatives.len());
            for c in std::iter::once(&ex.positive).chain(&ex.negatives) {
                let next = index.len();
                let slot = *index.entry(c).or_insert(next);
                if slot == cand_vars.len() {
                    let d = dropout((examples.len() + slot) as u64);
                    cand_vars.push(self.constraint_on(t, c, d.as_ref())?);
                }
                r.push(slot);
            }
            rows.push(r);
        }
        let contexts = t.concat_rows(&ctx);
        let cands = t.concat_rows(&cand_vars);
        contrastive_on(t, contexts, cands, &rows)
    }

    /// Summed contrastive loss over `examples`, without dropout.
    pub fn loss(&self, examples: &[Stage1Example]) -> Result<f64> {
        let mut t = Tape::new(&self.params);
        let l = self.batch_loss_on(&mut t, examples, None)?;
        Ok(t.scalar(l))
    }

    /// Summed loss and its gradient, without dropout.
    pub fn loss_and_grads(&self, examples: &[Stage1Example]) -> Result<(f64, Gradients)> {
        let mut t = Tape::new(&self.params);
        let l = self.batch_loss_on(&mut t, examples, None)?;
        Ok((t.scalar(l), t.backward(l)?))
    }
}

/// Trains both encoders and adaptation layers on every gold-annotated
/// instance in `pairs`.
pub fn train_disambiguator(
    pairs: &[AnnotatedPair],
    vocab: Vocabulary,
    cfg: &Stage1Config,
) -> Result<(DisambigModel, TrainLog)> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let pool: Vec<(usize, usize)> = pairs
        .iter()
        .enumerate()
        .flat_map(|(p, pair)| {
            pair.constraints
                .iter()
                .enumerate()
                .filter(|(_, c)| c.gold.is_some())
                .map(move |(i, _)| (p, i))
        })
        .collect();
    if !pool.iter().any(|&(p, i)| pairs[p].constraints[i].is_ambiguous()) {
        return Err(Error::Input(
            "training corpus has no gold-annotated ambiguous instance".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = DisambigModel::new(cfg.model.clone(), vocab, &mut rng)?;
    let mut adam = Adam::new(cfg.adam.clone(), &model.params);
    let mut log = TrainLog::default();
    let mut order = pool.clone();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(pool.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let golds: Vec<Tokens> = batch
            .iter()
            .map(|&(p, i)| pairs[p].constraints[i].gold_candidate().cloned().unwrap_or_default())
            .collect();
        let mut padded = false;
        let mut examples = Vec::with_capacity(batch.len());
        for &(p, i) in &batch {
            let inst = &pairs[p].constraints[i];
            let neg = sample_negatives(inst, &golds, cfg.k, &mut rng)?;
            padded |= neg.padded;
            examples.push(Stage1Example {
                input: build_context_input(&inst.lexicon, &pairs[p].src, inst.span.clone())?,
                positive: inst.gold_candidate().cloned().unwrap_or_default(),
                negatives: neg.negatives,
            });
        }
        let (loss, mut grads) = {
            let mut t = Tape::new(&model.params);
            let l = model.batch_loss_on(&mut t, &examples, Some((cfg.seed, step)))?;
            (t.scalar(l), t.backward(l)?)
        };
        let n = examples.len() as f64;
        grads.scale(1.0 / n);
        adam.step(&mut model.params, &grads)?;
        log.losses.push(loss / n);
        log.padded_steps += usize::from(padded);
        if step % 100 == 0 {
            debug!("stage1 step {step} loss {:.4}", loss / n);
        }
    }
    if let Some(last) = log.losses.last() {
        info!("stage1 trained {} steps, final loss {last:.4}", cfg.steps);
    }
    Ok((model, log))
}
