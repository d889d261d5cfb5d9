use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::constraints::ConstraintSet;
use super::loss::NmtExample;
use super::model::{GateMode, VecNmt};
use crate::corpus::{AnnotatedPair, Vocabulary};
use crate::error::{Error, Result};
use crate::nnet::{Adam, AdamConfig, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmtConfig {
    pub model: ModelConfig,
    /// Weight of the integrity loss.
    pub lambda: f64,
    /// Integrity window half-width.
    pub window: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub gate: GateMode,
    /// Feed gold constraints to the encoder and plug distribution.
    pub use_constraints: bool,
}

impl Default for NmtConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lambda: 1.0,
            window: 5,
            batch_size: 16,
            steps: 2000,
            seed: 17,
            adam: AdamConfig {
                peak_lr: 3e-3,
                warmup: 200,
                ..AdamConfig::default()
            },
            gate: GateMode::Learned,
            use_constraints: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NmtLog {
    /// Per-token losses of each step.
    pub orig: Vec<f64>,
    pub integrity: Vec<f64>,
    pub total: Vec<f64>,
}

/// Trains on every pair with a target, feeding gold constraints.
pub fn train_nmt(pairs: &[AnnotatedPair], vocab: Vocabulary, cfg: &NmtConfig) -> Result<(VecNmt, NmtLog)> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = VecNmt::new(cfg.model.clone(), vocab, &mut rng)?;
    let examples = pairs
        .iter()
        .filter(|p| p.tgt.is_some())
        .map(|p| {
            let cs = if cfg.use_constraints {
                ConstraintSet::from_gold(p)?
            } else {
                ConstraintSet::empty()
            };
            model.prepare(p, &cs)
        })
        .collect::<Result<Vec<NmtExample>>>()?;
    if examples.is_empty() {
        return Err(Error::Input("no training pair has a target".into()));
    }

    let mut adam = Adam::new(cfg.adam.clone(), &model.params);
    let mut log = NmtLog::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let bs = cfg.batch_size.min(examples.len());
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(bs);
        while batch.len() < bs {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(examples[order[cursor]].clone());
            cursor += 1;
        }
        let (report, mut grads) =
            model.batch_step(&batch, cfg.lambda, cfg.window, cfg.gate, Some((cfg.seed, step)))?;
        let n = report.n_tokens as f64;
        grads.scale(1.0 / n);
        adam.step(&mut model.params, &grads)?;
        log.orig.push(report.orig / n);
        log.integrity.push(report.integrity / n);
        log.total.push(report.total / n);
        if step % 100 == 0 {
            debug!("nmt step {step} loss {:.4} (int {:.4})", report.total / n, report.integrity / n);
        }
    }
    if let Some(last) = log.total.last() {
        info!("nmt trained {} steps, final per-token loss {last:.4}", cfg.steps);
    }
    Ok((model, log))
}
