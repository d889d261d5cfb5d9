use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{ConstraintInstance, Tokens};
use crate::error::{Error, Result};

/// Negatives for one instance. `padded` is set when the pool ran dry and
/// some negatives were drawn with replacement (or fewer than `k` exist).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    pub negatives: Vec<Tokens>,
    pub padded: bool,
}

/// Own non-gold candidates first (without replacement), then gold
/// candidates of other batch members, then padding with replacement.
pub fn sample_negatives<R: Rng>(
    instance: &ConstraintInstance,
    batch_golds: &[Tokens],
    k: usize,
    rng: &mut R,
) -> Result<NegativeSample> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let gold = instance
        .gold_candidate()
        .ok_or_else(|| Error::Input("negative sampling needs a gold candidate".into()))?;

    let mut own: Vec<&Tokens> = instance.candidates.iter().filter(|c| *c != gold).collect();
    own.shuffle(rng);
    let mut negatives: Vec<Tokens> = own.iter().take(k).map(|c| (*c).clone()).collect();

    let mut pool: Vec<&Tokens> = Vec::new();
    for g in batch_golds {
        if g != gold && !instance.candidates.contains(g) && !pool.contains(&g) {
            pool.push(g);
        }
    }
    pool.shuffle(rng);
    let need = k - negatives.len();
    negatives.extend(pool.iter().take(need).map(|c| (*c).clone()));

    let mut padded = false;
    if negatives.len() < k {
        padded = true;
        let fallback: Vec<&Tokens> = own.iter().copied().chain(pool.iter().copied()).collect();
        if !fallback.is_empty() {
            while negatives.len() < k {
                negatives.push(fallback[rng.random_range(0..fallback.len())].clone());
            }
        }
    }
    Ok(NegativeSample { negatives, padded })
}
