use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedPair, ConstraintInstance, Tokens};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Random,
    #[serde(rename = "mostfreq")]
    MostFrequent,
}

/// How often each candidate was gold for each lexicon in training data.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldStats {
    counts: HashMap<Tokens, HashMap<Tokens, usize>>,
}

impl GoldStats {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a AnnotatedPair>) -> Self {
        let mut stats = Self::default();
        for p in pairs {
            for c in &p.constraints {
                if let Some(g) = c.gold_candidate() {
                    stats.record(&c.lexicon, g);
                }
            }
        }
        stats
    }

    pub fn record(&mut self, lexicon: &[String], candidate: &[String]) {
        *self
            .counts
            .entry(lexicon.to_vec())
            .or_default()
            .entry(candidate.to_vec())
            .or_default() += 1;
    }

    pub fn count(&self, lexicon: &[String], candidate: &[String]) -> usize {
        self.counts
            .get(lexicon)
            .and_then(|m| m.get(candidate))
            .copied()
            .unwrap_or(0)
    }
}

/// Non-learned candidate choice. Most-frequent ties (including a lexicon
/// never seen in training) go to the lowest index.
pub fn baseline_select<R: Rng>(
    instance: &ConstraintInstance,
    policy: Policy,
    stats: &GoldStats,
    rng: &mut R,
) -> usize {
    let n = instance.candidates.len();
    if n <= 1 {
        return 0;
    }
    match policy {
        Policy::Random => rng.random_range(0..n),
        Policy::MostFrequent => {
            let mut best = 0;
            let mut best_count = stats.count(&instance.lexicon, &instance.candidates[0]);
            for (i, c) in instance.candidates.iter().enumerate().skip(1) {
                let k = stats.count(&instance.lexicon, c);
                if k > best_count {
                    best = i;
                    best_count = k;
                }
            }
            best
        }
    }
}
