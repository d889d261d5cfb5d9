use std::collections::BTreeSet;

use crate::corpus::{find_subsequence, special, AnnotatedPair, Tokens, Vocabulary, MAX_CONSTRAINTS};
use crate::error::{Error, Result};

/// A source lexicon and the target phrase that must appear for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintPair {
    pub src: Tokens,
    pub tgt: Tokens,
    /// Start of the first occurrence of `tgt` in the reference target.
    /// Training only.
    pub ref_pos: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pairs: Vec<ConstraintPair>,
}

impl ConstraintSet {
    pub fn new(pairs: Vec<ConstraintPair>) -> Result<Self> {
        if pairs.len() > MAX_CONSTRAINTS {
            return Err(Error::Input(format!(
                "{} constraints exceed the cap of {MAX_CONSTRAINTS}",
                pairs.len()
            )));
        }
        if pairs.iter().any(|p| p.tgt.is_empty()) {
            return Err(Error::Input("empty target constraint".into()));
        }
        Ok(Self { pairs })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Gold constraints of an annotated pair, with reference positions when
    /// the target is known. Instances without gold are skipped.
    pub fn from_gold(pair: &AnnotatedPair) -> Result<Self> {
        let choices: Vec<Option<usize>> = pair.constraints.iter().map(|c| c.gold).collect();
        Self::from_choices(pair, &choices)
    }

    /// One chosen candidate per instance; `None` drops the instance.
    pub fn from_choices(pair: &AnnotatedPair, choices: &[Option<usize>]) -> Result<Self> {
        if choices.len() != pair.constraints.len() {
            return Err(Error::Input(format!(
                "{} choices for {} constraint instances",
                choices.len(),
                pair.constraints.len()
            )));
        }
        let mut pairs = Vec::new();
        for (inst, choice) in pair.constraints.iter().zip(choices) {
            let Some(k) = *choice else { continue };
            let tgt = inst
                .candidates
                .get(k)
                .ok_or_else(|| Error::Input(format!("choice {k} out of range")))?
                .clone();
            let ref_pos = pair.tgt.as_deref().and_then(|t| find_subsequence(t, &tgt));
            pairs.push(ConstraintPair {
                src: inst.lexicon.clone(),
                tgt,
                ref_pos,
            });
        }
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[ConstraintPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn targets(&self) -> Vec<Tokens> {
        self.pairs.iter().map(|p| p.tgt.clone()).collect()
    }

    /// Vocabulary ids of every target constraint token, excluding `[UNK]`.
    pub fn token_set(&self, vocab: &Vocabulary) -> BTreeSet<usize> {
        self.pairs
            .iter()
            .flat_map(|p| vocab.encode(&p.tgt))
            .filter(|&id| id != special::UNK_ID)
            .collect()
    }
}
