//! Data model, inventory/corpus files, constraint spotting, and the
//! synthetic ambiguous-constraint generator.

mod annotate;
mod inventory;
mod io;
mod split;
mod synth;
mod vocab;

use std::ops::Range;

pub use annotate::{annotate, find_subsequence, MAX_CONSTRAINTS};
pub use inventory::{load_inventory, ConstraintInventory};
pub use io::{read_corpus, write_atomic, write_corpus, CorpusRecord, InstanceRecord};
pub use split::split;
pub use synth::{generate_synthetic, SynthConfig, TableCounts};
pub use vocab::{special, Vocabulary};

use crate::error::{Error, Result};

/// Whitespace-tokenized text.
pub type Tokens = Vec<String>;

pub fn tokenize(text: &str) -> Tokens {
    text.split_whitespace().map(str::to_owned).collect()
}

pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// One occurrence of an inventory lexicon in a source sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintInstance {
    /// Half-open token range into the source sentence.
    pub span: Range<usize>,
    pub lexicon: Tokens,
    pub candidates: Vec<Tokens>,
    pub gold: Option<usize>,
}

impl ConstraintInstance {
    pub fn is_ambiguous(&self) -> bool {
        self.candidates.len() >= 2
    }

    pub fn gold_candidate(&self) -> Option<&Tokens> {
        self.gold.map(|g| &self.candidates[g])
    }
}

/// A sentence pair with its constraint instances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedPair {
    pub src: Tokens,
    pub tgt: Option<Tokens>,
    pub constraints: Vec<ConstraintInstance>,
}

impl AnnotatedPair {
    pub fn has_ambiguous(&self) -> bool {
        self.constraints.iter().any(ConstraintInstance::is_ambiguous)
    }

    /// Checks every structural invariant of the pair.
    pub fn validate(&self) -> Result<()> {
        if self.constraints.len() > MAX_CONSTRAINTS {
            return Err(Error::Input(format!(
                "{} constraints exceed the cap of {MAX_CONSTRAINTS}",
                self.constraints.len()
            )));
        }
        let mut prev_end = 0;
        let mut spans: Vec<&Range<usize>> = self.constraints.iter().map(|c| &c.span).collect();
        spans.sort_by_key(|s| s.start);
        for s in &spans {
            if s.start < prev_end {
                return Err(Error::Input("overlapping constraint spans".into()));
            }
            prev_end = s.end;
        }
        for c in &self.constraints {
            if c.span.start >= c.span.end || c.span.end > self.src.len() {
                return Err(Error::Input(format!("span {:?} out of range", c.span)));
            }
            if self.src[c.span.clone()] != c.lexicon[..] {
                return Err(Error::Input(format!(
                    "span {:?} does not cover lexicon {:?}",
                    c.span, c.lexicon
                )));
            }
            if c.candidates.is_empty() || c.candidates.iter().any(Vec::is_empty) {
                return Err(Error::Input("empty candidate list or candidate".into()));
            }
            if let Some(g) = c.gold {
                if g >= c.candidates.len() {
                    return Err(Error::Input(format!("gold index {g} out of range")));
                }
                if let Some(tgt) = &self.tgt {
                    if find_subsequence(tgt, &c.candidates[g]).is_none() {
                        return Err(Error::Input(format!(
                            "gold candidate {:?} missing from target",
                            c.candidates[g]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
