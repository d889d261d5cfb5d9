//! Oracle-separable synthetic corpora.
//!
//! Every constraint instance is followed in the source by exactly one context
//! marker token; the marker determines the gold candidate. The target
//! side is a token-wise, order-preserving mapping of the source (filler
//! `sN` → `tN`, marker `mI_K` → `nI_K`) with each lexicon span replaced by
//! its gold candidate. Gold indices cycle through reshuffled permutations
//! per lexicon, so gold counts stay uniform to within one.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{find_subsequence, AnnotatedPair, ConstraintInstance, ConstraintInventory, Tokens};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Lexicons with `n_candidates_per_lexicon` candidates each.
    pub n_lexicons: usize,
    pub n_candidates_per_lexicon: usize,
    /// Extra single-candidate lexicons.
    pub n_unambiguous: usize,
    pub n_sentences: usize,
    /// Inclusive range of filler tokens per sentence.
    pub sentence_len_range: (usize, usize),
    /// Inclusive range of candidate lengths in tokens.
    pub candidate_len_range: (usize, usize),
    pub n_filler_words: usize,
    /// Shared token pool for multi-token candidates.
    pub n_candidate_tokens: usize,
    /// Fraction of sentences generated without any lexicon.
    pub unconstrained_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_lexicons: 50,
            n_candidates_per_lexicon: 3,
            n_unambiguous: 10,
            n_sentences: 5000,
            sentence_len_range: (4, 8),
            candidate_len_range: (1, 4),
            n_filler_words: 40,
            n_candidate_tokens: 60,
            unconstrained_rate: 0.1,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// A few hundred sentences; enough to exercise every command quickly.
    pub fn small() -> Self {
        Self {
            n_lexicons: 12,
            n_unambiguous: 4,
            n_sentences: 400,
            n_filler_words: 16,
            n_candidate_tokens: 24,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.n_candidates_per_lexicon < 2 {
            return bad("n_candidates_per_lexicon must be >= 2 to produce ambiguity");
        }
        if self.n_lexicons == 0 || self.n_sentences == 0 || self.n_filler_words == 0 {
            return bad("n_lexicons, n_sentences and n_filler_words must be >= 1");
        }
        let (lo, hi) = self.sentence_len_range;
        if lo == 0 || lo > hi {
            return bad("sentence_len_range must satisfy 1 <= min <= max");
        }
        let (clo, chi) = self.candidate_len_range;
        if clo == 0 || clo > chi {
            return bad("candidate_len_range must satisfy 1 <= min <= max");
        }
        if chi >= 2 && self.n_candidate_tokens < 4 {
            return bad("n_candidate_tokens too small for multi-token candidates");
        }
        if !(0.0..1.0).contains(&self.unconstrained_rate) {
            return bad("unconstrained_rate must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Sentence counts in the All / Constrained / Amb. Constrained layout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    pub all: usize,
    pub constrained: usize,
    pub ambiguous: usize,
}

impl TableCounts {
    pub fn of(pairs: &[AnnotatedPair]) -> Self {
        Self {
            all: pairs.len(),
            constrained: pairs.iter().filter(|p| !p.constraints.is_empty()).count(),
            ambiguous: pairs.iter().filter(|p| p.has_ambiguous()).count(),
        }
    }
}

struct Lexicon {
    tokens: Tokens,
    candidates: Vec<Tokens>,
    markers: Vec<String>,
    gold_cycle: Vec<usize>,
}

impl Lexicon {
    fn next_gold(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.gold_cycle.is_empty() {
            self.gold_cycle = (0..self.candidates.len()).collect();
            self.gold_cycle.shuffle(rng);
        }
        self.gold_cycle.pop().expect("refilled above")
    }
}

fn target_of_marker(marker: &str) -> String {
    format!("n{}", &marker[1..])
}

/// Builds globally distinct candidates such that no candidate occurs inside
/// another one; this keeps gold recovery by substring search unambiguous.
fn make_candidates(
    cfg: &SynthConfig,
    n_lexicons: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Tokens>> {
    let (lo, hi) = cfg.candidate_len_range;
    let span = hi - lo + 1;
    let mut all: Vec<Tokens> = Vec::new();
    let mut out = Vec::with_capacity(n_lexicons);
    let mut unique_single = 0usize;
    for i in 0..n_lexicons {
        let n_cands = if i < cfg.n_lexicons {
            cfg.n_candidates_per_lexicon
        } else {
            1
        };
        let mut cands = Vec::with_capacity(n_cands);
        for k in 0..n_cands {
            let len = lo + (i + k) % span;
            let cand = if len == 1 {
                unique_single += 1;
                vec![format!("u{}", unique_single - 1)]
            } else {
                loop {
                    let c: Tokens = (0..len)
                        .map(|_| format!("c{}", rng.random_range(0..cfg.n_candidate_tokens)))
                        .collect();
                    let clash = all.iter().any(|o| {
                        find_subsequence(o, &c).is_some() || find_subsequence(&c, o).is_some()
                    });
                    if !clash {
                        break c;
                    }
                }
            };
            all.push(cand.clone());
            cands.push(cand);
        }
        out.push(cands);
    }
    out
}

/// Generates an inventory and a corpus of annotated pairs.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(ConstraintInventory, Vec<AnnotatedPair>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_total = cfg.n_lexicons + cfg.n_unambiguous;
    let cand_sets = make_candidates(cfg, n_total, &mut rng);
    let mut lexicons: Vec<Lexicon> = cand_sets
        .into_iter()
        .enumerate()
        .map(|(i, candidates)| {
            let (tag, idx) = if i < cfg.n_lexicons {
                ("L", i)
            } else {
                ("U", i - cfg.n_lexicons)
            };
            let tokens = if i % 4 == 3 {
                vec![format!("{tag}{idx}"), format!("{tag}{idx}x")]
            } else {
                vec![format!("{tag}{idx}")]
            };
            let markers = (0..candidates.len())
                .map(|k| format!("m{tag}{idx}_{k}"))
                .collect();
            Lexicon {
                tokens,
                candidates,
                markers,
                gold_cycle: Vec::new(),
            }
        })
        .collect();

    let mut inventory = ConstraintInventory::new();
    for lex in &lexicons {
        inventory.insert(lex.tokens.clone(), lex.candidates.clone());
    }

    // A lexicon unit is the lexicon immediately followed by its marker.
    enum Unit {
        Filler(usize),
        Lexicon(usize, usize),
    }

    let lex_ids: Vec<usize> = (0..n_total).collect();
    let mut pairs = Vec::with_capacity(cfg.n_sentences);
    for _ in 0..cfg.n_sentences {
        let n_fill = rng.random_range(cfg.sentence_len_range.0..=cfg.sentence_len_range.1);
        let mut units: Vec<Unit> = (0..n_fill)
            .map(|_| Unit::Filler(rng.random_range(0..cfg.n_filler_words)))
            .collect();
        let n_cons = if rng.random_bool(cfg.unconstrained_rate) {
            0
        } else {
            rng.random_range(1..=3usize.min(n_total))
        };
        let chosen: Vec<usize> = lex_ids.choose_multiple(&mut rng, n_cons).copied().collect();
        for &li in &chosen {
            let gold = lexicons[li].next_gold(&mut rng);
            units.push(Unit::Lexicon(li, gold));
        }
        // Reshuffle until no candidate is spuriously spelled across the
        // boundary of two adjacent constraint spans in the target.
        let (src, tgt, constraints) = loop {
            units.shuffle(&mut rng);
            let mut src = Vec::new();
            let mut tgt = Vec::new();
            let mut constraints = Vec::new();
            for u in &units {
                match u {
                    Unit::Filler(j) => {
                        src.push(format!("s{j}"));
                        tgt.push(format!("t{j}"));
                    }
                    Unit::Lexicon(li, gold) => {
                        let lex = &lexicons[*li];
                        let start = src.len();
                        src.extend(lex.tokens.iter().cloned());
                        tgt.extend(lex.candidates[*gold].iter().cloned());
                        constraints.push(ConstraintInstance {
                            span: start..src.len(),
                            lexicon: lex.tokens.clone(),
                            candidates: lex.candidates.clone(),
                            gold: Some(*gold),
                        });
                        let marker = &lex.markers[*gold];
                        src.push(marker.clone());
                        tgt.push(target_of_marker(marker));
                    }
                }
            }
            let clean = constraints.iter().all(|c: &ConstraintInstance| {
                c.candidates
                    .iter()
                    .position(|cand| find_subsequence(&tgt, cand).is_some())
                    == c.gold
            });
            if clean {
                break (src, tgt, constraints);
            }
        };
        pairs.push(AnnotatedPair {
            src,
            tgt: Some(tgt),
            constraints,
        });
    }
    Ok((inventory, pairs))
}
