use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::constraints::ConstraintSet;
use super::loss::PROB_FLOOR;
use super::model::{p_plug, GateMode, VecNmt};
use crate::corpus::{special, Tokens};
use crate::nnet::SelfCache;
use crate::error::{Error, Result};

/// Scoring rule for one search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// `P_model` only; constraints are not shown to the encoder.
    Vanilla,
    /// Gated `P_model`/`P_plug` mixture without progress tracking.
    Mixture,
    /// Mixture plus next-token boosting of partially emitted constraints.
    Gda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Hard cap on generated tokens; `None` means `2·|src| + 10`.
    pub max_steps: Option<usize>,
    /// Length normalization exponent.
    pub alpha: f64,
    pub gate: GateMode,
    /// Lets slot tags through (template route).
    pub allow_slots: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam: 4,
            max_steps: None,
            alpha: 0.6,
            gate: GateMode::Learned,
            allow_slots: false,
        }
    }
}

/// Progress of one target constraint along a hypothesis.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Tracker {
    ids: Vec<usize>,
    fail: Vec<usize>,
}

impl Tracker {
    fn new(ids: Vec<usize>) -> Self {
        let fail = failure_function(&ids);
        Self { ids, fail }
    }

    /// Cursor after emitting `tok`, using failure links on a mismatch.
    fn advance(&self, mut cursor: usize, tok: usize) -> usize {
        if cursor == self.ids.len() {
            return cursor;
        }
        while cursor > 0 && self.ids[cursor] != tok {
            cursor = self.fail[cursor - 1];
        }
        if self.ids[cursor] == tok {
            cursor + 1
        } else {
            0
        }
    }
}

/// `fail[i]` is the length of the longest proper prefix of `s[..=i]` that
/// is also its suffix.
pub fn failure_function<T: PartialEq>(s: &[T]) -> Vec<usize> {
    let mut fail = vec![0; s.len()];
    let mut k = 0;
    for i in 1..s.len() {
        while k > 0 && s[i] != s[k] {
            k = fail[k - 1];
        }
        if s[i] == s[k] {
            k += 1;
        }
        fail[i] = k;
    }
    fail
}

/// A partial or finished beam entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Starts with `[BOS]`.
    pub tokens: Vec<usize>,
    pub score: f64,
    /// Index of the first unmatched token of each constraint.
    pub cursors: Vec<usize>,
    pub finished: Vec<bool>,
    /// Next-token ids to boost at the coming step.
    pub boost: Vec<usize>,
}

impl Hypothesis {
    fn root(n_constraints: usize) -> Self {
        Self {
            tokens: vec![special::BOS_ID],
            score: 0.0,
            cursors: vec![0; n_constraints],
            finished: vec![false; n_constraints],
            boost: Vec::new(),
        }
    }

    fn generated(&self) -> usize {
        self.tokens.len() - 1
    }

    fn normalized(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            self.score
        } else {
            self.score / (self.generated().max(1) as f64).powf(alpha)
        }
    }

    fn extend(&self, tok: usize, logp: f64, trackers: &[Tracker]) -> Self {
        let mut next = Self {
            tokens: self.tokens.clone(),
            score: self.score + logp,
            cursors: self.cursors.clone(),
            finished: self.finished.clone(),
            boost: Vec::new(),
        };
        next.tokens.push(tok);
        for (n, tr) in trackers.iter().enumerate() {
            if next.finished[n] {
                continue;
            }
            let c = tr.advance(next.cursors[n], tok);
            next.cursors[n] = c;
            if c == tr.ids.len() {
                next.finished[n] = true;
            } else if c > 0 {
                next.boost.push(tr.ids[c]);
            }
        }
        next
    }
}

/// Result of a search.
#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    /// Generated ids without `[BOS]` and `[EOS]`.
    pub ids: Vec<usize>,
    pub tokens: Tokens,
    /// Cumulative log score of the returned hypothesis.
    pub score: f64,
    pub flags: Vec<String>,
}

/// Gated decoding with constraint progress tracking.
pub fn gda_decode(model: &VecNmt, src: &[String], cs: &ConstraintSet, cfg: &DecodeConfig) -> Result<Translation> {
    search(model, src, cs, cfg, DecodeMode::Gda)
}

/// Length-normalized beam search over `P_model` alone.
pub fn beam_search(model: &VecNmt, src: &[String], cfg: &DecodeConfig) -> Result<Translation> {
    search(model, src, &ConstraintSet::empty(), cfg, DecodeMode::Vanilla)
}

/// Shared search loop. Candidates are ranked by cumulative score, then
/// parent index, then token id.
pub fn search(
    model: &VecNmt,
    src: &[String],
    cs: &ConstraintSet,
    cfg: &DecodeConfig,
    mode: DecodeMode,
) -> Result<Translation> {
    if cfg.beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let shown = if mode == DecodeMode::Vanilla {
        ConstraintSet::empty()
    } else {
        cs.clone()
    };
    let memory = model.encode(src, &shown)?;
    let vocab = model.vocab.len();
    let allowed: Vec<usize> = (0..vocab)
        .filter(|&id| {
            id == special::EOS_ID
                || !crate::corpus::Vocabulary::is_reserved(id)
                || (cfg.allow_slots && (special::FIRST_SLOT_ID..special::N_RESERVED).contains(&id))
        })
        .collect();
    let trackers: Vec<Tracker> = if mode == DecodeMode::Gda {
        shown.pairs().iter().map(|p| Tracker::new(model.vocab.encode(&p.tgt))).collect()
    } else {
        Vec::new()
    };
    let plug_set: BTreeSet<usize> = shown.token_set(&model.vocab);
    let max_steps = cfg.max_steps.unwrap_or(2 * src.len() + 10);

    let cross = model.cross_cache(&memory);
    // Each live hypothesis carries the decoder cache for all but its last
    // token; the last one is fed when the hypothesis is expanded.
    let mut live = vec![(Hypothesis::root(trackers.len()), SelfCache::default())];
    let mut done: Vec<Hypothesis> = Vec::new();
    let mut mix = vec![0.0; vocab];
    for _ in 0..max_steps {
        let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * cfg.beam);
        let mut caches = Vec::with_capacity(live.len());
        for (hi, (hyp, cache)) in live.iter_mut().enumerate() {
            let mut cache = std::mem::take(cache);
            let last = *hyp.tokens.last().expect("hypotheses start with BOS");
            let out = model.step_cached(last, &cross, &mut cache)?;
            caches.push(cache);
            let pm = out.probs();
            match mode {
                DecodeMode::Vanilla => mix.copy_from_slice(&pm),
                DecodeMode::Mixture | DecodeMode::Gda => {
                    let g = model.gate(&out.hidden, cfg.gate);
                    for (m, p) in mix.iter_mut().zip(&pm) {
                        *m = (1.0 - g) * p;
                    }
                    let mut pp: Vec<(usize, f64)> = p_plug(&out.hidden, &plug_set, model.embedding())?;
                    for &b in &hyp.boost {
                        match pp.iter_mut().find(|(y, _)| *y == b) {
                            Some(e) => e.1 = 1.0,
                            None => pp.push((b, 1.0)),
                        }
                    }
                    for (y, v) in pp {
                        mix[y] = (1.0 - g) * pm[y] + g * v;
                    }
                }
            }
            // Only the best `beam` extensions of a parent can survive.
            let mut local: Vec<(f64, usize)> = allowed
                .iter()
                .map(|&y| (hyp.score + mix[y].max(PROB_FLOOR).ln(), y))
                .collect();
            let keep = cfg.beam.min(local.len());
            local.select_nth_unstable_by(keep - 1, |a, b| rank(a.0, 0, a.1, b.0, 0, b.1));
            local.truncate(keep);
            cands.extend(local.into_iter().map(|(s, y)| (s, hi, y)));
        }
        cands.sort_by(|a, b| rank(a.0, a.1, a.2, b.0, b.1, b.2));
        cands.truncate(cfg.beam);
        let mut next = Vec::with_capacity(cfg.beam);
        for (score, hi, y) in cands {
            let parent = &live[hi].0;
            let child = parent.extend(y, score - parent.score, &trackers);
            if y == special::EOS_ID {
                done.push(child);
            } else {
                next.push((child, caches[hi].clone()));
            }
        }
        live = next;
        if live.is_empty() || done.len() >= cfg.beam {
            break;
        }
        if cfg.alpha == 0.0 {
            let best_done = done.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|(h, _)| h.score).fold(f64::NEG_INFINITY, f64::max);
            if best_done >= best_live {
                break;
            }
        }
    }

    let mut flags = Vec::new();
    let pool = if done.is_empty() {
        flags.push("max_steps".to_owned());
        live.into_iter().map(|(h, _)| h).collect()
    } else {
        done
    };
    let best = pool
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| {
            a.normalized(cfg.alpha)
                .partial_cmp(&b.normalized(cfg.alpha))
                .unwrap_or(Ordering::Equal)
                .then(j.cmp(i))
        })
        .map(|(_, h)| h)
        .ok_or_else(|| Error::Input("search produced no hypothesis".into()))?;
    let ids: Vec<usize> = best.tokens[1..]
        .iter()
        .copied()
        .filter(|&y| y != special::EOS_ID)
        .collect();
    Ok(Translation {
        tokens: model.vocab.decode(&ids),
        ids,
        score: best.score,
        flags,
    })
}

/// Descending score, then ascending parent, then ascending token.
fn rank(sa: f64, ha: usize, ya: usize, sb: f64, hb: usize, yb: usize) -> Ordering {
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then(ha.cmp(&hb))
        .then(ya.cmp(&yb))
}
