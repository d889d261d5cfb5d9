//! Stage 2b: slot templates. Constraint spans become `<Cn>` tags on both
//! sides, a plain translation model learns to move the tags, and the
//! decoded tags are replaced by the chosen constraint phrases.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{detokenize, find_subsequence, special, tokenize, AnnotatedPair, Tokens, Vocabulary};
use crate::error::{Error, Result};
use crate::vecnmt::{beam_search, train_nmt, DecodeConfig, GateMode, NmtConfig, NmtLog, VecNmt};

/// A slotted sentence pair. `align[k]` is the source slot number (1-based)
/// of the `k`-th tag on the target side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplatePair {
    pub src_t: Tokens,
    pub tgt_t: Option<Tokens>,
    pub align: Vec<usize>,
    /// Payload of source slot `n` at index `n-1`.
    pub payloads: Vec<Tokens>,
}

/// JSON-lines form of a [`TemplatePair`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub src_t: String,
    pub tgt_t: String,
    pub align: Vec<usize>,
    pub payloads: Vec<String>,
}

impl From<&TemplatePair> for TemplateRecord {
    fn from(t: &TemplatePair) -> Self {
        Self {
            src_t: detokenize(&t.src_t),
            tgt_t: t.tgt_t.as_deref().map(detokenize).unwrap_or_default(),
            align: t.align.clone(),
            payloads: t.payloads.iter().map(|p| detokenize(p)).collect(),
        }
    }
}

impl From<&TemplateRecord> for TemplatePair {
    fn from(r: &TemplateRecord) -> Self {
        Self {
            src_t: tokenize(&r.src_t),
            tgt_t: Some(tokenize(&r.tgt_t)),
            align: r.align.clone(),
            payloads: r.payloads.iter().map(|p| tokenize(p)).collect(),
        }
    }
}

fn slot_token(n: usize) -> String {
    special::SLOTS[n - 1].to_owned()
}

/// Source template for the instances selected by `choices` (in instance
/// order); unselected instances keep their surface tokens.
fn source_side(pair: &AnnotatedPair, choices: &[Option<usize>]) -> Result<(Tokens, Vec<Tokens>, Vec<usize>)> {
    if choices.len() != pair.constraints.len() {
        return Err(Error::Input(format!(
            "{} choices for {} constraint instances",
            choices.len(),
            pair.constraints.len()
        )));
    }
    let mut picked: Vec<(Range<usize>, Tokens, usize)> = Vec::new();
    for (i, (inst, choice)) in pair.constraints.iter().zip(choices).enumerate() {
        if let Some(k) = *choice {
            let payload = inst
                .candidates
                .get(k)
                .ok_or_else(|| Error::Input(format!("choice {k} out of range")))?;
            picked.push((inst.span.clone(), payload.clone(), i));
        }
    }
    if picked.len() > special::SLOTS.len() {
        return Err(Error::Input(format!("{} slots exceed the tag inventory", picked.len())));
    }
    picked.sort_by_key(|(s, _, _)| s.start);
    let mut src_t = Vec::with_capacity(pair.src.len());
    let mut at = 0;
    for (n, (span, _, _)) in picked.iter().enumerate() {
        src_t.extend_from_slice(&pair.src[at..span.start]);
        src_t.push(slot_token(n + 1));
        at = span.end;
    }
    src_t.extend_from_slice(&pair.src[at..]);
    let order = picked.iter().map(|(_, _, i)| *i).collect();
    Ok((src_t, picked.into_iter().map(|(_, p, _)| p).collect(), order))
}

/// Slots every gold constraint on both sides.
pub fn extract_template(pair: &AnnotatedPair) -> Result<TemplatePair> {
    let tgt = pair
        .tgt
        .as_ref()
        .ok_or_else(|| Error::Input("template extraction needs a target".into()))?;
    let choices: Vec<Option<usize>> = pair.constraints.iter().map(|c| c.gold).collect();
    let (src_t, payloads, _) = source_side(pair, &choices)?;

    // Leftmost occurrence that does not touch one already taken.
    let mut taken: Vec<(Range<usize>, usize)> = Vec::new();
    for (n, payload) in payloads.iter().enumerate() {
        let mut from = 0;
        let mut clash = false;
        let found = loop {
            let Some(off) = find_subsequence(&tgt[from..], payload) else { break None };
            let r = from + off..from + off + payload.len();
            if taken.iter().any(|(t, _)| t.start < r.end && r.start < t.end) {
                clash = true;
                from = r.start + 1;
                continue;
            }
            break Some(r);
        };
        match found {
            Some(r) => taken.push((r, n + 1)),
            None if clash => {
                return Err(Error::Input(format!(
                    "target occurrence of {payload:?} overlaps another constraint"
                )))
            }
            None => return Err(Error::Input(format!("constraint {payload:?} not found in target"))),
        }
    }
    taken.sort_by_key(|(r, _)| r.start);
    let mut tgt_t = Vec::with_capacity(tgt.len());
    let mut at = 0;
    for (r, n) in &taken {
        tgt_t.extend_from_slice(&tgt[at..r.start]);
        tgt_t.push(slot_token(*n));
        at = r.end;
    }
    tgt_t.extend_from_slice(&tgt[at..]);
    Ok(TemplatePair {
        src_t,
        tgt_t: Some(tgt_t),
        align: taken.iter().map(|(_, n)| *n).collect(),
        payloads,
    })
}

/// A filled translation and the repairs applied to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filled {
    pub tokens: Tokens,
    pub flags: Vec<String>,
}

/// Replaces each tag by its payload. The first copy of a tag is filled and
/// later copies dropped; tags without a payload are dropped; payloads whose
/// tag never appeared are appended unless already present verbatim.
pub fn fill_template(decoded: &[String], payloads: &[Tokens]) -> Filled {
    let mut used = vec![false; payloads.len()];
    let mut tokens = Vec::with_capacity(decoded.len());
    let mut flags = Vec::new();
    for tok in decoded {
        match special::slot_index(tok).map(|i| i + 1) {
            Some(n) if n <= payloads.len() => {
                if used[n - 1] {
                    flags.push(format!("duplicate_slot:{n}"));
                } else {
                    used[n - 1] = true;
                    tokens.extend(payloads[n - 1].iter().cloned());
                }
            }
            Some(n) => flags.push(format!("unknown_slot:{n}")),
            None => tokens.push(tok.clone()),
        }
    }
    for (i, p) in payloads.iter().enumerate() {
        if !used[i] {
            flags.push(format!("missing_slot:{}", i + 1));
            if find_subsequence(&tokens, p).is_none() {
                tokens.extend(p.iter().cloned());
            }
        }
    }
    Filled { tokens, flags }
}

/// Trains a plain translation model on slotted pairs.
pub fn templated_train(pairs: &[AnnotatedPair], vocab: Vocabulary, cfg: &NmtConfig) -> Result<(VecNmt, NmtLog)> {
    let slotted = pairs
        .iter()
        .map(|p| {
            let t = extract_template(p)?;
            Ok(AnnotatedPair {
                src: t.src_t,
                tgt: t.tgt_t,
                constraints: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = NmtConfig {
        lambda: 0.0,
        gate: GateMode::Fixed(0.0),
        use_constraints: false,
        ..cfg.clone()
    };
    train_nmt(&slotted, vocab, &cfg)
}

/// Slots the chosen candidates, decodes, and fills the tags back in.
pub fn templated_translate(
    model: &VecNmt,
    pair: &AnnotatedPair,
    choices: &[Option<usize>],
    cfg: &DecodeConfig,
) -> Result<Filled> {
    let (src_t, payloads, _) = source_side(pair, choices)?;
    let cfg = DecodeConfig {
        allow_slots: true,
        ..cfg.clone()
    };
    let out = beam_search(model, &src_t, &cfg)?;
    let mut filled = fill_template(&out.tokens, &payloads);
    filled.flags.extend(out.flags);
    Ok(filled)
}
