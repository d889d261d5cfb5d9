use super::EvalRecord;
use crate::error::{Error, Result};

/// Longest block considered for a shift.
const MAX_SHIFT: usize = 10;

/// Weighted edit distance turning `hyp` into `reference`. Substituting or
/// dropping a reference token costs `weights[j]`; inserting a spurious
/// hypothesis token costs 1.
pub fn weighted_edit_distance(hyp: &[String], reference: &[String], weights: &[f64]) -> f64 {
    let (n, m) = (hyp.len(), reference.len());
    let mut prev: Vec<f64> = (0..=m).map(|j| weights[..j].iter().sum()).collect();
    let mut cur = vec![0.0; m + 1];
    for i in 1..=n {
        cur[0] = i as f64;
        for j in 1..=m {
            let sub = if hyp[i - 1] == reference[j - 1] {
                0.0
            } else {
                weights[j - 1]
            };
            cur[j] = (prev[j - 1] + sub)
                .min(prev[j] + 1.0)
                .min(cur[j - 1] + weights[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

fn contains_block(hay: &[String], block: &[String]) -> bool {
    hay.windows(block.len()).any(|w| w == block)
}

/// Edits plus shifts for one record. Shifts move a hypothesis block that
/// also occurs in the reference; each costs 1 and is taken greedily while
/// it strictly lowers the total.
pub fn ter_edits(hyp: &[String], reference: &[String], weights: &[f64], shifts: bool) -> f64 {
    let mut cur = hyp.to_vec();
    let mut best = weighted_edit_distance(&cur, reference, weights);
    let mut n_shifts = 0.0;
    while shifts {
        let mut found: Option<(f64, Vec<String>)> = None;
        for start in 0..cur.len() {
            for len in 1..=MAX_SHIFT.min(cur.len() - start) {
                let block = &cur[start..start + len];
                if !contains_block(reference, block) {
                    break;
                }
                let mut rest = cur[..start].to_vec();
                rest.extend_from_slice(&cur[start + len..]);
                for dest in 0..=rest.len() {
                    if dest == start {
                        continue;
                    }
                    let mut cand = rest[..dest].to_vec();
                    cand.extend_from_slice(block);
                    cand.extend_from_slice(&rest[dest..]);
                    let d = weighted_edit_distance(&cand, reference, weights);
                    if d + 1.0 < best && found.as_ref().is_none_or(|(fd, _)| d < *fd) {
                        found = Some((d, cand));
                    }
                }
            }
        }
        match found {
            Some((d, cand)) => {
                best = d;
                cur = cand;
                n_shifts += 1.0;
            }
            None => break,
        }
    }
    best + n_shifts
}

/// Corpus-level `(1 - TERm)·100`, floored at zero. Reference tokens inside
/// a constraint occurrence weigh `w`.
pub fn term(records: &[EvalRecord], w: f64, shifts: bool) -> Result<f64> {
    let mut edits = 0.0;
    let mut len = 0usize;
    for r in records {
        if r.reference.is_empty() {
            return Err(Error::Input("TERm needs a non-empty reference".into()));
        }
        let mut weights = vec![1.0; r.reference.len()];
        for (k, c) in r.constraints.iter().enumerate() {
            if let Some(at) = r.reference_position(k) {
                weights[at..at + c.len()].iter_mut().for_each(|x| *x = w);
            }
        }
        edits += ter_edits(&r.hyp, &r.reference, &weights, shifts);
        len += r.reference.len();
    }
    if len == 0 {
        return Err(Error::Input("TERm over an empty corpus".into()));
    }
    Ok((100.0 * (1.0 - edits / len as f64)).max(0.0))
}
