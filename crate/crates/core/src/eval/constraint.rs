use std::collections::HashMap;

use super::EvalRecord;
use crate::corpus::find_subsequence;

fn percent(num: f64, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num / den as f64)
}

/// Share of required constraints that appear contiguously in the
/// hypothesis. `None` when no record has a constraint.
pub fn exact_match(records: &[EvalRecord]) -> Option<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for r in records {
        for c in &r.constraints {
            total += 1;
            hit += usize::from(find_subsequence(&r.hyp, c).is_some());
        }
    }
    percent(hit as f64, total)
}

/// Token recall of constraint tokens. Each constraint consumes from its own
/// copy of the hypothesis multiset, so repeats inside one constraint need
/// repeats in the hypothesis.
pub fn csr(records: &[EvalRecord]) -> Option<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for r in records {
        let mut bag: HashMap<&str, usize> = HashMap::new();
        for t in &r.hyp {
            *bag.entry(t.as_str()).or_default() += 1;
        }
        for c in &r.constraints {
            let mut left = bag.clone();
            for t in c {
                total += 1;
                if let Some(k) = left.get_mut(t.as_str()).filter(|k| **k > 0) {
                    *k -= 1;
                    hit += 1;
                }
            }
        }
    }
    percent(hit as f64, total)
}

/// Up to `n` tokens on each side of `span` within `seq`.
fn context(seq: &[String], start: usize, len: usize, n: usize) -> Vec<&str> {
    let lo = start.saturating_sub(n);
    let hi = (start + len + n).min(seq.len());
    seq[lo..start]
        .iter()
        .chain(&seq[start + len..hi])
        .map(String::as_str)
        .collect()
}

fn multiset_overlap(a: &[&str], b: &[&str]) -> usize {
    let mut bag: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *bag.entry(t).or_default() += 1;
    }
    b.iter()
        .filter(|t| match bag.get_mut(*t) {
            Some(k) if *k > 0 => {
                *k -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Context agreement around matched constraints: the first hypothesis
/// occurrence is compared with the reference occurrence using windows of
/// `n` tokens per side, scored as multiset overlap over the larger window.
pub fn window_overlap(records: &[EvalRecord], n: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut total = 0usize;
    for r in records {
        for (k, c) in r.constraints.iter().enumerate() {
            total += 1;
            let Some(h) = find_subsequence(&r.hyp, c) else { continue };
            let Some(at) = r.reference_position(k) else { continue };
            let hw = context(&r.hyp, h, c.len(), n);
            let rw = context(&r.reference, at, c.len(), n);
            let den = hw.len().max(rw.len());
            sum += if den == 0 {
                1.0
            } else {
                multiset_overlap(&hw, &rw) as f64 / den as f64
            };
        }
    }
    percent(sum, total)
}
