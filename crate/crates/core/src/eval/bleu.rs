use std::collections::HashMap;

use crate::error::{Error, Result};

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 on whitespace tokens, case-sensitive. Unigram precision
/// is unsmoothed; higher orders use add-one smoothing.
pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64> {
    if hyps.is_empty() {
        return Err(Error::Input("BLEU over an empty hypothesis set".into()));
    }
    if hyps.len() != refs.len() {
        return Err(Error::Input(format!("{} hypotheses for {} references", hyps.len(), refs.len())));
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let hc = ngrams(h, n);
            let rc = ngrams(rf, n);
            totals[n - 1] += hc.values().sum::<usize>();
            matches[n - 1] += hc
                .iter()
                .map(|(g, k)| (*k).min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if c == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_p = (matches[0] as f64 / totals[0] as f64).ln();
    for n in 1..4 {
        log_p += ((matches[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(100.0 * bp * (log_p / 4.0).exp())
}
