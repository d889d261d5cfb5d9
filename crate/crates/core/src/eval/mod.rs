//! Translation and constraint metrics.

mod bleu;
mod constraint;
mod ter;

use serde::{Deserialize, Serialize};

pub use bleu::bleu;
pub use constraint::{csr, exact_match, window_overlap};
pub use ter::{ter_edits, term, weighted_edit_distance};

use crate::corpus::{find_subsequence, Tokens};
use crate::error::{Error, Result};

/// Edit weight of reference constraint tokens in TERm.
pub const TERM_WEIGHT: f64 = 2.0;

/// One hypothesis with what it is judged against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    pub hyp: Tokens,
    pub reference: Tokens,
    /// Required target constraints.
    pub constraints: Vec<Tokens>,
    /// Start of each constraint in the reference, if known.
    pub ref_positions: Vec<Option<usize>>,
}

impl EvalRecord {
    /// Reference positions default to each constraint's first occurrence.
    pub fn new(hyp: Tokens, reference: Tokens, constraints: Vec<Tokens>) -> Self {
        let ref_positions = constraints.iter().map(|c| find_subsequence(&reference, c)).collect();
        Self {
            hyp,
            reference,
            constraints,
            ref_positions,
        }
    }

    pub(crate) fn reference_position(&self, k: usize) -> Option<usize> {
        self.ref_positions
            .get(k)
            .copied()
            .flatten()
            .filter(|&p| p + self.constraints[k].len() <= self.reference.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisambigAccuracy {
    pub all: Option<f64>,
    /// Over instances with at least two candidates.
    pub ambiguous: Option<f64>,
}

pub fn disambig_accuracy(predictions: &[usize], golds: &[usize], n_candidates: &[usize]) -> Result<DisambigAccuracy> {
    if predictions.len() != golds.len() || golds.len() != n_candidates.len() {
        return Err(Error::Input(format!(
            "misaligned disambiguation inputs: {} predictions, {} golds, {} candidate counts",
            predictions.len(),
            golds.len(),
            n_candidates.len()
        )));
    }
    let acc = |keep: &dyn Fn(usize) -> bool| {
        let idx: Vec<usize> = (0..golds.len()).filter(|&i| keep(i)).collect();
        (!idx.is_empty()).then(|| {
            100.0 * idx.iter().filter(|&&i| predictions[i] == golds[i]).count() as f64 / idx.len() as f64
        })
    };
    Ok(DisambigAccuracy {
        all: acc(&|_| true),
        ambiguous: acc(&|i| n_candidates[i] >= 2),
    })
}

/// Exact-match and CSR for constraints of one length class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub length: String,
    pub n_constraints: usize,
    pub exact_match: Option<f64>,
    pub csr: Option<f64>,
}

pub const BUCKETS: [&str; 4] = ["1", "2", "3", ">=4"];

fn bucket_of(len: usize) -> usize {
    len.clamp(1, 4) - 1
}

/// Splits constraints by token length into the four buckets.
pub fn length_buckets(records: &[EvalRecord]) -> Vec<BucketRow> {
    (0..BUCKETS.len())
        .map(|b| {
            let sub: Vec<EvalRecord> = records
                .iter()
                .map(|r| {
                    let keep: Vec<usize> = (0..r.constraints.len())
                        .filter(|&k| bucket_of(r.constraints[k].len()) == b)
                        .collect();
                    EvalRecord {
                        hyp: r.hyp.clone(),
                        reference: r.reference.clone(),
                        constraints: keep.iter().map(|&k| r.constraints[k].clone()).collect(),
                        ref_positions: keep.iter().map(|&k| r.ref_positions[k]).collect(),
                    }
                })
                .collect();
            BucketRow {
                length: BUCKETS[b].to_owned(),
                n_constraints: sub.iter().map(|r| r.constraints.len()).sum(),
                exact_match: exact_match(&sub),
                csr: csr(&sub),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_sentences: usize,
    pub bleu: f64,
    pub exact_match: Option<f64>,
    pub csr: Option<f64>,
    pub window2: Option<f64>,
    pub window3: Option<f64>,
    pub one_minus_term: f64,
    pub disambig_accuracy: Option<DisambigAccuracy>,
    pub buckets: Vec<BucketRow>,
}

impl MetricReport {
    pub fn compute(records: &[EvalRecord], disambig: Option<DisambigAccuracy>) -> Result<Self> {
        let hyps: Vec<Tokens> = records.iter().map(|r| r.hyp.clone()).collect();
        let refs: Vec<Tokens> = records.iter().map(|r| r.reference.clone()).collect();
        Ok(Self {
            n_sentences: records.len(),
            bleu: bleu(&hyps, &refs)?,
            exact_match: exact_match(records),
            csr: csr(records),
            window2: window_overlap(records, 2),
            window3: window_overlap(records, 3),
            one_minus_term: term(records, TERM_WEIGHT, true)?,
            disambig_accuracy: disambig,
            buckets: length_buckets(records),
        })
    }

    /// Plain-text rendering for terminals.
    pub fn render_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.2}"));
        let mut out = String::new();
        out.push_str("BLEU   | Exact-Match | CSR    | Window 2 | Window 3 | 1 - TERm\n");
        out.push_str(&format!(
            "{:<6.2} | {:<11} | {:<6} | {:<8} | {:<8} | {:.2}\n",
            self.bleu,
            f(self.exact_match),
            f(self.csr),
            f(self.window2),
            f(self.window3),
            self.one_minus_term
        ));
        if let Some(d) = &self.disambig_accuracy {
            out.push_str(&format!("disambiguation accuracy: all {} / ambiguous {}\n", f(d.all), f(d.ambiguous)));
        }
        out.push_str("length | n    | Exact-Match | CSR\n");
        for b in &self.buckets {
            out.push_str(&format!(
                "{:<6} | {:<4} | {:<11} | {}\n",
                b.length,
                b.n_constraints,
                f(b.exact_match),
                f(b.csr)
            ));
        }
        out
    }
}
