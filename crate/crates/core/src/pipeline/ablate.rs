use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    corpus_vocab, eval_records, select_constraints, translate_all, write_json, Backend, RunConfig, Selector,
};
use crate::corpus::{read_corpus, tokenize, AnnotatedPair};
use crate::disambig::{train_disambiguator, GoldStats};
use crate::error::Result;
use crate::eval::{disambig_accuracy, DisambigAccuracy, MetricReport};
use crate::vecnmt::{train_nmt, DecodeMode, NmtConfig, VecNmt};

/// One cell of the integrity-loss × decoding grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub lambda: f64,
    pub mode: DecodeMode,
    pub metrics: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorRow {
    pub selector: Selector,
    pub disambig_accuracy: DisambigAccuracy,
    pub metrics: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub command: String,
    pub config: RunConfig,
    pub rows: Vec<AblationRow>,
    pub selectors: Vec<SelectorRow>,
}

impl AblationReport {
    pub fn render_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.2}"));
        let mut out = String::from("row           | BLEU   | EM     | CSR    | EM@1   | EM@2   | EM@3   | EM@>=4\n");
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{:<13} | {:<6.2} | {:<6} | {:<6} | {:<6} | {:<6} | {:<6} | {}\n",
                r.name,
                m.bleu,
                f(m.exact_match),
                f(m.csr),
                f(m.buckets[0].exact_match),
                f(m.buckets[1].exact_match),
                f(m.buckets[2].exact_match),
                f(m.buckets[3].exact_match),
            ));
        }
        out.push_str("\nselector | Acc all | Acc amb | BLEU   | EM\n");
        for s in &self.selectors {
            out.push_str(&format!(
                "{:<8} | {:<7} | {:<7} | {:<6.2} | {}\n",
                s.selector.name(),
                f(s.disambig_accuracy.all),
                f(s.disambig_accuracy.ambiguous),
                s.metrics.bleu,
                f(s.metrics.exact_match)
            ));
        }
        out
    }
}

fn evaluate(pairs: &[AnnotatedPair], hyps: &[super::TranslateRecord], acc: Option<DisambigAccuracy>) -> Result<MetricReport> {
    let toks: Vec<_> = hyps.iter().map(|r| tokenize(&r.hyp)).collect();
    MetricReport::compute(&eval_records(pairs, &toks)?, acc)
}

/// The four grid rows plus an unconstrained decode of the full model, all
/// with gold constraints. `full` was trained with `lambda`, `orig` without
/// the integrity term.
pub fn ablation_grid(
    full: &VecNmt,
    orig: &VecNmt,
    lambda: f64,
    pairs: &[AnnotatedPair],
    cfg: &RunConfig,
) -> Result<Vec<AblationRow>> {
    let gold = select_constraints(pairs, Selector::Gold, None, None, 0)?;
    let grid = [
        ("full", full, lambda, DecodeMode::Gda),
        ("wo_gda", full, lambda, DecodeMode::Mixture),
        ("wo_integrity", orig, 0.0, DecodeMode::Gda),
        ("original", orig, 0.0, DecodeMode::Mixture),
        ("vanilla", full, lambda, DecodeMode::Vanilla),
    ];
    grid.into_iter()
        .map(|(name, model, lambda, mode)| {
            let run = RunConfig { mode, ..cfg.clone() };
            let hyps = translate_all(model, Backend::Vec, pairs, &gold, &run)?;
            Ok(AblationRow {
                name: name.to_owned(),
                lambda,
                mode,
                metrics: evaluate(pairs, &hyps, None)?,
            })
        })
        .collect()
}

fn choice_accuracy(pairs: &[AnnotatedPair], choices: &[Vec<Option<usize>>]) -> Result<DisambigAccuracy> {
    let (mut pred, mut gold, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for (p, row) in pairs.iter().zip(choices) {
        for (c, ch) in p.constraints.iter().zip(row) {
            if let (Some(g), Some(ch)) = (c.gold, ch) {
                pred.push(*ch);
                gold.push(g);
                n.push(c.candidates.len());
            }
        }
    }
    disambig_accuracy(&pred, &gold, &n)
}

/// Trains the full and integrity-free translation models and a stage-1
/// model on `train`, then evaluates the grid and every selector on `test`.
/// Checkpoints and `ablation.json` land in `out_dir`.
pub fn cmd_ablate(cfg: &RunConfig, train: &Path, test: &Path, out_dir: &Path) -> Result<AblationReport> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let train_pairs = read_corpus(train)?;
    let test_pairs = read_corpus(test)?;
    let vocab = corpus_vocab(&train_pairs);
    let meta = |what: &str| serde_json::json!({ "command": "ablate", "model": what, "backend": Backend::Vec, "config": cfg });

    let (full, _) = train_nmt(&train_pairs, vocab.clone(), &cfg.nmt)?;
    full.save(&out_dir.join("nmt_full.lxf"), meta("full"))?;
    let orig_cfg = NmtConfig { lambda: 0.0, ..cfg.nmt.clone() };
    let (orig, _) = train_nmt(&train_pairs, vocab.clone(), &orig_cfg)?;
    orig.save(&out_dir.join("nmt_orig.lxf"), meta("original"))?;
    let (stage1, _) = train_disambiguator(&train_pairs, vocab, &cfg.stage1)?;
    stage1.save(&out_dir.join("stage1.lxf"), meta("stage1"))?;

    let rows = ablation_grid(&full, &orig, cfg.nmt.lambda, &test_pairs, &cfg)?;

    let disambig = super::par_map(cfg.threads, &test_pairs, |sid, p| {
        p.constraints
            .iter()
            .filter(|c| !c.candidates.is_empty())
            .map(|c| {
                let d = stage1.disambiguate(&c.lexicon, &p.src, c.span.clone(), &c.candidates)?;
                Ok(super::DisambigRecord {
                    sent_id: sid,
                    span: [c.span.start, c.span.end],
                    chosen: d.chosen,
                    scores: d.scores,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect::<Vec<_>>();
    let stats = GoldStats::from_pairs(&train_pairs);
    let selectors = [Selector::Stage1, Selector::Random, Selector::MostFreq, Selector::Gold]
        .into_iter()
        .map(|sel| {
            let choices = select_constraints(&test_pairs, sel, Some(&disambig), Some(&stats), cfg.selector_seed())?;
            let run = RunConfig { mode: DecodeMode::Gda, ..cfg.clone() };
            let hyps = translate_all(&full, Backend::Vec, &test_pairs, &choices, &run)?;
            let acc = choice_accuracy(&test_pairs, &choices)?;
            Ok(SelectorRow {
                selector: sel,
                disambig_accuracy: acc,
                metrics: evaluate(&test_pairs, &hyps, Some(acc))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let report = AblationReport {
        command: "ablate".into(),
        config: cfg,
        rows,
        selectors,
    };
    write_json(&out_dir.join("ablation.json"), &report)?;
    Ok(report)
}
