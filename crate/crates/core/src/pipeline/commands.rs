use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    corpus_vocab, eval_records, meta_path, read_jsonl, select_constraints, translate_all, write_artifact, write_json,
    Backend, DisambigRecord, RunConfig, Selector, TranslateRecord,
};
use crate::corpus::{generate_synthetic, read_corpus, split, tokenize, write_corpus, TableCounts};
use crate::disambig::{train_disambiguator, DisambigModel, GoldStats, TrainLog};
use crate::error::{Error, Result};
use crate::eval::{disambig_accuracy, DisambigAccuracy, MetricReport};
use crate::template::templated_train;
use crate::vecnmt::{train_nmt, NmtLog, VecNmt};

/// Sentence counts for the generated corpus and each split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub lexicons: usize,
    pub ambiguous_lexicons: usize,
    pub all: TableCounts,
    pub train: TableCounts,
    pub valid: TableCounts,
    pub test: TableCounts,
}

impl SynthSummary {
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "inventory: {} lexicons ({} ambiguous)\nsplit  | All   | Constrained | Amb. Constrained\n",
            self.lexicons, self.ambiguous_lexicons
        );
        for (name, c) in [("all", self.all), ("train", self.train), ("valid", self.valid), ("test", self.test)] {
            out.push_str(&format!("{name:<6} | {:<5} | {:<11} | {}\n", c.all, c.constrained, c.ambiguous));
        }
        out
    }
}

/// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl`, `inventory.tsv` and
/// `synth.json` under `out_dir`.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<SynthSummary> {
    let cfg = cfg.resolved();
    let (inventory, pairs) = generate_synthetic(&cfg.synth)?;
    let (train, valid, test) = split(&pairs, cfg.split, cfg.split_seed())?;
    write_corpus(&out_dir.join("train.jsonl"), &train)?;
    write_corpus(&out_dir.join("valid.jsonl"), &valid)?;
    write_corpus(&out_dir.join("test.jsonl"), &test)?;
    inventory.save(&out_dir.join("inventory.tsv"))?;
    let summary = SynthSummary {
        lexicons: inventory.len(),
        ambiguous_lexicons: inventory.n_ambiguous(),
        all: TableCounts::of(&pairs),
        train: TableCounts::of(&train),
        valid: TableCounts::of(&valid),
        test: TableCounts::of(&test),
    };
    write_json(
        &out_dir.join("synth.json"),
        &serde_json::json!({ "command": "synth", "config": cfg, "counts": summary }),
    )?;
    Ok(summary)
}

pub fn cmd_train_stage1(cfg: &RunConfig, train: &Path, out: &Path) -> Result<TrainLog> {
    let cfg = cfg.resolved();
    let pairs = read_corpus(train)?;
    let (model, log) = train_disambiguator(&pairs, corpus_vocab(&pairs), &cfg.stage1)?;
    let summary = serde_json::json!({
        "steps": log.losses.len(),
        "final_loss": log.moving_average(50).last(),
        "padded_steps": log.padded_steps,
    });
    model.save(
        out,
        serde_json::json!({ "command": "train-stage1", "config": cfg, "summary": summary }),
    )?;
    Ok(log)
}

/// Scores every instance that has candidates.
pub fn cmd_disambiguate(cfg: &RunConfig, model: &Path, corpus: &Path, out: &Path) -> Result<Vec<DisambigRecord>> {
    let cfg = cfg.resolved();
    let model = DisambigModel::load(model)?;
    let pairs = read_corpus(corpus)?;
    let per_sentence = super::par_map(cfg.threads, &pairs, |sid, p| {
        p.constraints
            .iter()
            .filter(|c| !c.candidates.is_empty())
            .map(|c| {
                let d = model.disambiguate(&c.lexicon, &p.src, c.span.clone(), &c.candidates)?;
                Ok(DisambigRecord {
                    sent_id: sid,
                    span: [c.span.start, c.span.end],
                    chosen: d.chosen,
                    scores: d.scores,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let records: Vec<DisambigRecord> = per_sentence.into_iter().flatten().collect();
    write_artifact(out, &records, &cfg, "disambiguate")?;
    Ok(records)
}

/// Trains the backend named in `cfg.backend`.
pub fn cmd_train_nmt(cfg: &RunConfig, train: &Path, out: &Path) -> Result<NmtLog> {
    let cfg = cfg.resolved();
    let pairs = read_corpus(train)?;
    let vocab = corpus_vocab(&pairs);
    let (model, log) = match cfg.backend {
        Backend::Vec => train_nmt(&pairs, vocab, &cfg.nmt)?,
        Backend::Template => templated_train(&pairs, vocab, &cfg.nmt)?,
    };
    let tail = |xs: &[f64]| {
        let k = xs.len().min(50);
        xs[xs.len() - k..].iter().sum::<f64>() / k.max(1) as f64
    };
    model.save(
        out,
        serde_json::json!({
            "command": "train-nmt",
            "backend": cfg.backend,
            "config": cfg,
            "final_loss": tail(&log.total),
        }),
    )?;
    Ok(log)
}

/// Loads a translation checkpoint and checks it was trained for `backend`.
pub fn load_nmt(path: &Path, backend: Backend) -> Result<VecNmt> {
    let (model, run) = VecNmt::load(path)?;
    let trained: Backend = serde_json::from_value(run["backend"].clone())
        .map_err(|_| Error::Checkpoint(format!("{} does not record its backend", path.display())))?;
    if trained != backend {
        return Err(Error::Config(format!(
            "{} was trained for backend {}, but backend {} was requested",
            path.display(),
            trained.name(),
            backend.name()
        )));
    }
    Ok(model)
}

/// Inputs of `translate`. `disambig` is needed by the stage-1 selector and
/// `train` (for gold statistics) by the most-frequent selector.
#[derive(Clone, Debug, Default)]
pub struct TranslateInputs {
    pub model: PathBuf,
    pub corpus: PathBuf,
    pub disambig: Option<PathBuf>,
    pub train: Option<PathBuf>,
}

pub fn cmd_translate(cfg: &RunConfig, inputs: &TranslateInputs, out: &Path) -> Result<Vec<TranslateRecord>> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let model = load_nmt(&inputs.model, cfg.backend)?;
    let pairs = read_corpus(&inputs.corpus)?;
    let disambig = match (&inputs.disambig, cfg.selector) {
        (Some(p), Selector::Stage1) => Some(read_jsonl::<DisambigRecord>(p)?),
        _ => None,
    };
    let stats = match (&inputs.train, cfg.selector) {
        (Some(p), Selector::MostFreq) => Some(GoldStats::from_pairs(&read_corpus(p)?)),
        _ => None,
    };
    let choices = select_constraints(&pairs, cfg.selector, disambig.as_deref(), stats.as_ref(), cfg.selector_seed())?;
    let records = translate_all(&model, cfg.backend, &pairs, &choices, &cfg)?;
    write_artifact(out, &records, &cfg, "translate")?;
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub command: String,
    pub config: RunConfig,
    /// Config recorded next to the hypotheses, if any.
    pub hypotheses_config: Option<serde_json::Value>,
    pub metrics: MetricReport,
}

/// Accuracy of disambiguation records against gold, over instances that
/// have both.
pub fn disambig_accuracy_of(
    pairs: &[crate::corpus::AnnotatedPair],
    records: &[DisambigRecord],
) -> Result<DisambigAccuracy> {
    let by_key: HashMap<(usize, [usize; 2]), usize> =
        records.iter().map(|r| ((r.sent_id, r.span), r.chosen)).collect();
    let (mut pred, mut gold, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for (sid, p) in pairs.iter().enumerate() {
        for c in &p.constraints {
            if let (Some(g), Some(&ch)) = (c.gold, by_key.get(&(sid, [c.span.start, c.span.end]))) {
                pred.push(ch);
                gold.push(g);
                n.push(c.candidates.len());
            }
        }
    }
    disambig_accuracy(&pred, &gold, &n)
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    hyps: &Path,
    corpus: &Path,
    disambig: Option<&Path>,
    out: &Path,
) -> Result<EvaluateReport> {
    let cfg = cfg.resolved();
    let pairs = read_corpus(corpus)?;
    let records: Vec<TranslateRecord> = read_jsonl(hyps)?;
    if records.len() != pairs.len() || records.iter().enumerate().any(|(i, r)| r.sent_id != i) {
        return Err(Error::Input(format!(
            "{} does not hold one hypothesis per sentence of {} in order",
            hyps.display(),
            corpus.display()
        )));
    }
    let hyp_tokens: Vec<_> = records.iter().map(|r| tokenize(&r.hyp)).collect();
    let acc = match disambig {
        Some(p) => Some(disambig_accuracy_of(&pairs, &read_jsonl(p)?)?),
        None => None,
    };
    let metrics = MetricReport::compute(&eval_records(&pairs, &hyp_tokens)?, acc)?;
    let hypotheses_config = match std::fs::read_to_string(meta_path(hyps)) {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(_) => None,
    };
    let report = EvaluateReport {
        command: "evaluate".into(),
        config: cfg,
        hypotheses_config,
        metrics,
    };
    write_json(out, &report)?;
    Ok(report)
}
