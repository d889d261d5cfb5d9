//! End-to-end orchestration: artifacts on disk, constraint selection,
//! parallel translation and evaluation. The `lexi` binary is a thin shell
//! over the `cmd_*` functions here.
//!
//! Every JSONL artifact gets a `<file>.meta.json` sidecar holding the
//! resolved [`RunConfig`]; checkpoints and reports carry it inline.

mod ablate;
mod commands;
mod config;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use ablate::{ablation_grid, cmd_ablate, AblationReport, AblationRow, SelectorRow};
pub use commands::{
    cmd_disambiguate, cmd_evaluate, cmd_synth, cmd_train_nmt, cmd_train_stage1, cmd_translate, EvaluateReport,
    SynthSummary, TranslateInputs,
};
pub use config::{Backend, RunConfig, Selector, SEED_ENV};

use crate::corpus::{detokenize, find_subsequence, write_atomic, AnnotatedPair, Tokens, Vocabulary};
use crate::disambig::{baseline_select, GoldStats, Policy};
use crate::error::{Error, Result};
use crate::eval::EvalRecord;
use crate::template::templated_translate;
use crate::vecnmt::{search, ConstraintSet, VecNmt};

/// One line of the disambiguation output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisambigRecord {
    pub sent_id: usize,
    pub span: [usize; 2],
    pub chosen: usize,
    pub scores: Vec<f64>,
}

/// One line of the translation output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslateRecord {
    pub sent_id: usize,
    pub hyp: String,
    pub constraints_used: Vec<String>,
    pub flags: Vec<String>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{name}.meta.json"))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: no + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

/// JSONL body plus its config sidecar.
pub fn write_artifact<T: Serialize>(path: &Path, items: &[T], cfg: &RunConfig, command: &str) -> Result<()> {
    write_jsonl(path, items)?;
    write_json(
        &meta_path(path),
        &serde_json::json!({ "command": command, "config": cfg }),
    )
}

/// Vocabulary over sources, references and every candidate.
pub fn corpus_vocab(pairs: &[AnnotatedPair]) -> Vocabulary {
    let mut all: Vec<&String> = Vec::new();
    for p in pairs {
        all.extend(&p.src);
        all.extend(p.tgt.iter().flatten());
        for c in &p.constraints {
            all.extend(c.candidates.iter().flatten());
        }
    }
    Vocabulary::build(all)
}

/// Chosen candidate per instance for each sentence. Instances without
/// candidates get `None`; single-candidate instances always pick it.
pub fn select_constraints(
    pairs: &[AnnotatedPair],
    selector: Selector,
    disambig: Option<&[DisambigRecord]>,
    stats: Option<&GoldStats>,
    seed: u64,
) -> Result<Vec<Vec<Option<usize>>>> {
    let by_key: HashMap<(usize, [usize; 2]), usize> = disambig
        .unwrap_or_default()
        .iter()
        .map(|r| ((r.sent_id, r.span), r.chosen))
        .collect();
    if selector == Selector::Stage1 && disambig.is_none() {
        return Err(Error::Config("selector stage1 needs a disambiguation file".into()));
    }
    let empty = GoldStats::default();
    let stats = match (selector, stats) {
        (Selector::MostFreq, None) => {
            return Err(Error::Config("selector mostfreq needs training-corpus statistics".into()))
        }
        (_, s) => s.unwrap_or(&empty),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .enumerate()
        .map(|(sid, p)| {
            p.constraints
                .iter()
                .map(|c| {
                    let n = c.candidates.len();
                    if n == 0 {
                        return Ok(None);
                    }
                    let pick = match selector {
                        Selector::Gold => c.gold.ok_or_else(|| {
                            Error::Input(format!("sentence {sid}: selector gold needs gold annotations"))
                        })?,
                        Selector::Stage1 => *by_key.get(&(sid, [c.span.start, c.span.end])).ok_or_else(|| {
                            Error::Input(format!(
                                "sentence {sid}: no disambiguation for span [{}, {}]",
                                c.span.start, c.span.end
                            ))
                        })?,
                        Selector::Random => baseline_select(c, Policy::Random, stats, &mut rng),
                        Selector::MostFreq => baseline_select(c, Policy::MostFrequent, stats, &mut rng),
                    };
                    if pick >= n {
                        return Err(Error::Input(format!("sentence {sid}: choice {pick} out of {n} candidates")));
                    }
                    Ok(Some(pick))
                })
                .collect()
        })
        .collect()
}

/// Order-preserving parallel map on a dedicated pool.
pub fn par_map<T, U, F>(threads: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> Result<U> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
}

/// Translates every sentence with the given choices.
pub fn translate_all(
    model: &VecNmt,
    backend: Backend,
    pairs: &[AnnotatedPair],
    choices: &[Vec<Option<usize>>],
    cfg: &RunConfig,
) -> Result<Vec<TranslateRecord>> {
    if choices.len() != pairs.len() {
        return Err(Error::Input(format!("{} choice rows for {} sentences", choices.len(), pairs.len())));
    }
    par_map(cfg.threads, pairs, |sid, p| {
        let cs = ConstraintSet::from_choices(p, &choices[sid])?;
        let used: Vec<String> = cs.targets().iter().map(|t| detokenize(t)).collect();
        let (tokens, flags) = match backend {
            Backend::Vec => {
                let out = search(model, &p.src, &cs, &cfg.decode, cfg.mode)?;
                (out.tokens, out.flags)
            }
            Backend::Template => {
                let out = templated_translate(model, p, &choices[sid], &cfg.decode)?;
                (out.tokens, out.flags)
            }
        };
        Ok(TranslateRecord {
            sent_id: sid,
            hyp: detokenize(&tokens),
            constraints_used: used,
            flags,
        })
    })
}

/// Gold candidates as required constraints, located in the reference.
pub fn eval_records(pairs: &[AnnotatedPair], hyps: &[Tokens]) -> Result<Vec<EvalRecord>> {
    if pairs.len() != hyps.len() {
        return Err(Error::Input(format!("{} hypotheses for {} sentences", hyps.len(), pairs.len())));
    }
    pairs
        .iter()
        .zip(hyps)
        .enumerate()
        .map(|(sid, (p, h))| {
            let reference = p
                .tgt
                .clone()
                .ok_or_else(|| Error::Input(format!("sentence {sid} has no reference translation")))?;
            let constraints: Vec<Tokens> = p.constraints.iter().filter_map(|c| c.gold_candidate().cloned()).collect();
            let mut rec = EvalRecord::new(h.clone(), reference, constraints);
            // Repeated constraints take successive occurrences.
            let mut taken: Vec<(usize, usize)> = Vec::new();
            for (k, c) in rec.constraints.iter().enumerate() {
                let at = (0..rec.reference.len())
                    .find(|&s| {
                        rec.reference[s..].starts_with(c) && !taken.iter().any(|&(a, b)| s < b && a < s + c.len())
                    })
                    .or_else(|| find_subsequence(&rec.reference, c));
                if let Some(s) = at {
                    taken.push((s, s + c.len()));
                }
                rec.ref_positions[k] = at;
            }
            Ok(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, ConstraintInstance};

    fn pair() -> AnnotatedPair {
        AnnotatedPair {
            src: tokenize("x L y"),
            tgt: Some(tokenize("a B b")),
            constraints: vec![ConstraintInstance {
                span: 1..2,
                lexicon: tokenize("L"),
                candidates: vec![tokenize("A"), tokenize("B"), tokenize("C")],
                gold: Some(1),
            }],
        }
    }

    #[test]
    fn selectors_follow_their_source() {
        let pairs = vec![pair(), pair()];
        let gold = select_constraints(&pairs, Selector::Gold, None, None, 0).unwrap();
        assert_eq!(gold, vec![vec![Some(1)], vec![Some(1)]]);
        let recs = vec![
            DisambigRecord { sent_id: 0, span: [1, 2], chosen: 2, scores: vec![0.0; 3] },
            DisambigRecord { sent_id: 1, span: [1, 2], chosen: 0, scores: vec![0.0; 3] },
        ];
        let s1 = select_constraints(&pairs, Selector::Stage1, Some(&recs), None, 0).unwrap();
        assert_eq!(s1, vec![vec![Some(2)], vec![Some(0)]]);
        assert!(select_constraints(&pairs, Selector::Stage1, None, None, 0).is_err());
        assert!(select_constraints(&pairs, Selector::Stage1, Some(&recs[..1]), None, 0).is_err());
        assert!(select_constraints(&pairs, Selector::MostFreq, None, None, 0).is_err());
        let stats = GoldStats::from_pairs(&pairs);
        let mf = select_constraints(&pairs, Selector::MostFreq, None, Some(&stats), 0).unwrap();
        assert_eq!(mf, gold);
        let r1 = select_constraints(&pairs, Selector::Random, None, None, 3).unwrap();
        assert_eq!(r1, select_constraints(&pairs, Selector::Random, None, None, 3).unwrap());
    }

    #[test]
    fn eval_records_locate_gold() {
        let recs = eval_records(&[pair()], &[tokenize("a B")]).unwrap();
        assert_eq!(recs[0].constraints, vec![tokenize("B")]);
        assert_eq!(recs[0].ref_positions, vec![Some(1)]);
        let mut no_ref = pair();
        no_ref.tgt = None;
        assert!(eval_records(&[no_ref], &[vec![]]).is_err());
    }

    #[test]
    fn jsonl_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let recs = vec![DisambigRecord { sent_id: 3, span: [0, 1], chosen: 1, scores: vec![0.5, 0.25] }];
        write_jsonl(&p, &recs).unwrap();
        assert_eq!(read_jsonl::<DisambigRecord>(&p).unwrap(), recs);
        let err = read_jsonl::<DisambigRecord>(&dir.path().join("nope.jsonl")).unwrap_err();
        assert!(err.to_string().contains("nope.jsonl"));
    }

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<usize> = (0..50).collect();
        let ys = par_map(3, &xs, |i, x| Ok(i * 100 + x)).unwrap();
        assert_eq!(ys, xs.iter().map(|x| x * 101).collect::<Vec<_>>());
    }
}
