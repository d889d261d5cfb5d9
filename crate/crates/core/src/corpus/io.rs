use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{detokenize, tokenize, AnnotatedPair, ConstraintInstance};
use crate::error::{Error, Result};

/// One line of a corpus JSONL file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub src: String,
    pub tgt: Option<String>,
    #[serde(default)]
    pub constraints: Vec<InstanceRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub span: [usize; 2],
    pub candidates: Vec<String>,
    pub gold: Option<usize>,
}

impl From<&AnnotatedPair> for CorpusRecord {
    fn from(p: &AnnotatedPair) -> Self {
        Self {
            src: detokenize(&p.src),
            tgt: p.tgt.as_deref().map(detokenize),
            constraints: p
                .constraints
                .iter()
                .map(|c| InstanceRecord {
                    span: [c.span.start, c.span.end],
                    candidates: c.candidates.iter().map(|t| detokenize(t)).collect(),
                    gold: c.gold,
                })
                .collect(),
        }
    }
}

impl TryFrom<CorpusRecord> for AnnotatedPair {
    type Error = Error;

    fn try_from(r: CorpusRecord) -> Result<Self> {
        let src = tokenize(&r.src);
        let constraints = r
            .constraints
            .into_iter()
            .map(|c| {
                let [s, e] = c.span;
                if s >= e || e > src.len() {
                    return Err(Error::Input(format!("span [{s},{e}] out of range")));
                }
                Ok(ConstraintInstance {
                    span: s..e,
                    lexicon: src[s..e].to_vec(),
                    candidates: c.candidates.iter().map(|t| tokenize(t)).collect(),
                    gold: c.gold,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pair = AnnotatedPair {
            src,
            tgt: r.tgt.as_deref().map(tokenize),
            constraints,
        };
        pair.validate()?;
        Ok(pair)
    }
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a partial artifact behind.
pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn read_corpus(path: &Path) -> Result<Vec<AnnotatedPair>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wrap = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: no + 1,
            msg,
        };
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| wrap(e.to_string()))?;
        out.push(AnnotatedPair::try_from(rec).map_err(|e| wrap(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, pairs: &[AnnotatedPair]) -> Result<()> {
    write_atomic(path, |w| {
        for p in pairs {
            serde_json::to_writer(&mut *w, &CorpusRecord::from(p))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}
