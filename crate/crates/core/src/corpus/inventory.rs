use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{tokenize, Tokens};
use crate::error::{Error, Result};

/// Source lexicon → ordered, deduplicated candidate target constraints.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintInventory {
    entries: Vec<(Tokens, Vec<Tokens>)>,
    index: HashMap<Tokens, usize>,
    max_lexicon_len: usize,
}

impl ConstraintInventory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds candidates for `lexicon`, merging with an existing entry.
    /// Candidates already present are skipped so stored order stays stable.
    pub fn insert(&mut self, lexicon: Tokens, candidates: impl IntoIterator<Item = Tokens>) {
        let slot = match self.index.get(&lexicon) {
            Some(&i) => i,
            None => {
                self.max_lexicon_len = self.max_lexicon_len.max(lexicon.len());
                self.index.insert(lexicon.clone(), self.entries.len());
                self.entries.push((lexicon, Vec::new()));
                self.entries.len() - 1
            }
        };
        let list = &mut self.entries[slot].1;
        for c in candidates {
            if !list.contains(&c) {
                list.push(c);
            }
        }
    }

    pub fn get(&self, lexicon: &[String]) -> Option<&[Tokens]> {
        self.index
            .get(lexicon)
            .map(|&i| self.entries[i].1.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_lexicon_len(&self) -> usize {
        self.max_lexicon_len
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tokens, &[Tokens])> {
        self.entries.iter().map(|(l, c)| (l, c.as_slice()))
    }

    pub fn n_ambiguous(&self) -> usize {
        self.entries.iter().filter(|(_, c)| c.len() >= 2).count()
    }

    /// Parses the TAB-separated format; `origin` labels parse errors.
    pub fn parse<R: BufRead>(reader: R, origin: &str) -> Result<Self> {
        let mut inv = Self::new();
        for (no, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                path: origin.to_owned(),
                line: no + 1,
                msg: msg.to_owned(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 {
                return Err(err("expected a lexicon and at least one candidate"));
            }
            let lexicon = tokenize(fields[0]);
            if lexicon.is_empty() {
                return Err(err("empty lexicon"));
            }
            let mut cands = Vec::with_capacity(fields.len() - 1);
            for f in &fields[1..] {
                let c = tokenize(f);
                if c.is_empty() {
                    return Err(err("empty candidate"));
                }
                cands.push(c);
            }
            inv.insert(lexicon, cands);
        }
        Ok(inv)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (lex, cands) in &self.entries {
            out.push_str(&lex.join(" "));
            for c in cands {
                out.push('\t');
                out.push_str(&c.join(" "));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, |w| w.write_all(self.to_tsv().as_bytes()))
    }
}

pub fn load_inventory(path: &Path) -> Result<ConstraintInventory> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path)?;
    ConstraintInventory::parse(BufReader::new(file), &path.display().to_string())
}
