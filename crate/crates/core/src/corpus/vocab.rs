use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// Reserved tokens, occupying the lowest ids in this order.
pub mod special {
    pub const PAD: &str = "[PAD]";
    pub const UNK: &str = "[UNK]";
    pub const CLS: &str = "[CLS]";
    pub const SEP: &str = "[SEP]";
    pub const MASK: &str = "[MASK]";
    pub const BOS: &str = "[BOS]";
    pub const EOS: &str = "[EOS]";
    /// Template slot tags, `<C1>` .. `<C3>`.
    pub const SLOTS: [&str; 3] = ["<C1>", "<C2>", "<C3>"];

    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;
    pub const CLS_ID: usize = 2;
    pub const SEP_ID: usize = 3;
    pub const MASK_ID: usize = 4;
    pub const BOS_ID: usize = 5;
    pub const EOS_ID: usize = 6;
    pub const FIRST_SLOT_ID: usize = 7;
    pub const N_RESERVED: usize = 10;

    pub fn all() -> [&'static str; N_RESERVED] {
        [
            PAD, UNK, CLS, SEP, MASK, BOS, EOS, SLOTS[0], SLOTS[1], SLOTS[2],
        ]
    }

    pub fn slot_id(n: usize) -> usize {
        FIRST_SLOT_ID + n
    }

    /// Zero-based slot index of a tag token, if it is one.
    pub fn slot_index(tok: &str) -> Option<usize> {
        SLOTS.iter().position(|s| *s == tok)
    }
}

/// Token ↔ id bijection shared by every model in the pipeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, ids }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Reserved tokens followed by the sorted, deduplicated corpus tokens.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a String>) -> Self {
        let reserved = special::all();
        let rest: BTreeSet<&String> = tokens
            .into_iter()
            .filter(|t| !reserved.contains(&t.as_str()))
            .collect();
        let all: Vec<String> = reserved
            .iter()
            .map(|s| (*s).to_owned())
            .chain(rest.into_iter().cloned())
            .collect();
        Self::from(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t).unwrap_or(special::UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(special::UNK).to_owned())
            .collect()
    }

    pub fn is_reserved(id: usize) -> bool {
        id < special::N_RESERVED
    }
}
