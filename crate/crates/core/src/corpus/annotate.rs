use super::{AnnotatedPair, ConstraintInstance, ConstraintInventory};

/// Per-sentence constraint cap used at training time.
pub const MAX_CONSTRAINTS: usize = 3;

/// Start index of the first contiguous occurrence of `needle` in `hay`.
pub fn find_subsequence<T: PartialEq>(hay: &[T], needle: &[T]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Spots inventory lexicons in `src` by leftmost-longest matching and
/// attaches their candidates. When `tgt` is given, the gold candidate is the
/// first one (in stored order) occurring contiguously in it.
pub fn annotate(
    src: &[String],
    tgt: Option<&[String]>,
    inventory: &ConstraintInventory,
) -> AnnotatedPair {
    let mut constraints = Vec::new();
    let max_len = inventory.max_lexicon_len();
    let mut i = 0;
    while i < src.len() && constraints.len() < MAX_CONSTRAINTS {
        let longest = (1..=max_len.min(src.len() - i))
            .rev()
            .find_map(|len| inventory.get(&src[i..i + len]).map(|c| (len, c)));
        match longest {
            Some((len, cands)) => {
                let gold = tgt.and_then(|t| {
                    cands
                        .iter()
                        .position(|c| find_subsequence(t, c).is_some())
                });
                constraints.push(ConstraintInstance {
                    span: i..i + len,
                    lexicon: src[i..i + len].to_vec(),
                    candidates: cands.to_vec(),
                    gold,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    AnnotatedPair {
        src: src.to_vec(),
        tgt: tgt.map(<[String]>::to_vec),
        constraints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use proptest::prelude::*;

    fn inv(lines: &str) -> ConstraintInventory {
        ConstraintInventory::parse(lines.as_bytes(), "mem").unwrap()
    }

    #[test]
    fn airway_gold_is_respiratory_tract() {
        let inv = inv("airway\tairline\trespiratory tract\tventiduct\n");
        let src = tokenize("the airway is inflamed");
        let tgt = tokenize("the respiratory tract is inflamed");
        let p = annotate(&src, Some(&tgt), &inv);
        assert_eq!(p.constraints.len(), 1);
        assert_eq!(p.constraints[0].span, 1..2);
        assert_eq!(p.constraints[0].gold, Some(1));
        p.validate().unwrap();
    }

    #[test]
    fn no_match_gives_no_constraints() {
        let p = annotate(&tokenize("nothing here"), None, &inv("airway\tairline\n"));
        assert!(p.constraints.is_empty());
    }

    #[test]
    fn overlapping_lexicons_take_leftmost_longest() {
        let inv = inv("a b\tX\nb c\tY\n");
        let p = annotate(&tokenize("z a b c"), None, &inv);
        assert_eq!(p.constraints.len(), 1);
        assert_eq!(p.constraints[0].lexicon, tokenize("a b"));
        assert_eq!(p.constraints[0].gold, None);
    }

    #[test]
    fn longer_lexicon_wins_at_same_start() {
        let inv = inv("a\tX\na b\tY\n");
        let p = annotate(&tokenize("a b"), None, &inv);
        assert_eq!(p.constraints[0].span, 0..2);
    }

    #[test]
    fn gold_tie_break_prefers_lowest_index() {
        let inv = inv("w\tp\tq\n");
        let p = annotate(&tokenize("w"), Some(&tokenize("q p")), &inv);
        assert_eq!(p.constraints[0].gold, Some(0));
    }

    #[test]
    fn truncates_to_three() {
        let inv = inv("a\tx\n");
        let p = annotate(&tokenize("a a a a a"), None, &inv);
        assert_eq!(p.constraints.len(), MAX_CONSTRAINTS);
    }

    /// Brute force: enumerate every (start, len) match, then choose greedily
    /// by smallest start, longest length, skipping overlaps.
    fn oracle(src: &[String], inv: &ConstraintInventory) -> Vec<(usize, usize)> {
        let mut all = Vec::new();
        for s in 0..src.len() {
            for e in s + 1..=src.len() {
                if inv.get(&src[s..e]).is_some() {
                    all.push((s, e - s));
                }
            }
        }
        all.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut out: Vec<(usize, usize)> = Vec::new();
        let mut end = 0;
        for (s, l) in all {
            if s >= end && out.len() < MAX_CONSTRAINTS {
                out.push((s, l));
                end = s + l;
            }
        }
        out
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(str::to_owned)
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            lexicons in prop::collection::vec(prop::collection::vec(word(), 1..4), 1..5),
            src in prop::collection::vec(word(), 0..12),
        ) {
            let mut inventory = ConstraintInventory::new();
            for l in lexicons {
                inventory.insert(l, [vec!["T".to_owned()]]);
            }
            let got: Vec<(usize, usize)> = annotate(&src, None, &inventory)
                .constraints
                .iter()
                .map(|c| (c.span.start, c.span.len()))
                .collect();
            prop_assert_eq!(got, oracle(&src, &inventory));
        }

        #[test]
        fn annotate_is_idempotent(
            src in prop::collection::vec(word(), 0..12),
            tgt in prop::collection::vec(word(), 0..12),
        ) {
            let inventory = inv("a\tb\tc d\na b\td\tc\n");
            let once = annotate(&src, Some(&tgt), &inventory);
            let twice = annotate(&once.src, once.tgt.as_deref(), &inventory);
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.validate().is_ok());
        }
    }
}
