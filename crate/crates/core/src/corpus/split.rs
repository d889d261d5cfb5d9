use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic shuffled three-way split. Train and valid sizes are
/// rounded; test takes the remainder.
pub fn split<T: Clone>(
    corpus: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if corpus.is_empty() {
        return Err(Error::Input("cannot split an empty corpus".into()));
    }
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must sum to 1")));
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * a).round() as usize;
    let n_valid = (((n as f64) * b).round() as usize).min(n - n_train);
    let take = |idx: &[usize]| idx.iter().map(|&i| corpus[i].clone()).collect::<Vec<T>>();
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_valid]),
        take(&order[n_train + n_valid..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sizes() {
        let v: Vec<u32> = (0..100).collect();
        let (a, b, c) = split(&v, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
    }

    #[test]
    fn deterministic_and_multiset_preserving() {
        let v: Vec<u32> = (0..57).map(|i| i % 13).collect();
        let first = split(&v, (0.6, 0.2, 0.2), 11).unwrap();
        assert_eq!(first, split(&v, (0.6, 0.2, 0.2), 11).unwrap());
        let mut union: Vec<u32> = first.0.iter().chain(&first.1).chain(&first.2).copied().collect();
        let mut orig = v.clone();
        union.sort_unstable();
        orig.sort_unstable();
        assert_eq!(union, orig);
    }

    #[test]
    fn rejects_empty_and_bad_ratios() {
        assert!(split::<u8>(&[], (0.8, 0.1, 0.1), 0).is_err());
        assert!(split(&[1], (0.8, 0.1, 0.2), 0).is_err());
    }
}
