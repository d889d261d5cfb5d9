//! Shared helpers for integration tests: a central finite-difference
//! gradient oracle and tiny fixtures.
#![allow(dead_code)]

use lexi_core::corpus::{generate_synthetic, AnnotatedPair, SynthConfig};
use lexi_core::nnet::{Gradients, ModelConfig, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-4;
/// Gradient magnitudes below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `grads` with central differences of `loss`, probing up to
/// `per_tensor` coordinates of every parameter tensor. `params` gives
/// mutable access to the store that `loss` reads.
pub fn gradcheck<M>(
    model: &mut M,
    params: fn(&mut M) -> &mut ParamStore,
    grads: &Gradients,
    loss: impl Fn(&M) -> f64,
    per_tensor: usize,
    seed: u64,
) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = params(model).ids().collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for id in ids {
        let n = params(model).get(id).len();
        let picks: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..n)).collect()
        };
        for k in picks {
            let orig = params(model).get(id).data()[k];
            params(model).get_mut(id).data_mut()[k] = orig + FD_EPS;
            let up = loss(model);
            params(model).get_mut(id).data_mut()[k] = orig - FD_EPS;
            let down = loss(model);
            params(model).get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(relative_error(analytic, numeric));
            checked += 1;
        }
    }
    GradCheck {
        max_rel_error: worst,
        checked,
    }
}

/// `d_model = 8` transformer used by the gradient checks.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ffn_dim: 16,
        ..ModelConfig::default()
    }
}

/// A small seeded synthetic corpus.
pub fn small_corpus(n_sentences: usize, seed: u64) -> Vec<AnnotatedPair> {
    let cfg = SynthConfig {
        n_sentences,
        seed,
        ..SynthConfig::small()
    };
    generate_synthetic(&cfg).expect("synthetic corpus").1
}

use lexi_core::disambig::{build_context_input, sample_negatives, DisambigModel, Stage1Example};
use lexi_core::pipeline::corpus_vocab;
use lexi_core::vecnmt::{ConstraintSet, NmtExample, VecNmt};

/// A `d_model = 8` disambiguator and a few ambiguous instances with five
/// negatives each.
pub fn stage1_fixture(seed: u64) -> (DisambigModel, Vec<Stage1Example>) {
    let pairs = small_corpus(60, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DisambigModel::new(tiny_model(), corpus_vocab(&pairs), &mut rng).unwrap();
    let instances: Vec<_> = pairs
        .iter()
        .flat_map(|p| p.constraints.iter().map(move |c| (p, c)))
        .filter(|(_, c)| c.is_ambiguous() && c.gold.is_some())
        .take(4)
        .collect();
    let golds: Vec<_> = instances.iter().map(|(_, c)| c.gold_candidate().unwrap().clone()).collect();
    let examples = instances
        .iter()
        .map(|(p, c)| Stage1Example {
            input: build_context_input(&c.lexicon, &p.src, c.span.clone()).unwrap(),
            positive: c.gold_candidate().unwrap().clone(),
            negatives: sample_negatives(c, &golds, 5, &mut rng).unwrap().negatives,
        })
        .collect();
    (model, examples)
}

/// A `d_model = 8` translation model and a few examples whose gold
/// constraints are multi-token where possible.
pub fn nmt_fixture(seed: u64) -> (VecNmt, Vec<NmtExample>) {
    let pairs = small_corpus(60, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = VecNmt::new(tiny_model(), corpus_vocab(&pairs), &mut rng).unwrap();
    let mut chosen: Vec<&AnnotatedPair> = pairs
        .iter()
        .filter(|p| p.constraints.iter().any(|c| c.gold_candidate().is_some_and(|g| g.len() >= 2)))
        .take(2)
        .collect();
    chosen.extend(pairs.iter().filter(|p| !p.constraints.is_empty()).take(1));
    let examples = chosen
        .iter()
        .map(|p| model.prepare(p, &ConstraintSet::from_gold(p).unwrap()).unwrap())
        .collect();
    (model, examples)
}
