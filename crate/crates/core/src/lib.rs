//! Disambiguated lexically constrained translation at desk scale.
//!
//! The pipeline has two stages. Stage 1 is a contrastively trained
//! bi-encoder ([`disambig`]) that picks the contextually correct target
//! constraint for an ambiguous source lexicon. Stage 2 integrates the chosen
//! constraint either through the vectorized backend ([`vecnmt`]: plug
//! probabilities, integrity loss, gated decoding) or through slotted
//! templates ([`template`]). [`eval`] holds the terminology metric suite and
//! [`corpus`] the data model plus a synthetic generator whose gold
//! candidates are recoverable from a context marker.
//!
//! Everything numerical lives in [`nnet`]: a small reverse-mode tape over a
//! fixed op set, a pre-norm transformer, and Adam.

pub mod corpus;
pub mod disambig;
pub mod error;
pub mod eval;
pub mod nnet;
pub mod pipeline;
pub mod template;
pub mod vecnmt;

pub use corpus::{
    AnnotatedPair, ConstraintInstance, ConstraintInventory, SynthConfig, Vocabulary,
};
pub use error::{Error, Result};
pub use nnet::{Matrix, ModelConfig, ParamStore};
