//! Minimal differentiable backbone: matrices, a reverse-mode tape,
//! pre-norm transformer stacks, Adam, and checkpoints.

mod adam;
pub mod checkpoint;
mod config;
mod dropout;
mod incremental;
mod params;
mod seq2seq;
mod tape;
mod tensor;
mod transformer;

pub use adam::{Adam, AdamConfig};
pub use config::ModelConfig;
pub use incremental::{CrossCache, SelfCache};
pub use dropout::{keyed_uniform, Dropout};
pub use params::{glorot, normal_matrix, ParamId, ParamStore};
pub use seq2seq::{Seq2Seq, StepOutput, EMBED};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{dot, norm, softmax, Matrix};
pub use transformer::{causal_mask, sinusoidal_table, Decoder, Embedder, Encoder, Stack};

use crate::error::{Error, Result};

/// Cosine similarity; zero vectors are an error.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot(a, b) / (na * nb))
}
