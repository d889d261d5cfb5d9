//! Stage 1: the constraint disambiguation bi-encoder.
//!
//! A context encoder reads `[CLS] lexicon [SEP] masked-sentence` and a
//! separate constraint encoder reads `[CLS] candidate`. Each `[CLS]` state
//! goes through its own adaptation layer, `tanh(h·Wa)·Wb`, into a shared
//! space where the candidate with the highest cosine to the context wins.

mod baseline;
mod loss;
mod negatives;
mod network;
mod train;

pub use baseline::{baseline_select, GoldStats, Policy};
pub use loss::{contrastive_loss, ContrastiveItem};
pub use negatives::{sample_negatives, NegativeSample};
pub use network::{build_context_input, ContextInput, Disambiguation, DisambigModel, EmbeddingVector, Side};
pub use train::{train_disambiguator, Stage1Config, Stage1Example, TrainLog};
