//! Stage 2a: vectorized constrained translation.
//!
//! Target constraints are appended to the encoder input. At each decoder
//! step the model distribution `P_model` is mixed with a plug distribution
//! `P_plug` that scores constraint tokens by cosine against the decoder
//! state. Training adds a window loss that ties each constraint token's
//! embedding to the decoder state at its reference position. Decoding
//! tracks per-constraint progress and pushes partially emitted constraints
//! to completion.

mod constraints;
mod decode;
mod loss;
mod model;
mod train;

pub use constraints::{ConstraintPair, ConstraintSet};
pub use decode::{beam_search, failure_function, gda_decode, search, DecodeConfig, DecodeMode, Hypothesis, Translation};
pub use loss::{integrity_loss, LossReport, NmtExample, PROB_FLOOR};
pub use model::{p_plug, GateMode, VecNmt};
pub use train::{train_nmt, NmtConfig, NmtLog};
