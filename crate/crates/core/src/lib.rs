//! Trainable reference-based caption evaluation.
//!
//! The crate turns precomputed CLIP and RoBERTa embeddings of an image, a
//! candidate caption and its reference captions into a quality score in
//! `[0, 1]`, and regresses that score onto human judgments.
//!
//! * [`embed_io`] reads and writes embedding bundles (`.peb`) and their JSONL
//!   split manifests, and generates seeded synthetic bundles.
//! * [`head`] holds the fusion features, the two-MLP scoring head and its
//!   analytic gradients.
//! * [`optim`] is the Adam/MSE training loop with early stopping on
//!   validation Kendall tau.
//! * [`eval`] implements the benchmark protocols: caption-level rank
//!   correlation, pairwise preference accuracy and foil detection.
//! * [`judgments`] normalizes and filters raw human ratings.
//! * [`cli`] wires everything into the `polos` binary.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod embed_io;
pub mod error;
pub mod eval;
pub mod head;
pub mod judgments;
pub mod optim;
mod util;

pub use embed_io::{read_bundle, validate_bundle, write_bundle, EmbeddingSample};
pub use error::{Error, Result};
pub use head::{
    build_h_inter, fuse, init_params, score, score_gradient, Aggregate, FusionMode, HeadConfig,
    HeadParams, InputDims, ScoreOutput,
};
pub use optim::{adam_step, fit, train_epoch, AdamState, TrainConfig, TrainLog};
