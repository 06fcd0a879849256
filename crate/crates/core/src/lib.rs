//! Multi-reference sequence-to-sequence toolkit: corpora with several
//! references per source, reference-aware metrics, a small encoder-decoder,
//! two-stage training, diverse beam search and reference augmentation.

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod lexicon;
pub mod metrics;
pub mod model;
mod process;
pub mod seed;
pub mod semantic;
pub mod text;
pub mod training;

pub use error::{Error, Result};
