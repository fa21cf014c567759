//! Self-supervised adversarial fitting engine on top of `rigdiff-core`.
//!
//! - [`features`]: desk-scale image embedding providers standing in for the
//!   pretrained recognition/auxiliary networks, plus the part-mask content
//!   features;
//! - [`losses`]: the similarity losses, adversarial objective, and
//!   regularizers with their hand-chained adjoints;
//! - [`nets`]: the attention-gated parameter translators, the discriminator,
//!   parameter initialization, and checkpoints;
//! - [`adam`]: bias-corrected Adam;
//! - [`corpus`]: synthetic corpus generation and its on-disk formats;
//! - [`trainer`]: the adversarial training loop, prediction, and the
//!   disentanglement evaluation;
//! - [`fit`]: direct single-image parameter fitting.

pub mod adam;
pub mod corpus;
pub mod error;
pub mod features;
pub mod fit;
pub mod losses;
pub mod nets;
pub mod trainer;

pub use error::{LearnError, LearnResult};
