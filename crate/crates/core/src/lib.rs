//! DuFFin: black-box fingerprinting of language models at two levels.
//!
//! The trigger level embeds a model's responses to secret prompts with a
//! contrastively trained extractor. The knowledge level records the model's
//! answers to a secret, domain-stratified multiple-choice set. A suspect is
//! judged a derivative of a protected model when the weighted sum of both
//! distances falls under a threshold.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod client;
pub mod codec;
pub mod error;
pub mod knowledge;
pub mod sim;
pub mod trigger;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use types::*;
