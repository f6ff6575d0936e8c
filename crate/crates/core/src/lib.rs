//! Foundation-model-based latent semantic analysis (fLSA).
//!
//! This crate induces latent tags over segmented documents by running an
//! EM loop through a language model: the E-step assigns each segment a tag
//! by prompting against the current tag descriptions, and the M-step
//! regenerates each description by summarizing the segments assigned to it.
//! Around that core it provides:
//!
//! - [`corpus`]: loading, segmenting, and persisting document collections
//! - [`gateway`]: a single choke point for model calls with an HTTP backend,
//!   a deterministic scripted backend, a response cache, and retry policy
//! - [`plsa`]: a classical PLSA EM baseline with exact numerics
//! - [`flsa`]: the LLM-driven EM engine itself
//! - [`dynamics`]: a bigram model over tag sequences with DOT export
//! - [`hiersample`]: direct, outline-based, and hierarchical solution sampling
//! - [`eval`]: reconstruction log-likelihood and Hits@K metrics
//!
//! Everything that consumes randomness is seeded, and every model call goes
//! through [`gateway::Gateway`], so a run against the scripted backend is
//! bit-reproducible.

/// Latent tags are 1-based ids into the tag space.
pub type TagId = u32;

pub mod corpus;
pub mod dynamics;
pub mod eval;
pub mod flsa;
pub mod gateway;
pub mod hiersample;
pub mod plsa;
pub mod prompts;
pub(crate) mod seed;
