//! Prompt-component ablation for in-context learning.
//!
//! * [`prompt`]: typed prompt components and span-tracked assembly
//! * [`corruption`]: seeded semantic and repeated-text corruptions
//! * [`metrics`]: response stripping, exact match, Rouge-L, jackknife
//! * [`backend`]: completion backends (HTTP and stub)
//! * [`attribution`]: norm-based attention attribution from dump files
//! * [`datasets`]: task files and balanced sampling
//! * [`experiment`]: grid runs, result files and report tables

pub mod attribution;
pub mod backend;
pub mod corruption;
pub mod datasets;
mod error;
pub mod experiment;
pub mod metrics;
pub mod prompt;
pub mod rng;
pub mod tokenizer;

pub use error::{Error, Result};
