//! Recurrent networks on the Tomita grammars.
//!
//! Train small recurrent classifiers on the seven Tomita languages,
//! extract DFAs from their hidden states, measure how far apart each
//! grammar's classes are in edit distance, and check the classifiers'
//! robustness against the grammar's own DFA.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pick `f64`, which is what the experiment pipeline uses.

pub mod automata;
pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod metrics;
pub mod rnn;
pub mod scalar;
pub mod verification;

pub use automata::{Dfa, GrammarId, Label, LabeledDataset};
pub use classifier::Recognizer;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RnnModelF64 = rnn::RnnModel<f64>;
pub type RnnModelF32 = rnn::RnnModel<f32>;
pub type HiddenTraceF64 = rnn::HiddenTrace<f64>;
pub type ClusteringF64 = extraction::Clustering<f64>;
