//! Word-level evaluation of subword language models.
//!
//! A [`predictor::Predictor`] proposes next units; [`decode`] turns those
//! into whole-word hits and log-probabilities; [`eval`] runs that over a test
//! corpus and [`metrics`] condenses the resulting records.

pub mod corpus;
pub mod decode;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod paraphrase;
pub mod predictor;
pub mod report;
pub mod tokenizer;

pub use corpus::{Bin, BinAssignment, Corpus, FrequencyTable};
pub use decode::{DecodeConfig, DecodeOutcome, WordEvent};
pub use embedding::{EmbeddingTable, NeighborIndex};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalOptions, EvalRun};
pub use metrics::{EvalReport, PredictionRecord};
pub use predictor::{Predictor, UnitDistribution};
pub use tokenizer::{Scheme, Segmentation, SubwordVocab, UnitId};
