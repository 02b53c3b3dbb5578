//! Flat run configuration. Every key can come from the TOML file given with
//! `--config` or from the command line; the command line wins.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use wordeval::error::{Error, Result};

macro_rules! settings {
    ($( $(#[$meta:meta])* $name:ident : $ty:ty ),* $(,)?) => {
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Settings {
            $( $(#[$meta])* pub $name: Option<$ty>, )*
        }

        impl Settings {
            /// Keys set on `self` win over those in `base`.
            pub fn over(self, base: Settings) -> Settings {
                Settings { $( $name: self.$name.or(base.$name), )* }
            }
        }
    };
}

settings! {
    /// Training corpus, one sentence per line.
    #[arg(long, help_heading = "Corpora")]
    train: PathBuf,
    /// Test corpus, one sentence per line.
    #[arg(long, help_heading = "Corpora")]
    test: PathBuf,
    /// Lowercase corpora and probe sentences on load.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Corpora")]
    lowercase: bool,

    /// Output directory for reports.
    #[arg(long, help_heading = "Output")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, help_heading = "Output")]
    threads: usize,
    /// Label for the model column of the report.
    #[arg(long, help_heading = "Output")]
    model_name: String,

    /// Vocabulary scheme: bpe or wordpiece.
    #[arg(long, help_heading = "Vocabulary")]
    scheme: String,
    /// Unit list file.
    #[arg(long, help_heading = "Vocabulary")]
    units: PathBuf,
    /// BPE merges file.
    #[arg(long, help_heading = "Vocabulary")]
    merges: PathBuf,
    /// Unit that stands in for unspellable material.
    #[arg(long, help_heading = "Vocabulary")]
    unk_unit: String,
    /// Unit that marks the end of the text.
    #[arg(long, help_heading = "Vocabulary")]
    eot_unit: String,

    /// Predictor kind: ngram or remote.
    #[arg(long, help_heading = "Predictor")]
    predictor: String,
    /// n-gram order.
    #[arg(long, help_heading = "Predictor")]
    order: usize,
    /// Absolute discount of the n-gram model.
    #[arg(long, help_heading = "Predictor")]
    discount: f64,
    /// Adapter address (host:port).
    #[arg(long, help_heading = "Predictor")]
    remote: String,
    /// Shell command that starts an adapter on stdio.
    #[arg(long, help_heading = "Predictor")]
    spawn: String,
    /// Seconds to wait for each adapter reply.
    #[arg(long, help_heading = "Predictor")]
    timeout_secs: f64,

    /// Rank cutoff of the top-k search.
    #[arg(long, help_heading = "Decoding")]
    k: usize,
    /// Longest unit path tried for one word.
    #[arg(long, help_heading = "Decoding")]
    max_units: usize,
    /// Greedy search: full or early.
    #[arg(long, help_heading = "Decoding")]
    greedy_mode: String,
    /// Top-k search: unit-path or whole-word.
    #[arg(long, help_heading = "Decoding")]
    topk_mode: String,
    /// Carry history across sentences.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Decoding")]
    rolling_context: bool,
    /// Trailing history units kept per event.
    #[arg(long, help_heading = "Decoding")]
    max_history: usize,

    /// Word vectors in text format.
    #[arg(long, help_heading = "Embeddings")]
    embeddings: PathBuf,
    /// Neighbour search: exact or forest.
    #[arg(long, help_heading = "Embeddings")]
    ann: String,
    /// Trees in the forest.
    #[arg(long, help_heading = "Embeddings")]
    trees: usize,
    /// Largest forest leaf.
    #[arg(long, help_heading = "Embeddings")]
    leaf_size: usize,
    /// Forest candidates per requested neighbour.
    #[arg(long, help_heading = "Embeddings")]
    search_factor: usize,
    /// Soft-match depths, comma separated.
    #[arg(long, value_delimiter = ',', help_heading = "Embeddings")]
    depths: Vec<usize>,
    /// Exact-hit channel for soft-match: greedy or topk.
    #[arg(long, help_heading = "Embeddings")]
    soft_channel: String,
    /// Record log to re-score.
    #[arg(long, help_heading = "Embeddings")]
    records: PathBuf,

    /// Embedding dimension.
    #[arg(long, help_heading = "Embedding training")]
    dim: usize,
    /// Context window.
    #[arg(long, help_heading = "Embedding training")]
    window: usize,
    /// Negative samples per pair.
    #[arg(long, help_heading = "Embedding training")]
    negatives: usize,
    /// Passes over the corpus.
    #[arg(long, help_heading = "Embedding training")]
    epochs: usize,
    /// Minimum word count.
    #[arg(long, help_heading = "Embedding training")]
    min_count: u64,
    /// Initial learning rate.
    #[arg(long, help_heading = "Embedding training")]
    learning_rate: f32,
    /// Random seed.
    #[arg(long, help_heading = "Embedding training")]
    seed: u64,

    /// Probe file.
    #[arg(long, help_heading = "Paraphrase")]
    triples: PathBuf,
    /// Token vectors for probes: static or remote.
    #[arg(long, help_heading = "Paraphrase")]
    scorer: String,
    /// Apply Yates' continuity correction.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Paraphrase")]
    yates: bool,
    /// Verify rare/common labels against training counts.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Paraphrase")]
    check_frequency: bool,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn required<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "`{key}` is not set (add it to the config file or pass --{})",
            key.replace('_', "-")
        ))
    })
}

/// A required path that must already exist.
pub fn existing<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = required(value, key)?;
    if !p.exists() {
        return Err(Error::Config(format!("`{key}`: {} does not exist", p.display())));
    }
    Ok(p)
}

/// An optional path that must exist when given.
pub fn optional_existing<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<Option<&'a Path>> {
    match value {
        Some(_) => existing(value, key).map(Some),
        None => Ok(None),
    }
}
