//! Line-oriented corpora, type frequencies and frequency bins.
//!
//! A corpus is read one sentence per line and split on whitespace; no other
//! tokenization happens here. Frequencies come from the training split, and a
//! type is placed in a bin only if it also occurs in the test material:
//!
//! | bin  | train frequency |
//! |------|-----------------|
//! | High | `[1000, ∞)`     |
//! | Mid  | `[100, 1000)`   |
//! | Low  | `[10, 100)`     |
//!
//! Anything below 10, or absent from train, is `Unbinned`. Unbinned types still
//! count towards overall metrics but never towards per-bin denominators.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentences of whitespace-delimited word tokens, in source order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Vec<String>>,
}

impl Corpus {
    /// Builds a corpus from already-split sentences, dropping empty tokens and
    /// empty sentences.
    pub fn from_sentences<I, S, W>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = W>,
        W: Into<String>,
    {
        let sentences = sentences
            .into_iter()
            .map(|s| {
                s.into_iter()
                    .map(Into::into)
                    .filter(|w: &String| !w.is_empty())
                    .collect::<Vec<_>>()
            })
            .filter(|s| !s.is_empty())
            .collect();
        Corpus { sentences }
    }

    /// Parses text held in memory, one sentence per line.
    pub fn parse(text: &str, lowercase: bool) -> Self {
        Corpus::from_sentences(text.lines().map(|line| split_line(line, lowercase)))
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }
}

fn split_line(line: &str, lowercase: bool) -> Vec<String> {
    line.split_whitespace()
        .map(|w| if lowercase { w.to_lowercase() } else { w.to_owned() })
        .collect()
}

/// Reads a UTF-8 corpus file, one sentence per line. Blank lines are skipped.
pub fn ingest(path: impl AsRef<Path>, lowercase: bool) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(raw).map_err(|_| Error::Encoding {
            path: path.to_path_buf(),
            line: idx + 1,
        })?;
        let words = split_line(line, lowercase);
        if !words.is_empty() {
            sentences.push(words);
        }
    }
    Ok(Corpus { sentences })
}

/// Occurrence counts per word type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_types(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn add(&mut self, word: &str, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(word.to_owned()).or_insert(0) += count;
        self.total += count;
    }

    /// Folds another partial table into this one.
    pub fn merge(&mut self, other: FrequencyTable) {
        for (w, c) in other.counts {
            *self.counts.entry(w).or_insert(0) += c;
        }
        self.total += other.total;
    }

    /// Types by descending count, ties by ascending word.
    pub fn sorted(&self) -> Vec<(&str, u64)> {
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rows
    }

    /// Rank/frequency pairs (1-based rank) for a Zipf plot.
    pub fn rank_frequency(&self) -> Vec<(usize, &str, u64)> {
        self.sorted()
            .into_iter()
            .enumerate()
            .map(|(i, (w, c))| (i + 1, w, c))
            .collect()
    }

    /// Two-column `type<TAB>count` rows, most frequent first.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (w, c) in self.sorted() {
            writeln!(out, "{w}\t{c}")?;
        }
        Ok(())
    }
}

/// Counts every token of `corpus`. Sentences are sharded across the rayon
/// pool and the partial tables merged.
pub fn count_frequencies(corpus: &Corpus) -> Result<FrequencyTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus has no sentences".into()));
    }
    let table = corpus
        .sentences()
        .par_iter()
        .fold(FrequencyTable::default, |mut acc, sentence| {
            for w in sentence {
                acc.add(w, 1);
            }
            acc
        })
        .reduce(FrequencyTable::default, |mut a, b| {
            a.merge(b);
            a
        });
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bin {
    High,
    Mid,
    Low,
    Unbinned,
}

impl Bin {
    pub const STRATIFIED: [Bin; 3] = [Bin::High, Bin::Mid, Bin::Low];

    pub fn from_frequency(freq: u64) -> Bin {
        match freq {
            1000.. => Bin::High,
            100..=999 => Bin::Mid,
            10..=99 => Bin::Low,
            _ => Bin::Unbinned,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bin::High => "high",
            Bin::Mid => "mid",
            Bin::Low => "low",
            Bin::Unbinned => "unbinned",
        }
    }

    /// Position in [`Bin::STRATIFIED`], `None` for `Unbinned`.
    pub fn stratum(self) -> Option<usize> {
        match self {
            Bin::High => Some(0),
            Bin::Mid => Some(1),
            Bin::Low => Some(2),
            Bin::Unbinned => None,
        }
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(Bin::High),
            "mid" => Ok(Bin::Mid),
            "low" => Ok(Bin::Low),
            "unbinned" => Ok(Bin::Unbinned),
            other => Err(Error::Domain(format!("unknown bin `{other}`"))),
        }
    }
}

/// Bin label for every test type plus the per-bin populations of eligible
/// (train ∩ test) types.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinAssignment {
    entries: BTreeMap<String, (u64, Bin)>,
    populations: [usize; 3],
    unbinned: usize,
}

impl BinAssignment {
    pub fn bin(&self, word: &str) -> Option<Bin> {
        self.entries.get(word).map(|&(_, b)| b)
    }

    pub fn train_count(&self, word: &str) -> Option<u64> {
        self.entries.get(word).map(|&(c, _)| c)
    }

    /// Eligible type counts for High, Mid, Low.
    pub fn populations(&self) -> [usize; 3] {
        self.populations
    }

    pub fn population(&self, bin: Bin) -> usize {
        bin.stratum().map_or(self.unbinned, |i| self.populations[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64, Bin)> {
        self.entries.iter().map(|(w, &(c, b))| (w.as_str(), c, b))
    }

    /// Three-column `type<TAB>count<TAB>bin` rows, by descending train count.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (w, c, b) in rows {
            writeln!(out, "{w}\t{c}\t{b}")?;
        }
        Ok(())
    }
}

/// Bins every distinct type in `test_types` by its train frequency.
pub fn assign_bins<'a, I>(train: &FrequencyTable, test_types: I) -> BinAssignment
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = BinAssignment::default();
    for word in test_types {
        if out.entries.contains_key(word) {
            continue;
        }
        let count = train.get(word);
        let bin = Bin::from_frequency(count);
        match bin.stratum() {
            Some(i) => out.populations[i] += 1,
            None => out.unbinned += 1,
        }
        out.entries.insert(word.to_owned(), (count, bin));
    }
    out
}
