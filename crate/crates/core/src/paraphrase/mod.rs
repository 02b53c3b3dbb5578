//! Rare-word paraphrase probe.
//!
//! Each probe holds three sentences that differ only in one word: the anchor
//! (`h`), a variant that should read as its paraphrase (`v`), and a sibling
//! that should not (`a`). A probe is a hit when the scorer rates the variant
//! sentence strictly closer to the anchor sentence than the sibling one.

mod chisq;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FrequencyTable;
use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::predictor::RemotePredictor;

pub use chisq::{chi_square_independence, ChiSquare};

/// Variants seen fewer times than this in training are rare.
pub const RARE_THRESHOLD: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Rare,
    Common,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Rare => "rare",
            Condition::Common => "common",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rare" => Ok(Condition::Rare),
            "common" => Ok(Condition::Common),
            other => Err(format!("condition must be `rare` or `common`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTriple {
    /// Line of the `condition:` field.
    pub line: usize,
    pub condition: Condition,
    pub anchor_sentence: Vec<String>,
    pub variant_sentence: Vec<String>,
    pub sibling_sentence: Vec<String>,
    /// Token position of the substituted word.
    pub slot: usize,
}

impl ProbeTriple {
    pub fn anchor(&self) -> &str {
        &self.anchor_sentence[self.slot]
    }

    pub fn variant(&self) -> &str {
        &self.variant_sentence[self.slot]
    }

    pub fn sibling(&self) -> &str {
        &self.sibling_sentence[self.slot]
    }
}

fn differing_positions(a: &[String], b: &[String]) -> Vec<usize> {
    a.iter().zip(b).enumerate().filter(|(_, (x, y))| x != y).map(|(i, _)| i).collect()
}

/// Parses blank-line separated records of `condition:`, `h:`, `v:`, `a:`
/// lines. The three sentences must have equal length and differ in exactly
/// one shared position.
pub fn parse_triples(text: &str, path: &Path, lowercase: bool) -> Result<Vec<ProbeTriple>> {
    const KEYS: [&str; 4] = ["condition", "h", "v", "a"];
    let mut out = Vec::new();
    let mut record: Vec<(usize, &str)> = Vec::new();
    let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).chain([(0, "")]);
    for (lineno, raw) in lines {
        if !raw.trim().is_empty() {
            record.push((lineno, raw));
            continue;
        }
        if record.is_empty() {
            continue;
        }
        let first = record[0].0;
        if record.len() != 4 {
            return Err(Error::format(
                path,
                first,
                format!("record has {} lines, expected condition, h, v, a", record.len()),
            ));
        }
        let mut fields: Vec<Vec<String>> = Vec::with_capacity(4);
        let mut condition = Condition::Common;
        for (&(lineno, raw), key) in record.iter().zip(KEYS) {
            let Some((k, value)) = raw.split_once(':') else {
                return Err(Error::format(path, lineno, format!("expected `{key}:` field")));
            };
            if k.trim() != key {
                return Err(Error::format(path, lineno, format!("expected `{key}:`, found `{}:`", k.trim())));
            }
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::format(path, lineno, format!("empty `{key}` field")));
            }
            if key == "condition" {
                condition = value.parse().map_err(|m| Error::format(path, lineno, m))?;
            } else {
                let value = if lowercase { value.to_lowercase() } else { value.to_owned() };
                fields.push(value.split_whitespace().map(str::to_owned).collect());
            }
        }
        let [h, v, a]: [Vec<String>; 3] = fields.try_into().expect("three sentence fields");
        if h.len() != v.len() || h.len() != a.len() {
            return Err(Error::format(path, first, "the three sentences must have the same number of words"));
        }
        let hv = differing_positions(&h, &v);
        let ha = differing_positions(&h, &a);
        let slot = match (hv.as_slice(), ha.as_slice()) {
            ([], _) | (_, []) => {
                return Err(Error::format(path, first, "missing slot: a sentence repeats the anchor"))
            }
            ([i], [j]) if i == j => *i,
            ([_], [_]) => return Err(Error::format(path, first, "variant and sibling substitute different words")),
            _ => return Err(Error::format(path, first, "duplicate slot: sentences differ in more than one word")),
        };
        if v[slot] == a[slot] {
            return Err(Error::format(path, first, "variant and sibling are the same word"));
        }
        out.push(ProbeTriple {
            line: first,
            condition,
            anchor_sentence: h,
            variant_sentence: v,
            sibling_sentence: a,
            slot,
        });
        record.clear();
    }
    Ok(out)
}

pub fn load_triples(path: impl AsRef<Path>, lowercase: bool) -> Result<Vec<ProbeTriple>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()].iter().filter(|&&b| b == b'\n').count();
        Error::Encoding {
            path: path.to_path_buf(),
            line: line + 1,
        }
    })?;
    parse_triples(&text, path, lowercase)
}

/// Checks that each probe's condition agrees with its variant's training
/// frequency.
pub fn check_conditions(triples: &[ProbeTriple], train: &FrequencyTable) -> Result<()> {
    for t in triples {
        let freq = train.get(t.variant());
        let actual = if freq < RARE_THRESHOLD { Condition::Rare } else { Condition::Common };
        if actual != t.condition {
            return Err(Error::Consistency(format!(
                "probe at line {}: `{}` occurs {freq} times in training, so it is {actual}, not {}",
                t.line,
                t.variant(),
                t.condition
            )));
        }
    }
    Ok(())
}

/// Per-token vectors for a sentence; `None` marks a token without one.
pub trait TokenVectors: Sync {
    fn vectors(&self, tokens: &[String]) -> Result<Vec<Option<Vec<f32>>>>;
}

impl TokenVectors for EmbeddingTable {
    fn vectors(&self, tokens: &[String]) -> Result<Vec<Option<Vec<f32>>>> {
        Ok(tokens.iter().map(|t| self.get(t).map(<[f32]>::to_vec)).collect())
    }
}

impl TokenVectors for RemotePredictor {
    fn vectors(&self, tokens: &[String]) -> Result<Vec<Option<Vec<f32>>>> {
        let out = self.embed(tokens)?;
        if out.len() != tokens.len() {
            return Err(Error::Protocol {
                message: format!("{} vectors for {} tokens", out.len(), tokens.len()),
                line: String::new(),
            });
        }
        Ok(out)
    }
}

/// Greedy-matching F1 over token cosines: precision averages each token of
/// `a`'s best match in `b`, recall the reverse. Tokens without vectors are
/// ignored; `None` if either side has none left.
pub fn sentence_similarity(a: &[Option<Vec<f32>>], b: &[Option<Vec<f32>>]) -> Option<f64> {
    let a: Vec<&[f32]> = a.iter().flatten().map(Vec::as_slice).collect();
    let b: Vec<&[f32]> = b.iter().flatten().map(Vec::as_slice).collect();
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let sims: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| cosine(x, y)).collect()).collect();
    let precision = sims.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>()
        / a.len() as f64;
    let recall = (0..b.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / b.len() as f64;
    if precision + recall == 0.0 {
        Some(0.0)
    } else {
        Some(2.0 * precision * recall / (precision + recall))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub line: usize,
    pub condition: Condition,
    pub variant: String,
    pub sim_variant: f64,
    pub sim_sibling: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedProbe {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub hits: u64,
    pub misses: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub results: Vec<ProbeResult>,
    pub skipped: Vec<SkippedProbe>,
    pub rare: Contingency,
    pub common: Contingency,
}

impl ProbeSummary {
    /// Rows rare, common; columns hits, misses.
    pub fn table(&self) -> [[u64; 2]; 2] {
        [[self.rare.hits, self.rare.misses], [self.common.hits, self.common.misses]]
    }
}

fn score(t: &ProbeTriple, scorer: &dyn TokenVectors) -> Result<std::result::Result<ProbeResult, SkippedProbe>> {
    let h = scorer.vectors(&t.anchor_sentence)?;
    let v = scorer.vectors(&t.variant_sentence)?;
    let a = scorer.vectors(&t.sibling_sentence)?;
    let (Some(sim_variant), Some(sim_sibling)) = (sentence_similarity(&h, &v), sentence_similarity(&h, &a)) else {
        return Ok(Err(SkippedProbe {
            line: t.line,
            reason: "every token of a sentence lacks a vector".into(),
        }));
    };
    Ok(Ok(ProbeResult {
        line: t.line,
        condition: t.condition,
        variant: t.variant().to_owned(),
        sim_variant,
        sim_sibling,
        hit: sim_variant > sim_sibling,
    }))
}

/// Scores every probe and tallies hits per condition. Results keep input
/// order.
pub fn run_probes(triples: &[ProbeTriple], scorer: &dyn TokenVectors) -> Result<ProbeSummary> {
    let scored: Vec<_> = triples.par_iter().map(|t| score(t, scorer)).collect::<Result<_>>()?;
    let mut summary = ProbeSummary {
        results: Vec::new(),
        skipped: Vec::new(),
        rare: Contingency::default(),
        common: Contingency::default(),
    };
    for s in scored {
        match s {
            Ok(r) => {
                let c = match r.condition {
                    Condition::Rare => &mut summary.rare,
                    Condition::Common => &mut summary.common,
                };
                c.total += 1;
                if r.hit {
                    c.hits += 1;
                } else {
                    c.misses += 1;
                }
                summary.results.push(r);
            }
            Err(skip) => summary.skipped.push(skip),
        }
    }
    if summary.results.is_empty() {
        return Err(Error::EmptyInput("no probe could be scored".into()));
    }
    Ok(summary)
}
