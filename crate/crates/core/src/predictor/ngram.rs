//! Interpolated absolute-discounting n-gram model over unit ids.
//!
//! For a history `h` with count `c(h) > 0`:
//!
//! ```text
//! P(u | h) = (max(c(h u) - δ, 0) + δ · N1+(h ·) · P(u | h')) / c(h)
//! ```
//!
//! where `h'` drops the oldest unit of `h`, and `N1+(h ·)` is the number of
//! distinct units seen after `h`. Unseen histories defer to `h'`. The empty
//! history interpolates with the uniform distribution, so every unit has
//! non-zero probability everywhere.

use std::collections::HashMap;
use std::sync::atomic::AtomicBool;

use crate::error::{Error, Result};
use crate::tokenizer::UnitId;

use super::{clamp_k, Predictor, UnitDistribution};

pub const DEFAULT_DISCOUNT: f64 = 0.75;

#[derive(Debug, Default, Clone)]
struct HistoryStats {
    total: u64,
    followers: HashMap<UnitId, u64>,
}

#[derive(Debug)]
pub struct NGramModel {
    order: usize,
    discount: f64,
    vocab_size: usize,
    /// `levels[n]` holds histories of length `n`.
    levels: Vec<HashMap<Vec<UnitId>, HistoryStats>>,
    warned: AtomicBool,
}

/// Counts every n-gram up to `order` in `sequences`. Histories never cross
/// sequence boundaries.
pub fn train_ngram(
    sequences: &[Vec<UnitId>],
    vocab_size: usize,
    order: usize,
    discount: f64,
) -> Result<NGramModel> {
    if order == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::Config(format!("discount {discount} outside (0, 1)")));
    }
    if vocab_size == 0 {
        return Err(Error::Config("empty unit vocabulary".into()));
    }
    if sequences.iter().all(Vec::is_empty) {
        return Err(Error::EmptyInput("no unit sequences to train on".into()));
    }
    let mut levels: Vec<HashMap<Vec<UnitId>, HistoryStats>> = vec![HashMap::new(); order];
    for seq in sequences {
        for (i, &unit) in seq.iter().enumerate() {
            if unit.index() >= vocab_size {
                return Err(Error::Domain(format!(
                    "unit {unit} outside vocabulary of {vocab_size}"
                )));
            }
            for (n, level) in levels.iter_mut().enumerate().take(i.min(order - 1) + 1) {
                let stats = level.entry(seq[i - n..i].to_vec()).or_default();
                stats.total += 1;
                *stats.followers.entry(unit).or_insert(0) += 1;
            }
        }
    }
    Ok(NGramModel {
        order,
        discount,
        vocab_size,
        levels,
        warned: AtomicBool::new(false),
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    fn history<'a>(&self, context: &'a [UnitId]) -> &'a [UnitId] {
        let n = context.len().min(self.order - 1);
        &context[context.len() - n..]
    }

    /// Full next-unit distribution (probabilities, index = unit id).
    pub fn distribution(&self, context: &[UnitId]) -> Vec<f64> {
        let history = self.history(context);
        let mut probs = vec![1.0 / self.vocab_size as f64; self.vocab_size];
        let mut counts = vec![0.0; self.vocab_size];
        for n in 0..=history.len() {
            let h = &history[history.len() - n..];
            let Some(stats) = self.levels[n].get(h) else {
                continue;
            };
            counts.iter_mut().for_each(|c| *c = 0.0);
            for (&u, &c) in &stats.followers {
                counts[u.index()] = c as f64;
            }
            let total = stats.total as f64;
            let mass = self.discount * stats.followers.len() as f64;
            // same operation order as `prob`, so both agree bit for bit
            for (p, &c) in probs.iter_mut().zip(&counts) {
                *p = ((c - self.discount).max(0.0) + mass * *p) / total;
            }
        }
        probs
    }

    pub fn prob(&self, context: &[UnitId], unit: UnitId) -> f64 {
        let history = self.history(context);
        let mut p = 1.0 / self.vocab_size as f64;
        for n in 0..=history.len() {
            let h = &history[history.len() - n..];
            let Some(stats) = self.levels[n].get(h) else {
                continue;
            };
            let total = stats.total as f64;
            let c = stats.followers.get(&unit).copied().unwrap_or(0) as f64;
            let mass = self.discount * stats.followers.len() as f64;
            p = ((c - self.discount).max(0.0) + mass * p) / total;
        }
        p
    }
}

impl Predictor for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution> {
        let k = clamp_k(k, self.vocab_size, &self.warned)?;
        let logprobs: Vec<f64> = self.distribution(context).into_iter().map(f64::ln).collect();
        Ok(UnitDistribution::from_logprobs(&logprobs, k))
    }

    fn unit_logprob(&self, context: &[UnitId], unit: UnitId) -> Result<f64> {
        if unit.index() >= self.vocab_size {
            return Err(Error::Domain(format!("unit {unit} outside vocabulary")));
        }
        Ok(self.prob(context, unit).ln())
    }
}
