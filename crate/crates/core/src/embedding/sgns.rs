//! Skip-gram with negative sampling, single-threaded and seeded.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{count_frequencies, Corpus};
use crate::error::{Error, Result};

use super::EmbeddingTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for SgnsParams {
    fn default() -> Self {
        SgnsParams {
            dim: 50,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 10,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

fn sigmoid(x: f32) -> f32 {
    if x > 10.0 {
        1.0
    } else if x < -10.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Trains input vectors for every type with at least `min_count` tokens.
/// Identical inputs and seed give identical vectors.
pub fn train_sgns(corpus: &Corpus, params: &SgnsParams) -> Result<EmbeddingTable> {
    if params.dim < 2 {
        return Err(Error::Config(format!("embedding dim {} < 2", params.dim)));
    }
    if params.window == 0 || params.epochs == 0 {
        return Err(Error::Config("window and epochs must be positive".into()));
    }
    if params.learning_rate.is_nan() || params.learning_rate <= 0.0 {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let freqs = count_frequencies(corpus)?;
    let mut vocab: Vec<(&str, u64)> = freqs
        .sorted()
        .into_iter()
        .filter(|&(_, c)| c >= params.min_count)
        .collect();
    vocab.shrink_to_fit();
    let ids: HashMap<&str, u32> = vocab.iter().enumerate().map(|(i, &(w, _))| (w, i as u32)).collect();
    let sentences: Vec<Vec<u32>> = corpus
        .sentences()
        .iter()
        .map(|s| s.iter().filter_map(|w| ids.get(w.as_str()).copied()).collect::<Vec<_>>())
        .filter(|s| s.len() > 1)
        .collect();
    let train_tokens: usize = sentences.iter().map(Vec::len).sum();
    if vocab.is_empty() || train_tokens <= params.window {
        return Err(Error::Degenerate(format!(
            "{train_tokens} usable tokens (min_count {}) for window {}",
            params.min_count, params.window
        )));
    }

    let dim = params.dim;
    let n = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut input: Vec<f32> = (0..n * dim)
        .map(|_| (rng.random::<f32>() - 0.5) / dim as f32)
        .collect();
    let mut output = vec![0.0f32; n * dim];
    let noise = WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75)))
        .map_err(|e| Error::Numeric(format!("noise distribution: {e}")))?;

    let total = (params.epochs * train_tokens) as f32;
    let mut seen = 0usize;
    let mut grad = vec![0.0f32; dim];
    for _ in 0..params.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = params.learning_rate * (1.0 - seen as f32 / (total + 1.0)).max(1e-4);
                seen += 1;
                let reach = rng.random_range(1..=params.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = context as usize;
                    let c_row = context * dim;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for d in 0..=params.negatives {
                        let (target, label) = if d == 0 {
                            (center as usize, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == center as usize {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let t_row = target * dim;
                        let dot: f32 = (0..dim).map(|i| input[c_row + i] * output[t_row + i]).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for i in 0..dim {
                            grad[i] += g * output[t_row + i];
                            output[t_row + i] += g * input[c_row + i];
                        }
                    }
                    for i in 0..dim {
                        input[c_row + i] += grad[i];
                    }
                }
            }
        }
    }

    let mut table = EmbeddingTable::new(dim);
    for (i, &(w, _)) in vocab.iter().enumerate() {
        table.insert(w, &input[i * dim..(i + 1) * dim])?;
    }
    Ok(table)
}
