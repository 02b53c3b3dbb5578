//! Deterministic fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordeval::corpus::Corpus;
use wordeval::embedding::EmbeddingTable;
use wordeval::tokenizer::SubwordVocab;

/// `n` standard-normal vectors named `w00000`, `w00001`, …
pub fn gaussian_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = EmbeddingTable::new(dim);
    for i in 0..n {
        let v: Vec<f32> = (0..dim)
            .map(|_| {
                let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                let u2: f64 = rng.random();
                ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
            })
            .collect();
        t.insert(format!("w{i:05}"), &v).expect("fixed dimension");
    }
    t
}

/// A WordPiece vocabulary of single letters and letter pairs, plus a corpus
/// of words spelled from them with a skewed word distribution.
pub fn letter_world(sentences: usize, seed: u64) -> (SubwordVocab, Corpus) {
    let letters: Vec<char> = "abcdefgh".chars().collect();
    let mut units: Vec<String> = letters.iter().map(|c| c.to_string()).collect();
    units.extend(letters.iter().map(|c| format!("##{c}")));
    for a in &letters[..4] {
        for b in &letters[..4] {
            units.push(format!("{a}{b}"));
            units.push(format!("##{a}{b}"));
        }
    }
    let vocab = SubwordVocab::wordpiece(units).expect("unique units");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon: Vec<String> = (0..60)
        .map(|_| {
            let len = rng.random_range(1..=5);
            (0..len).map(|_| letters[rng.random_range(0..letters.len())]).collect()
        })
        .collect();
    let corpus = Corpus::from_sentences((0..sentences).map(|_| {
        let len = rng.random_range(3..10);
        (0..len)
            .map(|_| {
                // squaring skews toward the front of the lexicon
                let x: f64 = rng.random();
                lexicon[((x * x) * lexicon.len() as f64) as usize].clone()
            })
            .collect::<Vec<_>>()
    }));
    (vocab, corpus)
}
