//! Generated WordPiece toy world shared by the CLI test targets.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LETTERS: &[u8] = b"abcdefgh";

/// Word-initial letters and pieces, then their `##` continuations. 35 units.
pub fn units() -> Vec<String> {
    let mut u: Vec<String> = LETTERS.iter().map(|&c| (c as char).to_string()).collect();
    u.extend(["ab", "ba", "ca", "de", "ed", "he", "ha", "ga", "fa", "bad"].map(String::from));
    u.extend(LETTERS.iter().map(|&c| format!("##{}", c as char)));
    u.extend(["##ab", "##ba", "##ed", "##de", "##ee", "##ga", "##ha", "##ch", "##bad"].map(String::from));
    u
}

fn random_word(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| *LETTERS.choose(rng).unwrap() as char).collect()
}

pub struct World {
    pub lexicon: Vec<String>,
    pub train: Vec<Vec<String>>,
    pub test: Vec<Vec<String>>,
}

/// 150 training and 50 test sentences over a 45-word lexicon. The first word
/// takes 40% of the mass, the rest follow a Zipf tail; about 5% of test tokens
/// never occur in training.
pub fn world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lexicon: Vec<String> = Vec::new();
    while lexicon.len() < 45 {
        let w = random_word(&mut rng, 1, 5);
        if !lexicon.contains(&w) {
            lexicon.push(w);
        }
    }
    let harmonic: f64 = (1..lexicon.len()).map(|r| 1.0 / r as f64).sum();
    let weights: Vec<f64> = (0..lexicon.len())
        .map(|r| if r == 0 { 0.4 } else { 0.6 / (r as f64 * harmonic) })
        .collect();
    let dist = rand::distr::weighted::WeightedIndex::new(&weights).unwrap();
    let sentence = |rng: &mut ChaCha8Rng, len: usize, novel: f64| -> Vec<String> {
        (0..len)
            .map(|_| {
                if rng.random_bool(novel) {
                    loop {
                        let w = random_word(rng, 3, 6);
                        if !lexicon.contains(&w) {
                            return w;
                        }
                    }
                }
                lexicon[rng.sample(&dist)].clone()
            })
            .collect()
    };
    let train = (0..150).map(|_| {
        let len = rng.random_range(15..=25);
        sentence(&mut rng, len, 0.0)
    });
    let train: Vec<_> = train.collect();
    let test = (0..50)
        .map(|_| {
            let len = rng.random_range(5..=12);
            sentence(&mut rng, len, 0.05)
        })
        .collect();
    World { lexicon, train, test }
}

pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

pub struct Files {
    pub units: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
}

pub fn write_world(dir: &Path, w: &World) -> Files {
    let files = Files {
        units: dir.join("units.txt"),
        train: dir.join("train.txt"),
        test: dir.join("test.txt"),
    };
    write_lines(&files.units, units());
    write_lines(&files.train, w.train.iter().map(|s| s.join(" ")));
    write_lines(&files.test, w.test.iter().map(|s| s.join(" ")));
    files
}

pub fn wordeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordeval")).args(args).output().unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `evaluate` with the trigram model over the world in `dir`, writing to `out`.
pub fn evaluate_args(files: &Files, out: &Path) -> Vec<String> {
    [
        "evaluate",
        "--scheme",
        "wordpiece",
        "--units",
        p(&files.units),
        "--train",
        p(&files.train),
        "--test",
        p(&files.test),
        "--order",
        "3",
        "--out-dir",
        p(out),
    ]
    .map(String::from)
    .to_vec()
}
