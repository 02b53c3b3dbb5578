use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Word vectors of a common dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Adds or replaces the vector for `word`.
    pub fn insert(&mut self, word: impl Into<String>, vector: &[f32]) -> Result<()> {
        let word = word.into();
        if vector.len() != self.dim {
            return Err(Error::Domain(format!(
                "vector for `{word}` has {} components, table has {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("vector for `{word}` is not finite")));
        }
        match self.index.get(&word) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.position(word).map(|i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.words.iter().enumerate().map(|(i, w)| (w.as_str(), self.row(i)))
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine(self.get(a)?, self.get(b)?))
    }

    /// Writes the word2vec text format: `count dim` header, then one
    /// `word v1 … v_dim` line per word. Values print in shortest round-trip
    /// form, so reloading reproduces them exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (word, v) in self.iter() {
            write!(out, "{word}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes).map_err(|e| {
            let line = e.as_bytes()[..e.utf8_error().valid_up_to()]
                .iter()
                .filter(|&&b| b == b'\n')
                .count();
            Error::Encoding {
                path: path.to_path_buf(),
                line: line + 1,
            }
        })?;
        let mut lines = text.lines().enumerate();
        let (count, dim) = match lines.next() {
            Some((_, header)) => {
                let fields: Vec<_> = header.split_whitespace().collect();
                match fields.as_slice() {
                    [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
                        (Ok(c), Ok(d)) if d > 0 => (c, d),
                        _ => return Err(Error::format(path, 1, format!("bad header `{header}`"))),
                    },
                    _ => return Err(Error::format(path, 1, "header must be `<count> <dim>`")),
                }
            }
            None => return Err(Error::format(path, 1, "empty embedding file")),
        };
        let mut table = EmbeddingTable::new(dim);
        let mut vector = Vec::with_capacity(dim);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            vector.clear();
            for f in fields {
                let x: f32 = f
                    .parse()
                    .map_err(|_| Error::format(path, lineno, format!("bad component `{f}`")))?;
                if !x.is_finite() {
                    return Err(Error::format(path, lineno, "non-finite component"));
                }
                vector.push(x);
            }
            if vector.len() != dim {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("`{word}` has {} components, header says {dim}", vector.len()),
                ));
            }
            if table.contains(word) {
                return Err(Error::format(path, lineno, format!("duplicate word `{word}`")));
            }
            table.insert(word, &vector)?;
        }
        if table.len() != count {
            return Err(Error::format(
                path,
                1,
                format!("header announces {count} vectors, found {}", table.len()),
            ));
        }
        Ok(table)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}
