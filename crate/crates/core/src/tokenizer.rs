//! Subword vocabularies and canonical word segmentation.
//!
//! Two marker conventions are supported. BPE units that start a word carry a
//! word-initial marker (`Ġ` by default); everything else continues the current
//! word. WordPiece is the mirror image: continuation units carry a `##` prefix
//! and everything else starts a word. In both cases a word is finished when the
//! *next* unit starts a new word, or when the end-of-text unit shows up.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_WORD_INITIAL: &str = "Ġ";
pub const CONTINUATION_PREFIX: &str = "##";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub u32);

impl UnitId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Bpe,
    WordPiece,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Bpe => "bpe",
            Scheme::WordPiece => "wordpiece",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpe" => Ok(Scheme::Bpe),
            "wordpiece" => Ok(Scheme::WordPiece),
            other => Err(Error::Config(format!(
                "unknown vocabulary scheme `{other}` (expected bpe or wordpiece)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    WordInitial,
    Continuation,
    EndOfText,
}

#[derive(Debug, Clone)]
pub struct SubwordVocab {
    scheme: Scheme,
    units: Vec<String>,
    ids: HashMap<String, UnitId>,
    kinds: Vec<UnitKind>,
    surfaces: Vec<String>,
    merge_ranks: HashMap<(String, String), usize>,
    word_initial_marker: String,
    unknown: Option<UnitId>,
    end_of_text: Option<UnitId>,
}

/// Canonical unit sequence for one word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub word: String,
    pub units: Vec<UnitId>,
    pub word_initial: Vec<bool>,
    /// Set when the unknown unit had to stand in for part of the word, in
    /// which case the units no longer spell the word.
    pub has_unknown: bool,
}

impl SubwordVocab {
    pub fn wordpiece(units: Vec<String>) -> Result<Self> {
        Self::build(Scheme::WordPiece, units, Vec::new(), DEFAULT_WORD_INITIAL.to_owned())
    }

    pub fn bpe(
        units: Vec<String>,
        merges: Vec<(String, String)>,
        word_initial_marker: impl Into<String>,
    ) -> Result<Self> {
        Self::build(Scheme::Bpe, units, merges, word_initial_marker.into())
    }

    fn build(
        scheme: Scheme,
        units: Vec<String>,
        merges: Vec<(String, String)>,
        word_initial_marker: String,
    ) -> Result<Self> {
        if scheme == Scheme::Bpe && word_initial_marker.is_empty() {
            return Err(Error::Config("BPE word-initial marker must not be empty".into()));
        }
        let mut ids = HashMap::with_capacity(units.len());
        for (i, u) in units.iter().enumerate() {
            if u.is_empty() {
                return Err(Error::Domain(format!("unit {i} is empty")));
            }
            if ids.insert(u.clone(), UnitId(i as u32)).is_some() {
                return Err(Error::Domain(format!("duplicate unit `{u}`")));
            }
        }
        let mut kinds = Vec::with_capacity(units.len());
        let mut surfaces = Vec::with_capacity(units.len());
        for u in &units {
            let (kind, surface) = classify(scheme, &word_initial_marker, u);
            kinds.push(kind);
            surfaces.push(surface.to_owned());
        }
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, pair) in merges.into_iter().enumerate() {
            merge_ranks.entry(pair).or_insert(rank);
        }
        Ok(SubwordVocab {
            scheme,
            units,
            ids,
            kinds,
            surfaces,
            merge_ranks,
            word_initial_marker,
            unknown: None,
            end_of_text: None,
        })
    }

    /// Declares the unit substituted for unsegmentable material.
    pub fn with_unknown(mut self, unit: &str) -> Result<Self> {
        let id = self.require(unit)?;
        self.unknown = Some(id);
        Ok(self)
    }

    /// Declares the end-of-text unit. It terminates a word like a word-initial
    /// unit does but never starts one.
    pub fn with_end_of_text(mut self, unit: &str) -> Result<Self> {
        let id = self.require(unit)?;
        self.kinds[id.index()] = UnitKind::EndOfText;
        self.surfaces[id.index()].clear();
        self.end_of_text = Some(id);
        Ok(self)
    }

    fn require(&self, unit: &str) -> Result<UnitId> {
        self.id(unit)
            .ok_or_else(|| Error::Config(format!("unit `{unit}` is not in the vocabulary")))
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn id(&self, unit: &str) -> Option<UnitId> {
        self.ids.get(unit).copied()
    }

    pub fn unit(&self, id: UnitId) -> Option<&str> {
        self.units.get(id.index()).map(String::as_str)
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// Unit text with scheme markers stripped.
    pub fn surface(&self, id: UnitId) -> &str {
        &self.surfaces[id.index()]
    }

    pub fn kind(&self, id: UnitId) -> UnitKind {
        self.kinds[id.index()]
    }

    pub fn unknown(&self) -> Option<UnitId> {
        self.unknown
    }

    pub fn end_of_text(&self) -> Option<UnitId> {
        self.end_of_text
    }

    pub fn word_initial_marker(&self) -> &str {
        &self.word_initial_marker
    }

    pub fn num_merges(&self) -> usize {
        self.merge_ranks.len()
    }

    /// Whether `next` closes the word being decoded, i.e. starts a new word or
    /// ends the text.
    pub fn is_end_of_word(&self, next: UnitId) -> Result<bool> {
        match self.kinds.get(next.index()) {
            Some(UnitKind::Continuation) => Ok(false),
            Some(_) => Ok(true),
            None => Err(Error::Domain(format!(
                "unit id {next} outside vocabulary of {} units",
                self.len()
            ))),
        }
    }

    /// Hex SHA-256 of the unit strings in id order, each followed by `\n`.
    /// This is what the remote handshake compares.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for u in &self.units {
            h.update(u.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn segment(&self, word: &str) -> Result<Segmentation> {
        if word.is_empty() {
            return Err(Error::Domain("cannot segment an empty word".into()));
        }
        let (units, has_unknown) = match self.scheme {
            Scheme::WordPiece => self.segment_wordpiece(word)?,
            Scheme::Bpe => self.segment_bpe(word)?,
        };
        let word_initial = (0..units.len()).map(|i| i == 0).collect();
        Ok(Segmentation {
            word: word.to_owned(),
            units,
            word_initial,
            has_unknown,
        })
    }

    /// Unit ids for a run of words, as fed to a predictor as context.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<UnitId>> {
        let mut out = Vec::new();
        for w in words {
            out.extend(self.segment(w.as_ref())?.units);
        }
        Ok(out)
    }

    /// Unit sequences for language-model training. A word the vocabulary
    /// cannot spell ends the current sequence, so no n-gram spans the gap.
    pub fn encode_corpus(&self, corpus: &crate::corpus::Corpus) -> Result<Vec<Vec<UnitId>>> {
        let mut out = Vec::new();
        for sentence in corpus.sentences() {
            let mut seq = Vec::new();
            for w in sentence {
                match self.segment(w) {
                    Ok(s) => seq.extend(s.units),
                    Err(Error::Coverage { .. }) => {
                        if !seq.is_empty() {
                            out.push(std::mem::take(&mut seq));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            if !seq.is_empty() {
                out.push(seq);
            }
        }
        Ok(out)
    }

    fn segment_wordpiece(&self, word: &str) -> Result<(Vec<UnitId>, bool)> {
        let mut units = Vec::new();
        let mut start = 0;
        let mut candidate = String::with_capacity(word.len() + 2);
        while start < word.len() {
            let mut found = None;
            let mut end = word.len();
            while end > start {
                candidate.clear();
                if start > 0 {
                    candidate.push_str(CONTINUATION_PREFIX);
                }
                candidate.push_str(&word[start..end]);
                if let Some(id) = self.id(&candidate) {
                    let expected = if start == 0 {
                        UnitKind::WordInitial
                    } else {
                        UnitKind::Continuation
                    };
                    if self.kind(id) == expected {
                        found = Some(id);
                        break;
                    }
                }
                end = prev_boundary(word, end);
            }
            match found {
                Some(id) => {
                    units.push(id);
                    start = end;
                }
                None => {
                    return match self.unknown {
                        Some(unk) => Ok((vec![unk], true)),
                        None => Err(Error::Coverage { word: word.to_owned() }),
                    };
                }
            }
        }
        Ok((units, false))
    }

    fn segment_bpe(&self, word: &str) -> Result<(Vec<UnitId>, bool)> {
        let mut symbols: Vec<String> = Vec::with_capacity(word.chars().count() + 1);
        symbols.push(self.word_initial_marker.clone());
        symbols.extend(word.chars().map(String::from));

        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len()
                    && self.merge_ranks.get(&(symbols[i].clone(), symbols[i + 1].clone()))
                        == Some(&rank)
                {
                    merged.push(format!("{}{}", symbols[i], symbols[i + 1]));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }

        let mut units = Vec::with_capacity(symbols.len());
        let mut has_unknown = false;
        for s in &symbols {
            match self.id(s) {
                Some(id) => units.push(id),
                None => match self.unknown {
                    Some(unk) => {
                        has_unknown = true;
                        units.push(unk);
                    }
                    None => return Err(Error::Coverage { word: word.to_owned() }),
                },
            }
        }
        Ok((units, has_unknown))
    }
}

fn prev_boundary(s: &str, mut idx: usize) -> usize {
    idx -= 1;
    while !s.is_char_boundary(idx) {
        idx -= 1;
    }
    idx
}

fn classify<'a>(scheme: Scheme, marker: &str, unit: &'a str) -> (UnitKind, &'a str) {
    match scheme {
        Scheme::WordPiece => match unit.strip_prefix(CONTINUATION_PREFIX) {
            Some(rest) => (UnitKind::Continuation, rest),
            None => (UnitKind::WordInitial, unit),
        },
        Scheme::Bpe => match unit.strip_prefix(marker) {
            Some(rest) => (UnitKind::WordInitial, rest),
            None => (UnitKind::Continuation, unit),
        },
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        Error::Encoding {
            path: path.to_path_buf(),
            line: line + 1,
        }
    })
}

/// Reads a unit list: one unit per line, optionally `unit<TAB>id`. When ids
/// are present on every line they must be dense and unique. Returns the units
/// in id order and the `word_initial=` header value, if any.
fn parse_unit_list(path: &Path, allow_header: bool) -> Result<(Vec<String>, Option<String>)> {
    let text = read_text(path)?;
    let mut header = None;
    let mut rows: Vec<(usize, String, Option<u32>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if allow_header && rows.is_empty() && header.is_none() {
            if let Some(m) = line.strip_prefix("word_initial=") {
                if m.is_empty() {
                    return Err(Error::format(path, lineno, "empty word_initial marker"));
                }
                header = Some(m.to_owned());
                continue;
            }
        }
        if line.is_empty() {
            return Err(Error::format(path, lineno, "empty unit"));
        }
        let (unit, id) = match line.split_once('\t') {
            Some((u, id)) => {
                let id = id
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| Error::format(path, lineno, format!("bad unit id `{id}`")))?;
                (u, Some(id))
            }
            None => (line, None),
        };
        if unit.is_empty() {
            return Err(Error::format(path, lineno, "empty unit"));
        }
        rows.push((lineno, unit.to_owned(), id));
    }

    let with_ids = rows.iter().filter(|r| r.2.is_some()).count();
    let mut seen = HashMap::with_capacity(rows.len());
    for (lineno, unit, _) in &rows {
        if let Some(first) = seen.insert(unit.as_str(), *lineno) {
            return Err(Error::format(
                path,
                *lineno,
                format!("duplicate unit `{unit}` (first on line {first})"),
            ));
        }
    }
    if with_ids == 0 {
        return Ok((rows.into_iter().map(|r| r.1).collect(), header));
    }
    if with_ids != rows.len() {
        let lineno = rows.iter().find(|r| r.2.is_none()).map_or(0, |r| r.0);
        return Err(Error::format(path, lineno, "either every line carries an id or none does"));
    }
    let mut slots: Vec<Option<String>> = vec![None; rows.len()];
    for (lineno, unit, id) in rows {
        let id = id.unwrap_or_default() as usize;
        match slots.get_mut(id) {
            Some(slot @ None) => *slot = Some(unit),
            Some(Some(_)) => return Err(Error::format(path, lineno, format!("id {id} reused"))),
            None => return Err(Error::format(path, lineno, format!("id {id} is not dense"))),
        }
    }
    Ok((slots.into_iter().map(Option::unwrap_or_default).collect(), header))
}

fn parse_merges(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read_text(path)?;
    let mut merges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || (idx == 0 && line.starts_with("#version")) {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                merges.push((a.to_owned(), b.to_owned()))
            }
            _ => {
                return Err(Error::format(
                    path,
                    idx + 1,
                    format!("expected two space-separated symbols, got `{line}`"),
                ))
            }
        }
    }
    Ok(merges)
}

pub fn load_wordpiece(path: impl AsRef<Path>) -> Result<SubwordVocab> {
    let path = path.as_ref();
    let (units, _) = parse_unit_list(path, false)?;
    SubwordVocab::wordpiece(units)
}

pub fn load_bpe(units: impl AsRef<Path>, merges: impl AsRef<Path>) -> Result<SubwordVocab> {
    let (list, marker) = parse_unit_list(units.as_ref(), true)?;
    let merges = parse_merges(merges.as_ref())?;
    SubwordVocab::bpe(list, merges, marker.unwrap_or_else(|| DEFAULT_WORD_INITIAL.to_owned()))
}

/// Loads a vocabulary of the given scheme. BPE needs a merges file.
pub fn load_vocab(scheme: Scheme, units: &Path, merges: Option<&Path>) -> Result<SubwordVocab> {
    match (scheme, merges) {
        (Scheme::WordPiece, _) => load_wordpiece(units),
        (Scheme::Bpe, Some(m)) => load_bpe(units, m),
        (Scheme::Bpe, None) => Err(Error::Config("BPE vocabulary needs a merges file".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn spell(v: &SubwordVocab, seg: &Segmentation) -> String {
        seg.units.iter().map(|&u| v.surface(u)).collect()
    }

    #[test]
    fn wordpiece_file_markers() {
        let f = tmp("the\n##s\n");
        let v = load_wordpiece(f.path()).unwrap();
        assert_eq!(v.len(), 2);
        let s = v.id("##s").unwrap();
        assert_eq!(v.kind(s), UnitKind::Continuation);
        assert!(!v.is_end_of_word(s).unwrap());
        assert!(v.is_end_of_word(v.id("the").unwrap()).unwrap());
        assert_eq!(v.unit(UnitId(1)), Some("##s"));
    }

    #[test]
    fn end_of_word_classification() {
        let v = SubwordVocab::wordpiece(strs(&["dog", "##ing", "[SEP]"]))
            .unwrap()
            .with_end_of_text("[SEP]")
            .unwrap();
        assert!(!v.is_end_of_word(v.id("##ing").unwrap()).unwrap());
        assert!(v.is_end_of_word(v.id("dog").unwrap()).unwrap());
        assert!(v.is_end_of_word(v.id("[SEP]").unwrap()).unwrap());
        assert!(matches!(v.is_end_of_word(UnitId(99)), Err(Error::Domain(_))));

        let b = SubwordVocab::bpe(strs(&["Ġthe", "re"]), vec![], "Ġ").unwrap();
        assert!(b.is_end_of_word(b.id("Ġthe").unwrap()).unwrap());
        assert!(!b.is_end_of_word(b.id("re").unwrap()).unwrap());
    }

    #[test]
    fn wordpiece_duplicate_and_missing() {
        let f = tmp("a\nb\na\n");
        match load_wordpiece(f.path()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_wordpiece("/no/such/vocab"), Err(Error::Io { .. })));
    }

    #[test]
    fn wordpiece_longest_match() {
        let v = SubwordVocab::wordpiece(strs(&[
            "v", "##e", "##l", "##o", "##c", "##i", "##r", "##a", "##p", "##t", "velo", "##ci",
            "##raptor", "the",
        ]))
        .unwrap();
        let s = v.segment("velociraptor").unwrap();
        let text: Vec<_> = s.units.iter().map(|&u| v.unit(u).unwrap()).collect();
        assert_eq!(text, vec!["velo", "##ci", "##raptor"]);
        assert_eq!(s.word_initial, vec![true, false, false]);
        assert_eq!(v.segment("the").unwrap().units.len(), 1);
    }

    #[test]
    fn wordpiece_unknown_handling() {
        let v = SubwordVocab::wordpiece(strs(&["a", "##b", "[UNK]"])).unwrap();
        assert!(matches!(v.segment("ax"), Err(Error::Coverage { .. })));
        let v = v.with_unknown("[UNK]").unwrap();
        let s = v.segment("ax").unwrap();
        assert!(s.has_unknown);
        assert_eq!(s.units, vec![v.id("[UNK]").unwrap()]);
    }

    #[test]
    fn bpe_applies_merges_in_rank_order() {
        let units = strs(&["Ġ", "l", "o", "w", "e", "r", "Ġl", "Ġlo", "Ġlow", "er", "we"]);
        let merges = vec![
            ("Ġ".into(), "l".into()),
            ("Ġl".into(), "o".into()),
            ("e".into(), "r".into()),
            ("Ġlo".into(), "w".into()),
            ("w".into(), "e".into()),
        ];
        let v = SubwordVocab::bpe(units, merges, "Ġ").unwrap();
        let s = v.segment("lower").unwrap();
        let text: Vec<_> = s.units.iter().map(|&u| v.unit(u).unwrap()).collect();
        // "er" (rank 2) beats "we" (rank 4), so "w" stays alone until "Ġlo w".
        assert_eq!(text, vec!["Ġlow", "er"]);
        assert_eq!(spell(&v, &s), "lower");
        assert_eq!(v.kind(s.units[0]), UnitKind::WordInitial);
        assert_eq!(v.kind(s.units[1]), UnitKind::Continuation);
    }

    #[test]
    fn bpe_files_with_header_and_ids() {
        let units = tmp("word_initial=@\n@a\t1\n@\t0\na\t2\n");
        let merges = tmp("#version: 0.2\n@ a\n");
        let v = load_bpe(units.path(), merges.path()).unwrap();
        assert_eq!(v.word_initial_marker(), "@");
        assert_eq!(v.unit(UnitId(0)), Some("@"));
        assert_eq!(v.unit(UnitId(1)), Some("@a"));
        let s = v.segment("aa").unwrap();
        assert_eq!(s.units, vec![UnitId(1), UnitId(2)]);
    }

    #[test]
    fn bpe_malformed_merge_line() {
        let units = tmp("Ġ\na\n");
        let merges = tmp("Ġ a\nonlyone\n");
        match load_bpe(units.path(), merges.path()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_vocab(Scheme::Bpe, units.path(), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unit_ids_must_be_dense() {
        let f = tmp("a\t0\nb\t5\n");
        assert!(matches!(load_wordpiece(f.path()), Err(Error::Format { line: 2, .. })));
        let f = tmp("a\t0\nb\n");
        assert!(matches!(load_wordpiece(f.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn fingerprint_tracks_order() {
        let a = SubwordVocab::wordpiece(strs(&["a", "b"])).unwrap();
        let b = SubwordVocab::wordpiece(strs(&["b", "a"])).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        // sha256("a\nb\n")
        assert_eq!(
            a.fingerprint(),
            "911169ddaaf146aff539f58c26c489af3b892dff0fe283c1c264c65ae5aa59a2"
        );
    }

    #[test]
    fn encode_corpus_breaks_at_unspellable_words() {
        let v = SubwordVocab::wordpiece(strs(&["a", "b", "##x"])).unwrap();
        let c = crate::corpus::Corpus::parse("a bx q b
q
", false);
        let seqs = v.encode_corpus(&c).unwrap();
        assert_eq!(seqs, vec![vec![UnitId(0), UnitId(1), UnitId(2)], vec![UnitId(1)]]);
    }
}
