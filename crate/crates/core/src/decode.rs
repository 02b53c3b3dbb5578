//! Whole-word decoding on top of a next-unit predictor.
//!
//! Three questions are asked for every word event `(history, target)`:
//!
//! * **greedy**: following the argmax unit at every step, which word comes
//!   out, and is it the target? A word is finished when the next argmax unit
//!   starts a new word (or ends the text). The search may stop as soon as the
//!   accumulated string is no longer a prefix of the target.
//! * **top-k**: is there any unit path spelling the target where every unit
//!   sits in the model's top `k` at its step, and every partial spelling is a
//!   proper prefix of the target? Searched depth first from the roots in rank
//!   order. This is an existence check, not a likelihood beam.
//! * **log-probability**: the sum of unit log-probabilities along the target's
//!   canonical segmentation.
//!
//! The context for step `j` is the history followed by the units already
//! chosen for the current word.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::predictor::{Predictor, UnitDistribution};
use crate::tokenizer::{Segmentation, SubwordVocab, UnitId, UnitKind};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MAX_UNITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GreedyMode {
    /// Stop as soon as the decoded string leaves the target's prefixes.
    EarlyExit,
    /// Decode the whole word before comparing, so the predicted word is known
    /// even on a miss.
    #[default]
    FullWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopKMode {
    #[default]
    UnitPath,
    /// Experimental: hit iff the target is among the `k` most probable whole
    /// words, found by best-first search where each step keeps the `k` best
    /// continuations. Needs full distributions from the predictor.
    WholeWordRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    pub k: usize,
    pub max_units: usize,
    pub greedy_mode: GreedyMode,
    pub topk_mode: TopKMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            k: DEFAULT_K,
            max_units: DEFAULT_MAX_UNITS,
            greedy_mode: GreedyMode::default(),
            topk_mode: TopKMode::default(),
        }
    }
}

/// One prediction event: the unit-encoded history and the target word.
#[derive(Debug, Clone)]
pub struct WordEvent {
    pub history: Vec<UnitId>,
    pub target: Segmentation,
}

impl WordEvent {
    pub fn new(history: Vec<UnitId>, target: Segmentation) -> Result<Self> {
        if target.word.is_empty() || target.units.is_empty() {
            return Err(Error::Domain("empty target word".into()));
        }
        Ok(WordEvent { history, target })
    }

    pub fn target_word(&self) -> &str {
        &self.target.word
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub hit: bool,
    /// The decoded word. Truncated at the point of divergence in
    /// [`GreedyMode::EarlyExit`].
    pub word: String,
    pub units: Vec<UnitId>,
    /// `max_units` ran out before the word ended.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub greedy_hit: bool,
    pub greedy_word: String,
    pub topk_hit: bool,
    pub word_logprob: f64,
    pub units_consumed: usize,
    pub exhausted: bool,
}

/// Predictor calls for a single event, memoised on the partial word.
struct Scope<'a, P: ?Sized> {
    pred: &'a P,
    history: &'a [UnitId],
    k: usize,
    cache: HashMap<Vec<UnitId>, UnitDistribution>,
    scratch: Vec<UnitId>,
}

impl<'a, P: Predictor + ?Sized> Scope<'a, P> {
    fn new(pred: &'a P, history: &'a [UnitId], k: usize) -> Self {
        Scope {
            pred,
            history,
            k,
            cache: HashMap::new(),
            scratch: Vec::with_capacity(history.len() + 8),
        }
    }

    fn context(&mut self, partial: &[UnitId]) -> &[UnitId] {
        self.scratch.clear();
        self.scratch.extend_from_slice(self.history);
        self.scratch.extend_from_slice(partial);
        &self.scratch
    }

    fn ranked(&mut self, partial: &[UnitId]) -> Result<&UnitDistribution> {
        if !self.cache.contains_key(partial) {
            let (pred, k) = (self.pred, self.k);
            let dist = pred.predict(self.context(partial), k)?;
            if dist.top.is_empty() {
                return Err(Error::Numeric("predictor returned an empty distribution".into()));
            }
            self.cache.insert(partial.to_vec(), dist);
        }
        Ok(&self.cache[partial])
    }

    fn logprob(&mut self, partial: &[UnitId], unit: UnitId) -> Result<f64> {
        if let Some(lp) = self.ranked(partial)?.logprob_of(unit) {
            return Ok(lp);
        }
        let pred = self.pred;
        pred.unit_logprob(self.context(partial), unit)
    }
}

fn greedy_in<P: Predictor + ?Sized>(
    scope: &mut Scope<'_, P>,
    vocab: &SubwordVocab,
    target: &str,
    max_units: usize,
    mode: GreedyMode,
) -> Result<GreedyOutcome> {
    if max_units == 0 {
        return Err(Error::Domain("max_units must be at least 1".into()));
    }
    let mut units: Vec<UnitId> = Vec::new();
    let mut word = String::new();
    let mut exhausted = false;
    loop {
        let next = scope.ranked(&units)?.top[0].0;
        let kind = vocab.kind(next);
        if units.is_empty() {
            if kind == UnitKind::EndOfText {
                break;
            }
        } else if kind != UnitKind::Continuation {
            break;
        }
        if units.len() == max_units {
            exhausted = true;
            break;
        }
        units.push(next);
        word.push_str(vocab.surface(next));
        if mode == GreedyMode::EarlyExit && !target.starts_with(word.as_str()) {
            break;
        }
    }
    let well_formed = units.first().is_some_and(|&u| vocab.kind(u) == UnitKind::WordInitial);
    Ok(GreedyOutcome {
        hit: well_formed && !exhausted && word == target,
        word,
        units,
        exhausted,
    })
}

fn is_proper_prefix(candidate: &str, target: &str) -> bool {
    candidate.len() < target.len() && target.starts_with(candidate)
}

fn topk_in<P: Predictor + ?Sized>(
    scope: &mut Scope<'_, P>,
    vocab: &SubwordVocab,
    target: &str,
    max_units: usize,
) -> Result<bool> {
    if max_units == 0 {
        return Err(Error::Domain("max_units must be at least 1".into()));
    }
    let roots: Vec<UnitId> = scope.ranked(&[])?.top.iter().map(|&(u, _)| u).collect();
    for root in roots {
        if vocab.kind(root) != UnitKind::WordInitial {
            continue;
        }
        let spelled = vocab.surface(root);
        if spelled == target {
            return Ok(true);
        }
        if !is_proper_prefix(spelled, target) {
            continue;
        }
        let mut paths = vec![(vec![root], spelled.to_owned())];
        while let Some((path, spelled)) = paths.pop() {
            if path.len() >= max_units {
                continue;
            }
            let children: Vec<UnitId> = scope.ranked(&path)?.top.iter().map(|&(u, _)| u).collect();
            for unit in children {
                if vocab.kind(unit) != UnitKind::Continuation {
                    continue;
                }
                let mut word = spelled.clone();
                word.push_str(vocab.surface(unit));
                if word == target {
                    return Ok(true);
                }
                if is_proper_prefix(&word, target) {
                    let mut next = path.clone();
                    next.push(unit);
                    paths.push((next, word));
                }
            }
        }
    }
    Ok(false)
}

#[derive(Debug)]
struct Frontier {
    logprob: f64,
    complete: bool,
    path: Vec<UnitId>,
    word: String,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.logprob
            .total_cmp(&other.logprob)
            .then_with(|| other.path.cmp(&self.path))
            .then_with(|| self.complete.cmp(&other.complete))
    }
}

const WHOLE_WORD_NODE_BUDGET: usize = 20_000;

fn whole_word_rank_in<P: Predictor + ?Sized>(
    pred: &P,
    vocab: &SubwordVocab,
    event: &WordEvent,
    k: usize,
    max_units: usize,
) -> Result<bool> {
    let target = event.target_word();
    let full = pred.vocab_size();
    let mut heap = BinaryHeap::new();
    heap.push(Frontier {
        logprob: 0.0,
        complete: false,
        path: Vec::new(),
        word: String::new(),
    });
    let mut found = HashSet::new();
    let mut ctx = event.history.clone();
    let mut pops = 0;
    while let Some(node) = heap.pop() {
        pops += 1;
        if pops > WHOLE_WORD_NODE_BUDGET {
            break;
        }
        if node.complete {
            if node.word == target {
                return Ok(true);
            }
            found.insert(node.word);
            if found.len() >= k {
                break;
            }
            continue;
        }
        ctx.truncate(event.history.len());
        ctx.extend_from_slice(&node.path);
        let dist = pred.predict(&ctx, full)?;
        if !node.path.is_empty() {
            let end_mass: f64 = dist
                .top
                .iter()
                .filter(|&&(u, _)| vocab.kind(u) != UnitKind::Continuation)
                .map(|&(_, lp)| lp.exp())
                .sum();
            if end_mass > 0.0 && !found.contains(&node.word) {
                heap.push(Frontier {
                    logprob: node.logprob + end_mass.ln(),
                    complete: true,
                    path: node.path.clone(),
                    word: node.word.clone(),
                });
            }
        }
        if node.path.len() >= max_units {
            continue;
        }
        let wanted = if node.path.is_empty() {
            UnitKind::WordInitial
        } else {
            UnitKind::Continuation
        };
        for &(u, lp) in dist.top.iter().filter(|&&(u, _)| vocab.kind(u) == wanted).take(k) {
            let mut path = node.path.clone();
            path.push(u);
            let mut word = node.word.clone();
            word.push_str(vocab.surface(u));
            heap.push(Frontier {
                logprob: node.logprob + lp,
                complete: false,
                path,
                word,
            });
        }
    }
    Ok(false)
}

fn logprob_in<P: Predictor + ?Sized>(scope: &mut Scope<'_, P>, target: &Segmentation) -> Result<f64> {
    if target.has_unknown {
        return Err(Error::Coverage {
            word: target.word.clone(),
        });
    }
    let mut total = 0.0;
    for j in 0..target.units.len() {
        let lp = scope.logprob(&target.units[..j], target.units[j])?;
        if !lp.is_finite() {
            return Err(Error::Numeric(format!(
                "unit {} of `{}` has log-probability {lp}",
                target.units[j], target.word
            )));
        }
        total += lp;
    }
    Ok(total)
}

/// Follows argmax units until the word ends.
pub fn greedy_word_search<P: Predictor + ?Sized>(
    pred: &P,
    vocab: &SubwordVocab,
    event: &WordEvent,
    max_units: usize,
    mode: GreedyMode,
) -> Result<GreedyOutcome> {
    let mut scope = Scope::new(pred, &event.history, 1);
    greedy_in(&mut scope, vocab, event.target_word(), max_units, mode)
}

/// Whether some top-`k` unit path spells the target.
pub fn topk_word_search<P: Predictor + ?Sized>(
    pred: &P,
    vocab: &SubwordVocab,
    event: &WordEvent,
    k: usize,
    max_units: usize,
) -> Result<bool> {
    let mut scope = Scope::new(pred, &event.history, k);
    topk_in(&mut scope, vocab, event.target_word(), max_units)
}

/// Log-probability of the target along its canonical segmentation.
pub fn word_logprob<P: Predictor + ?Sized>(pred: &P, event: &WordEvent) -> Result<f64> {
    let mut scope = Scope::new(pred, &event.history, 1);
    logprob_in(&mut scope, &event.target)
}

/// Runs all three searches, sharing predictor calls between them.
pub fn decode_event<P: Predictor + ?Sized>(
    pred: &P,
    vocab: &SubwordVocab,
    event: &WordEvent,
    cfg: &DecodeConfig,
) -> Result<DecodeOutcome> {
    if cfg.k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let target = event.target_word();
    let mut scope = Scope::new(pred, &event.history, cfg.k);
    let greedy = greedy_in(&mut scope, vocab, target, cfg.max_units, cfg.greedy_mode)?;
    let topk_hit = match cfg.topk_mode {
        // the greedy path is a rank-1 path, so a greedy hit is found here too
        TopKMode::UnitPath => topk_in(&mut scope, vocab, target, cfg.max_units)?,
        // the k most probable words need not include the greedy word
        TopKMode::WholeWordRank => {
            greedy.hit || whole_word_rank_in(pred, vocab, event, cfg.k, cfg.max_units)?
        }
    };
    let word_logprob = logprob_in(&mut scope, &event.target)?;
    Ok(DecodeOutcome {
        greedy_hit: greedy.hit,
        units_consumed: greedy.units.len(),
        greedy_word: greedy.word,
        exhausted: greedy.exhausted,
        topk_hit,
        word_logprob,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::UniformPredictor;

    /// Returns a fixed ranking keyed on the last unit of context (or the
    /// empty context); unknown contexts get `fallback`.
    struct Table {
        size: usize,
        rows: HashMap<Vec<UnitId>, Vec<f64>>,
        fallback: Vec<f64>,
    }

    impl Predictor for Table {
        fn vocab_size(&self) -> usize {
            self.size
        }
        fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution> {
            let row = self.rows.get(context).unwrap_or(&self.fallback);
            let lps: Vec<f64> = row.iter().map(|p| p.ln()).collect();
            Ok(UnitDistribution::from_logprobs(&lps, k.min(self.size)))
        }
    }

    fn wp(units: &[&str]) -> SubwordVocab {
        SubwordVocab::wordpiece(units.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn event(v: &SubwordVocab, history: &[UnitId], word: &str) -> WordEvent {
        WordEvent::new(history.to_vec(), v.segment(word).unwrap()).unwrap()
    }

    #[test]
    fn greedy_single_unit_hit() {
        let v = wp(&["the", "cat", "##s"]);
        let p = Table {
            size: 3,
            rows: HashMap::new(),
            fallback: vec![0.7, 0.2, 0.1],
        };
        let e = event(&v, &[UnitId(1)], "the");
        let g = greedy_word_search(&p, &v, &e, 16, GreedyMode::FullWord).unwrap();
        assert!(g.hit);
        assert_eq!(g.units.len(), 1);
        assert_eq!(g.word, "the");
    }

    #[test]
    fn greedy_velociraptor_miss_at_first_step() {
        let v = wp(&["the", "velo", "##ci", "##raptor"]);
        let p = Table {
            size: 4,
            rows: HashMap::new(),
            fallback: vec![0.5, 0.3, 0.1, 0.1],
        };
        let e = event(&v, &[], "velociraptor");
        let g = greedy_word_search(&p, &v, &e, 16, GreedyMode::EarlyExit).unwrap();
        assert!(!g.hit);
        assert_eq!(g.units, vec![UnitId(0)]);
    }

    #[test]
    fn greedy_requires_word_to_end() {
        // "the" then "##y": the decoded word is "they", not "the".
        let v = wp(&["the", "##y", "a"]);
        let mut rows = HashMap::new();
        rows.insert(vec![], vec![0.8, 0.1, 0.1]);
        rows.insert(vec![UnitId(0)], vec![0.1, 0.8, 0.1]);
        let p = Table {
            size: 3,
            rows,
            fallback: vec![0.1, 0.1, 0.8],
        };
        let e = event(&v, &[], "the");
        let g = greedy_word_search(&p, &v, &e, 16, GreedyMode::FullWord).unwrap();
        assert!(!g.hit);
        assert_eq!(g.word, "they");
        let g = greedy_word_search(&p, &v, &e, 16, GreedyMode::EarlyExit).unwrap();
        assert!(!g.hit);
        // but the top-k search only needs the spelling
        assert!(topk_word_search(&p, &v, &e, 1, 16).unwrap());
    }

    #[test]
    fn greedy_exhaustion_is_a_flagged_miss() {
        let v = wp(&["a", "##a"]);
        let mut rows = HashMap::new();
        rows.insert(vec![], vec![0.9, 0.1]);
        let p = Table {
            size: 2,
            rows,
            fallback: vec![0.1, 0.9],
        };
        let e = event(&v, &[], "aa");
        let g = greedy_word_search(&p, &v, &e, 3, GreedyMode::FullWord).unwrap();
        assert!(g.exhausted && !g.hit);
        assert_eq!(g.word, "aaa");
    }

    #[test]
    fn topk_rank_cutoff() {
        // target "aa" over {a, ##a, b, ##b}: ##a sits at rank 2 after "a".
        let v = wp(&["a", "##a", "b", "##b"]);
        let mut rows = HashMap::new();
        rows.insert(vec![], vec![0.6, 0.1, 0.2, 0.1]);
        rows.insert(vec![UnitId(0)], vec![0.1, 0.3, 0.2, 0.4]);
        let p = Table {
            size: 4,
            rows,
            fallback: vec![0.25; 4],
        };
        let e = event(&v, &[], "aa");
        // step 2 ranking: ##b(0.4) ##a(0.3) b(0.2) a(0.1)
        assert!(!topk_word_search(&p, &v, &e, 1, 16).unwrap());
        assert!(topk_word_search(&p, &v, &e, 2, 16).unwrap());
        assert!(!topk_word_search(&p, &v, &e, 2, 1).unwrap());
    }

    #[test]
    fn logprob_product_rule() {
        let v = wp(&["a", "##b"]);
        let p = UniformPredictor::new(2);
        let e = event(&v, &[], "ab");
        assert!((word_logprob(&p, &e).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        let u50 = UniformPredictor::new(50);
        let v50 = wp(&(0..50).map(|i| format!("w{i}")).collect::<Vec<_>>().iter().map(String::as_str).collect::<Vec<_>>());
        let e = event(&v50, &[UnitId(3)], "w7");
        assert!((word_logprob(&u50, &e).unwrap() - (1.0f64 / 50.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn logprob_refuses_unknown_segmentation() {
        let v = wp(&["a", "[UNK]"]).with_unknown("[UNK]").unwrap();
        let e = event(&v, &[], "zz");
        assert!(matches!(word_logprob(&UniformPredictor::new(2), &e), Err(Error::Coverage { .. })));
    }

    #[test]
    fn bpe_bare_marker_unit() {
        let v = SubwordVocab::bpe(
            vec!["Ġ".into(), "a".into(), "b".into()],
            vec![],
            "Ġ",
        )
        .unwrap();
        let mut rows = HashMap::new();
        rows.insert(vec![], vec![0.8, 0.1, 0.1]);
        rows.insert(vec![UnitId(0)], vec![0.1, 0.6, 0.3]);
        rows.insert(vec![UnitId(0), UnitId(1)], vec![0.1, 0.3, 0.6]);
        rows.insert(vec![UnitId(0), UnitId(1), UnitId(2)], vec![0.8, 0.1, 0.1]);
        let p = Table { size: 3, rows, fallback: vec![1.0 / 3.0; 3] };
        let e = event(&v, &[], "ab");
        assert_eq!(e.target.units, vec![UnitId(0), UnitId(1), UnitId(2)]);
        let out = decode_event(&p, &v, &e, &DecodeConfig::default()).unwrap();
        assert!(out.greedy_hit && out.topk_hit);
        assert_eq!(out.units_consumed, 3);
        assert!((out.word_logprob - (0.8f64 * 0.6 * 0.6).ln()).abs() < 1e-12);
    }

    #[test]
    fn whole_word_rank_mode() {
        let v = wp(&["a", "##a", "b", "##b"]);
        let mut rows = HashMap::new();
        rows.insert(vec![], vec![0.6, 0.1, 0.3, 0.0001]);
        // after "a": mostly end of word
        rows.insert(vec![UnitId(0)], vec![0.5, 0.2, 0.2, 0.1]);
        let p = Table { size: 4, rows, fallback: vec![0.7, 0.1, 0.1, 0.1] };
        let cfg = DecodeConfig { k: 1, topk_mode: TopKMode::WholeWordRank, ..Default::default() };
        // best word: "a" (0.6 * 0.7 end mass) beats "b" (0.3 * 0.8)
        let e = event(&v, &[], "b");
        assert!(!decode_event(&p, &v, &e, &cfg).unwrap().topk_hit);
        let cfg = DecodeConfig { k: 2, ..cfg };
        assert!(decode_event(&p, &v, &e, &cfg).unwrap().topk_hit);
    }
}
