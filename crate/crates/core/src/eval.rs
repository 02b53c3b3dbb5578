//! Runs word prediction events over a test corpus.
//!
//! Every word from the second one of each sentence is a target, with the
//! preceding words as history. Sentences are decoded in parallel and the
//! records come back in corpus order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{assign_bins, Bin, BinAssignment, Corpus, FrequencyTable};
use crate::decode::{decode_event, DecodeConfig, WordEvent};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, PredictionRecord};
use crate::predictor::Predictor;
use crate::tokenizer::{Segmentation, SubwordVocab, UnitId};

pub const DEFAULT_MAX_HISTORY: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub decode: DecodeConfig,
    /// Carry history across sentence boundaries. The first word of each
    /// later sentence then becomes a target too.
    pub rolling_context: bool,
    /// Histories keep at most this many trailing units.
    pub max_history: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            decode: DecodeConfig::default(),
            rolling_context: false,
            max_history: DEFAULT_MAX_HISTORY,
        }
    }
}

/// A word that was not scored, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEvent {
    pub sentence: usize,
    pub position: usize,
    pub target: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub records: Vec<PredictionRecord>,
    /// Events lost to transport, protocol, or numeric failures. Excluded from
    /// every denominator.
    pub aborted: Vec<SkippedEvent>,
    /// Targets the vocabulary cannot spell without the unknown unit.
    pub unsegmentable: Vec<SkippedEvent>,
    pub bins: BinAssignment,
}

impl EvalRun {
    pub fn report(&self) -> Result<EvalReport> {
        EvalReport::from_records(&self.records, &self.bins)
    }
}

/// Bin table over the records' distinct targets, which is the population the
/// type-coverage percentages are taken over.
pub fn bins_for_records(train: &FrequencyTable, records: &[PredictionRecord]) -> BinAssignment {
    assign_bins(train, records.iter().map(|r| r.target.as_str()))
}

enum Event {
    Scored(PredictionRecord),
    Aborted(SkippedEvent),
    Unsegmentable(SkippedEvent),
}

fn is_abort(e: &Error) -> bool {
    matches!(e, Error::Transport(_) | Error::Protocol { .. } | Error::Numeric(_))
}

fn segment_all(vocab: &SubwordVocab, sentence: &[String]) -> Vec<Result<Segmentation>> {
    sentence.iter().map(|w| vocab.segment(w)).collect()
}

fn run_sentence<P: Predictor + ?Sized>(
    pred: &P,
    vocab: &SubwordVocab,
    opts: &EvalOptions,
    index: usize,
    sentence: &[String],
    mut history: Vec<UnitId>,
    first_target: usize,
) -> Result<Vec<Event>> {
    let segs = segment_all(vocab, sentence);
    let mut events = Vec::new();
    for (pos, (word, seg)) in sentence.iter().zip(segs).enumerate() {
        let skipped = |reason: String| SkippedEvent {
            sentence: index,
            position: pos,
            target: word.clone(),
            reason,
        };
        let seg = match seg {
            Ok(s) if !s.has_unknown => s,
            Ok(s) => {
                if pos >= first_target {
                    events.push(Event::Unsegmentable(skipped("segments to the unknown unit".into())));
                }
                history.extend(&s.units);
                continue;
            }
            Err(e @ Error::Coverage { .. }) => {
                // no unknown unit to stand in: the word is left out of later histories
                if pos >= first_target {
                    events.push(Event::Unsegmentable(skipped(e.to_string())));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        if pos >= first_target {
            let start = history.len().saturating_sub(opts.max_history);
            let event = WordEvent::new(history[start..].to_vec(), seg.clone())?;
            match decode_event(pred, vocab, &event, &opts.decode) {
                Ok(outcome) => events.push(Event::Scored(PredictionRecord::new(
                    index,
                    pos,
                    word,
                    Bin::Unbinned,
                    seg.units.len(),
                    outcome,
                ))),
                Err(e @ Error::Coverage { .. }) => events.push(Event::Unsegmentable(skipped(e.to_string()))),
                Err(e) if is_abort(&e) => {
                    log::warn!("event {index}:{pos} aborted: {e}");
                    events.push(Event::Aborted(skipped(e.to_string())));
                }
                Err(e) => return Err(e),
            }
        }
        history.extend(&seg.units);
    }
    Ok(events)
}

/// Decodes every target in `test` and bins the attempted targets by their
/// frequency in `train`.
pub fn evaluate<P: Predictor + ?Sized>(
    pred: &P,
    vocab: &SubwordVocab,
    train: &FrequencyTable,
    test: &Corpus,
    opts: &EvalOptions,
) -> Result<EvalRun> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test corpus has no sentences".into()));
    }
    if pred.vocab_size() != vocab.len() {
        return Err(Error::Config(format!(
            "predictor has {} units, vocabulary has {}",
            pred.vocab_size(),
            vocab.len()
        )));
    }
    let sentences = test.sentences();
    // with rolling context each sentence starts from the units of all earlier ones
    let prefixes: Vec<Vec<UnitId>> = if opts.rolling_context {
        let mut acc: Vec<UnitId> = Vec::new();
        sentences
            .iter()
            .map(|s| {
                let start = acc.len().saturating_sub(opts.max_history);
                let prefix = acc[start..].to_vec();
                for seg in segment_all(vocab, s).into_iter().flatten() {
                    acc.extend(&seg.units);
                }
                prefix
            })
            .collect()
    } else {
        vec![Vec::new(); sentences.len()]
    };
    let per_sentence: Vec<Vec<Event>> = sentences
        .par_iter()
        .zip(prefixes)
        .enumerate()
        .map(|(i, (s, prefix))| {
            let first = if opts.rolling_context && i > 0 { 0 } else { 1 };
            run_sentence(pred, vocab, opts, i, s, prefix, first)
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut aborted = Vec::new();
    let mut unsegmentable = Vec::new();
    for e in per_sentence.into_iter().flatten() {
        match e {
            Event::Scored(r) => records.push(r),
            Event::Aborted(s) => aborted.push(s),
            Event::Unsegmentable(s) => unsegmentable.push(s),
        }
    }
    let bins = bins_for_records(train, &records);
    for r in &mut records {
        r.target_bin = bins.bin(&r.target).expect("every record target is binned");
    }
    Ok(EvalRun {
        records,
        aborted,
        unsegmentable,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::count_frequencies;
    use crate::predictor::{train_ngram, UniformPredictor, UnitDistribution};

    fn vocab() -> SubwordVocab {
        let units = ["the", "cat", "sat", "on", "mat", "##s"].map(String::from).to_vec();
        SubwordVocab::wordpiece(units).unwrap()
    }

    /// Always predicts the next word of a fixed script, one unit at a time.
    struct Echo {
        vocab: SubwordVocab,
        words: Vec<Vec<UnitId>>,
    }

    impl Predictor for Echo {
        fn vocab_size(&self) -> usize {
            self.vocab.len()
        }
        fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution> {
            // find the script position reached by the context
            let flat: Vec<UnitId> = self.words.iter().flatten().copied().collect();
            let next = flat.get(context.len()).copied().unwrap_or(UnitId(0));
            let mut lp = vec![-10.0; self.vocab.len()];
            lp[next.index()] = -0.01;
            Ok(UnitDistribution::from_logprobs(&lp, k))
        }
    }

    #[test]
    fn perfect_echo_scores_everything() {
        let v = vocab();
        let test = Corpus::parse("the cats sat on the mat\n", false);
        let words = test.sentences()[0].iter().map(|w| v.segment(w).unwrap().units).collect();
        let echo = Echo { vocab: v.clone(), words };
        let train = count_frequencies(&test).unwrap();
        let run = evaluate(&echo, &v, &train, &test, &EvalOptions::default()).unwrap();
        assert_eq!(run.records.len(), 5);
        let rep = run.report().unwrap();
        assert_eq!((rep.top1.percent, rep.topk.percent, rep.t1.percent), (100.0, 100.0, 100.0));
        assert_eq!(run.records[0].target, "cats");
        assert_eq!(run.records[0].target_units, 2);
    }

    #[test]
    fn unsegmentable_targets_are_counted_not_scored() {
        let v = vocab();
        let test = Corpus::parse("the dog sat\nthe cat sat\n", false);
        let train = count_frequencies(&test).unwrap();
        let p = UniformPredictor::new(v.len());
        let run = evaluate(&p, &v, &train, &test, &EvalOptions::default()).unwrap();
        assert_eq!(run.records.len(), 3);
        assert_eq!(run.unsegmentable.len(), 1);
        assert_eq!((run.unsegmentable[0].sentence, run.unsegmentable[0].position), (0, 1));
        assert!(run.bins.bin("dog").is_none());
    }

    #[test]
    fn rolling_context_adds_sentence_initial_targets() {
        let v = vocab();
        let test = Corpus::parse("the cat\nthe mat\n", false);
        let train = count_frequencies(&test).unwrap();
        let seqs: Vec<Vec<UnitId>> = test.sentences().iter().map(|s| v.encode(s).unwrap()).collect();
        let m = train_ngram(&seqs, v.len(), 3, 0.75).unwrap();
        let plain = evaluate(&m, &v, &train, &test, &EvalOptions::default()).unwrap();
        let opts = EvalOptions { rolling_context: true, ..Default::default() };
        let rolling = evaluate(&m, &v, &train, &test, &opts).unwrap();
        assert_eq!(plain.records.len(), 2);
        assert_eq!(rolling.records.len(), 3);
        assert_eq!((rolling.records[1].sentence, rolling.records[1].position), (1, 0));
    }

    #[test]
    fn mismatched_vocab_size_is_config_error() {
        let v = vocab();
        let test = Corpus::parse("the cat\n", false);
        let train = count_frequencies(&test).unwrap();
        let p = UniformPredictor::new(3);
        assert!(matches!(
            evaluate(&p, &v, &train, &test, &EvalOptions::default()),
            Err(Error::Config(_))
        ));
    }

    struct Flaky(usize);

    impl Predictor for Flaky {
        fn vocab_size(&self) -> usize {
            self.0
        }
        fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution> {
            if context.contains(&UnitId(2)) {
                return Err(Error::Transport("connection reset".into()));
            }
            Ok(UnitDistribution::from_logprobs(&vec![-(self.0 as f64).ln(); self.0], k))
        }
    }

    #[test]
    fn transport_failures_abort_single_events() {
        let v = vocab();
        let test = Corpus::parse("the cat sat on\n", false);
        let train = count_frequencies(&test).unwrap();
        let run = evaluate(&Flaky(v.len()), &v, &train, &test, &EvalOptions::default()).unwrap();
        // only the event whose history holds `sat` fails
        assert_eq!(run.records.len(), 2);
        assert_eq!(run.aborted.len(), 1);
        assert_eq!(run.aborted[0].target, "on");
        assert_eq!(run.report().unwrap().events, 2);
    }
}
