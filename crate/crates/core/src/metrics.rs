//! Word-level metrics computed from per-event prediction records.
//!
//! Every number in an [`EvalReport`] is a function of the records alone, so a
//! saved record log can be re-scored without querying the model again.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Bin, BinAssignment};
use crate::decode::DecodeOutcome;
use crate::embedding::NeighborIndex;
use crate::error::{Error, Result};
use crate::predictor::UnitDistribution;
use crate::tokenizer::UnitId;

pub const DEFAULT_DEPTHS: [usize; 6] = [1, 3, 10, 25, 50, 100];

/// One word prediction event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sentence: usize,
    /// Zero-based word position within the sentence.
    pub position: usize,
    pub target: String,
    pub target_bin: Bin,
    pub greedy_hit: bool,
    pub topk_hit: bool,
    pub greedy_word: String,
    pub word_logprob: f64,
    /// Units in the target's canonical segmentation.
    pub target_units: usize,
    pub units_consumed: usize,
    pub exhausted: bool,
}

impl PredictionRecord {
    pub fn new(
        sentence: usize,
        position: usize,
        target: &str,
        target_bin: Bin,
        target_units: usize,
        outcome: DecodeOutcome,
    ) -> Self {
        PredictionRecord {
            sentence,
            position,
            target: target.to_owned(),
            target_bin,
            greedy_hit: outcome.greedy_hit,
            topk_hit: outcome.topk_hit,
            greedy_word: outcome.greedy_word,
            word_logprob: outcome.word_logprob,
            target_units,
            units_consumed: outcome.units_consumed,
            exhausted: outcome.exhausted,
        }
    }

    fn label(&self) -> String {
        format!("sentence {} position {} (`{}`)", self.sentence, self.position, self.target)
    }

    pub fn check(&self) -> Result<()> {
        if self.greedy_hit && !self.topk_hit {
            return Err(Error::Consistency(format!("greedy hit without top-k hit at {}", self.label())));
        }
        if !self.word_logprob.is_finite() {
            return Err(Error::Numeric(format!(
                "log-probability {} at {}",
                self.word_logprob,
                self.label()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: u64,
    pub total: u64,
    pub percent: f64,
}

impl Ratio {
    pub fn new(hits: u64, total: u64) -> Self {
        let percent = if total == 0 { 0.0 } else { 100.0 * hits as f64 / total as f64 };
        Ratio { hits, total, percent }
    }
}

/// Top-1 and top-k token accuracy in percent.
pub fn accuracy(records: &[PredictionRecord]) -> Result<(Ratio, Ratio)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records".into()));
    }
    let n = records.len() as u64;
    let g = records.iter().filter(|r| r.greedy_hit).count() as u64;
    let t = records.iter().filter(|r| r.topk_hit).count() as u64;
    Ok((Ratio::new(g, n), Ratio::new(t, n)))
}

/// Distinct hit types over `type_count`, for the greedy and top-k channels.
pub fn type_diversity(records: &[PredictionRecord], type_count: usize) -> Result<(Ratio, Ratio)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records".into()));
    }
    if type_count == 0 {
        return Err(Error::Domain("type count must be positive".into()));
    }
    let g: BTreeSet<&str> = records.iter().filter(|r| r.greedy_hit).map(|r| r.target.as_str()).collect();
    let t: BTreeSet<&str> = records.iter().filter(|r| r.topk_hit).map(|r| r.target.as_str()).collect();
    Ok((
        Ratio::new(g.len() as u64, type_count as u64),
        Ratio::new(t.len() as u64, type_count as u64),
    ))
}

/// exp of the mean negative word log-probability.
pub fn word_perplexity(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records".into()));
    }
    let mut sum = 0.0;
    for r in records {
        if !r.word_logprob.is_finite() {
            return Err(Error::Numeric(format!("log-probability {} at {}", r.word_logprob, r.label())));
        }
        sum += r.word_logprob;
    }
    Ok((-sum / records.len() as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropy {
    pub events: usize,
    /// Mean negative natural-log probability of the target unit.
    pub nats: f64,
    pub perplexity: f64,
}

/// Unit-level cross-entropy over `(target, distribution)` pairs. Each
/// distribution must include its target.
pub fn unit_cross_entropy(events: &[(UnitId, UnitDistribution)]) -> Result<CrossEntropy> {
    if events.is_empty() {
        return Err(Error::EmptyInput("no unit events".into()));
    }
    let mut sum = 0.0;
    for (i, (unit, dist)) in events.iter().enumerate() {
        let lp = dist
            .logprob_of(*unit)
            .ok_or_else(|| Error::Domain(format!("event {i}: distribution does not list unit {unit}")))?;
        if !lp.is_finite() {
            return Err(Error::Numeric(format!("event {i}: unit {unit} has probability 0")));
        }
        sum -= lp;
    }
    let nats = sum / events.len() as f64;
    Ok(CrossEntropy {
        events: events.len(),
        nats,
        perplexity: nats.exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCoverage {
    pub bin: Bin,
    /// Events whose target falls in this bin, with greedy and top-k hits.
    pub tokens: Ratio,
    pub tokens_topk: Ratio,
    /// Distinct hit types over the bin population.
    pub types: Ratio,
    pub types_topk: Ratio,
}

/// Per-bin token and type coverage for High, Mid, Low, then Unbinned.
pub fn stratified_coverage(records: &[PredictionRecord], bins: &BinAssignment) -> Result<Vec<BinCoverage>> {
    #[derive(Default)]
    struct Tally<'a> {
        events: u64,
        hits: u64,
        topk_hits: u64,
        types: BTreeSet<&'a str>,
        topk_types: BTreeSet<&'a str>,
    }
    let mut tallies: BTreeMap<Bin, Tally> = BTreeMap::new();
    for r in records {
        match bins.bin(&r.target) {
            Some(b) if b == r.target_bin => {}
            found => {
                return Err(Error::Consistency(format!(
                    "{} is tagged {} but the bin table says {}",
                    r.label(),
                    r.target_bin,
                    found.map_or("nothing".to_owned(), |b| b.to_string())
                )))
            }
        }
        let t = tallies.entry(r.target_bin).or_default();
        t.events += 1;
        if r.greedy_hit {
            t.hits += 1;
            t.types.insert(&r.target);
        }
        if r.topk_hit {
            t.topk_hits += 1;
            t.topk_types.insert(&r.target);
        }
    }
    let order = Bin::STRATIFIED.into_iter().chain([Bin::Unbinned]);
    Ok(order
        .map(|bin| {
            let t = tallies.remove(&bin).unwrap_or_default();
            let n = bins.population(bin) as u64;
            BinCoverage {
                bin,
                tokens: Ratio::new(t.hits, t.events),
                tokens_topk: Ratio::new(t.topk_hits, t.events),
                types: Ratio::new(t.types.len() as u64, n),
                types_topk: Ratio::new(t.topk_types.len() as u64, n),
            }
        })
        .collect())
}

/// Which record flag counts as an exact hit before neighbour matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftChannel {
    #[default]
    Greedy,
    TopK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmatchPoint {
    pub depth: usize,
    pub accuracy: Ratio,
    pub types: Ratio,
}

/// Soft-match sweep. At depth `d` the target's neighbourhood holds the target
/// itself plus its `d - 1` nearest neighbours, so depth 1 is exact match and
/// the hit set only grows with depth.
pub fn softmatch_rescore(
    records: &[PredictionRecord],
    index: &NeighborIndex<'_>,
    depths: &[usize],
    channel: SoftChannel,
) -> Result<Vec<SoftmatchPoint>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records".into()));
    }
    if depths.is_empty() || depths[0] == 0 || depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "soft-match depths must be positive and strictly ascending, got {depths:?}"
        )));
    }
    let targets: BTreeSet<&str> = records.iter().map(|r| r.target.as_str()).collect();
    if !targets.iter().any(|t| index.table().contains(t)) {
        return Err(Error::Config(
            "no record target has an embedding; records and embeddings do not belong together".into(),
        ));
    }
    let deepest = depths[depths.len() - 1] - 1;
    // neighbour rank (1-based) of each word around each target
    let ranks: HashMap<&str, HashMap<String, usize>> = targets
        .iter()
        .map(|&t| {
            let ranked = index
                .knn(t, deepest)
                .into_iter()
                .enumerate()
                .map(|(i, n)| (n.word, i + 1))
                .collect();
            (t, ranked)
        })
        .collect();
    let type_total = targets.len() as u64;
    let n = records.len() as u64;
    Ok(depths
        .iter()
        .map(|&depth| {
            let mut hits = 0u64;
            let mut types = BTreeSet::new();
            for r in records {
                let exact = match channel {
                    SoftChannel::Greedy => r.greedy_hit,
                    SoftChannel::TopK => r.topk_hit,
                };
                let near = ranks[r.target.as_str()]
                    .get(&r.greedy_word)
                    .is_some_and(|&rank| rank < depth);
                if exact || near {
                    hits += 1;
                    types.insert(r.target.as_str());
                }
            }
            SoftmatchPoint {
                depth,
                accuracy: Ratio::new(hits, n),
                types: Ratio::new(types.len() as u64, type_total),
            }
        })
        .collect())
}

/// Mergeable partial sums over records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulator {
    pub events: u64,
    pub greedy_hits: u64,
    pub topk_hits: u64,
    pub logprob_sum: f64,
    pub target_units: u64,
    pub types: BTreeSet<String>,
    pub greedy_types: BTreeSet<String>,
    pub topk_types: BTreeSet<String>,
}

impl Accumulator {
    pub fn push(&mut self, r: &PredictionRecord) {
        self.events += 1;
        self.greedy_hits += r.greedy_hit as u64;
        self.topk_hits += r.topk_hit as u64;
        self.logprob_sum += r.word_logprob;
        self.target_units += r.target_units as u64;
        self.types.insert(r.target.clone());
        if r.greedy_hit {
            self.greedy_types.insert(r.target.clone());
        }
        if r.topk_hit {
            self.topk_types.insert(r.target.clone());
        }
    }

    pub fn merge(mut self, other: Accumulator) -> Accumulator {
        self.events += other.events;
        self.greedy_hits += other.greedy_hits;
        self.topk_hits += other.topk_hits;
        self.logprob_sum += other.logprob_sum;
        self.target_units += other.target_units;
        self.types.extend(other.types);
        self.greedy_types.extend(other.greedy_types);
        self.topk_types.extend(other.topk_types);
        self
    }
}

/// Headline numbers plus the stratified breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub events: u64,
    pub top1: Ratio,
    pub topk: Ratio,
    /// Denominator is the number of distinct attempted target types.
    pub t1: Ratio,
    pub tk: Ratio,
    pub ppx: f64,
    /// exp of mean negative log-probability per target unit.
    pub unit_ppx: f64,
    pub coverage: Vec<BinCoverage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub softmatch: Option<Vec<SoftmatchPoint>>,
}

impl EvalReport {
    /// Builds the report from records in order. `bins` must be the assignment
    /// for the records' attempted target types.
    pub fn from_records(records: &[PredictionRecord], bins: &BinAssignment) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("no prediction records".into()));
        }
        let mut acc = Accumulator::default();
        for r in records {
            r.check()?;
            acc.push(r);
        }
        let (top1, topk) = accuracy(records)?;
        let (t1, tk) = type_diversity(records, acc.types.len())?;
        let ppx = word_perplexity(records)?;
        Ok(EvalReport {
            events: acc.events,
            top1,
            topk,
            t1,
            tk,
            ppx,
            unit_ppx: (-acc.logprob_sum / acc.target_units.max(1) as f64).exp(),
            coverage: stratified_coverage(records, bins)?,
            softmatch: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{assign_bins, FrequencyTable};
    use crate::embedding::{Backend, EmbeddingTable};
    use proptest::prelude::*;

    pub(crate) fn rec(target: &str, bin: Bin, greedy: bool, topk: bool, word: &str, lp: f64) -> PredictionRecord {
        PredictionRecord {
            sentence: 0,
            position: 1,
            target: target.into(),
            target_bin: bin,
            greedy_hit: greedy,
            topk_hit: topk,
            greedy_word: word.into(),
            word_logprob: lp,
            target_units: 1,
            units_consumed: 1,
            exhausted: false,
        }
    }

    #[test]
    fn twenty_percent_majority_type() {
        // constant predictor "the" on a stream where every fifth token is "the"
        let mut records = Vec::new();
        for i in 0..100 {
            let target = if i % 5 == 0 { "the".to_owned() } else { format!("w{i}") };
            let hit = target == "the";
            records.push(rec(&target, Bin::Unbinned, hit, hit, "the", -1.0));
        }
        let (top1, _) = accuracy(&records).unwrap();
        assert_eq!((top1.hits, top1.total), (20, 100));
        assert_eq!(top1.percent, 20.0);
        let (t1, _) = type_diversity(&records, 81).unwrap();
        assert_eq!(t1.hits, 1);
    }

    #[test]
    fn perplexity_cases() {
        let half: Vec<_> = (0..7).map(|_| rec("a", Bin::High, false, false, "b", 0.5f64.ln())).collect();
        assert!((word_perplexity(&half).unwrap() - 2.0).abs() < 1e-12);
        let sure: Vec<_> = (0..3).map(|_| rec("a", Bin::High, true, true, "a", 0.0)).collect();
        assert_eq!(word_perplexity(&sure).unwrap(), 1.0);
        let bad = vec![rec("a", Bin::High, false, false, "b", f64::NEG_INFINITY)];
        match word_perplexity(&bad) {
            Err(Error::Numeric(m)) => assert!(m.contains("`a`")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(word_perplexity(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn cross_entropy_uniform_and_certain() {
        let v = 50;
        let uniform = UnitDistribution::from_logprobs(&vec![-(v as f64).ln(); v], v);
        let ev: Vec<_> = (0..10).map(|i| (UnitId(i), uniform.clone())).collect();
        let ce = unit_cross_entropy(&ev).unwrap();
        assert!((ce.nats - (v as f64).ln()).abs() < 1e-12);
        assert!((ce.perplexity - v as f64).abs() < 1e-9);
        let mut lp = vec![f64::NEG_INFINITY; 3];
        lp[1] = 0.0;
        let sure = UnitDistribution::from_logprobs(&lp, 3);
        assert_eq!(unit_cross_entropy(&[(UnitId(1), sure.clone())]).unwrap().perplexity, 1.0);
        assert!(matches!(unit_cross_entropy(&[(UnitId(0), sure)]), Err(Error::Numeric(_))));
    }

    fn toy_bins() -> BinAssignment {
        let mut train = FrequencyTable::default();
        train.add("hi", 1000);
        train.add("mid", 100);
        train.add("lo", 10);
        train.add("rare", 9);
        assign_bins(&train, ["hi", "mid", "lo", "rare", "new"])
    }

    #[test]
    fn coverage_hand_count() {
        let bins = toy_bins();
        let records = vec![
            rec("hi", Bin::High, true, true, "hi", -1.0),
            rec("hi", Bin::High, false, true, "x", -1.0),
            rec("mid", Bin::Mid, false, false, "x", -1.0),
            rec("lo", Bin::Low, true, true, "lo", -1.0),
            rec("rare", Bin::Unbinned, true, true, "rare", -1.0),
            rec("new", Bin::Unbinned, false, false, "x", -1.0),
        ];
        let cov = stratified_coverage(&records, &bins).unwrap();
        let bins_seen: Vec<_> = cov.iter().map(|c| c.bin).collect();
        assert_eq!(bins_seen, [Bin::High, Bin::Mid, Bin::Low, Bin::Unbinned]);
        assert_eq!((cov[0].tokens.hits, cov[0].tokens.total), (1, 2));
        assert_eq!((cov[0].tokens_topk.hits, cov[0].types.hits, cov[0].types.total), (2, 1, 1));
        assert_eq!((cov[1].tokens.hits, cov[1].types.percent), (0, 0.0));
        assert_eq!(cov[2].types.percent, 100.0);
        assert_eq!((cov[3].tokens.hits, cov[3].tokens.total, cov[3].types.total), (1, 2, 2));
        let total: u64 = cov.iter().map(|c| c.tokens.hits).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn coverage_rejects_mismatched_bins() {
        let bins = toy_bins();
        let r = vec![rec("hi", Bin::Low, true, true, "hi", -1.0)];
        assert!(matches!(stratified_coverage(&r, &bins), Err(Error::Consistency(_))));
        let r = vec![rec("absent", Bin::Unbinned, true, true, "absent", -1.0)];
        assert!(matches!(stratified_coverage(&r, &bins), Err(Error::Consistency(_))));
    }

    fn line_table() -> EmbeddingTable {
        // angles 0,1,2,... degrees: neighbour order equals index distance
        let mut t = EmbeddingTable::new(2);
        for i in 0..40 {
            let a = (i as f32).to_radians();
            t.insert(format!("n{i:02}"), &[a.cos(), a.sin()]).unwrap();
        }
        t
    }

    #[test]
    fn softmatch_flips_at_first_admitting_depth() {
        let t = line_table();
        let idx = NeighborIndex::build(&t, Backend::Exact).unwrap();
        // predicted n05 for target n00: it is the 5th neighbour, inside a depth-6 neighbourhood
        let records = vec![rec("n00", Bin::High, false, false, "n05", -1.0)];
        let sweep = softmatch_rescore(&records, &idx, &[1, 3, 5, 6, 10], SoftChannel::Greedy).unwrap();
        let hits: Vec<_> = sweep.iter().map(|p| p.accuracy.hits).collect();
        assert_eq!(hits, [0, 0, 0, 1, 1]);
    }

    #[test]
    fn softmatch_depth_one_is_exact() {
        let t = line_table();
        let idx = NeighborIndex::build(&t, Backend::Exact).unwrap();
        let records = vec![
            rec("n00", Bin::High, true, true, "n00", -1.0),
            rec("n10", Bin::High, false, true, "n11", -1.0),
        ];
        let g = softmatch_rescore(&records, &idx, &[1, 3], SoftChannel::Greedy).unwrap();
        assert_eq!(g[0].accuracy, accuracy(&records).unwrap().0);
        assert_eq!(g[1].accuracy.hits, 2);
        let k = softmatch_rescore(&records, &idx, &[1], SoftChannel::TopK).unwrap();
        assert_eq!(k[0].accuracy.hits, 2);
    }

    #[test]
    fn softmatch_config_errors() {
        let t = line_table();
        let idx = NeighborIndex::build(&t, Backend::Exact).unwrap();
        let records = vec![rec("zzz", Bin::High, false, false, "n00", -1.0)];
        assert!(matches!(softmatch_rescore(&records, &idx, &[1], SoftChannel::Greedy), Err(Error::Config(_))));
        let records = vec![rec("n00", Bin::High, false, false, "n01", -1.0)];
        assert!(matches!(softmatch_rescore(&records, &idx, &[3, 1], SoftChannel::Greedy), Err(Error::Config(_))));
    }

    fn arb_records() -> impl Strategy<Value = Vec<PredictionRecord>> {
        prop::collection::vec((0usize..12, any::<bool>(), any::<bool>(), 0usize..12, -20.0f64..0.0), 1..80).prop_map(
            |rows| {
                rows.into_iter()
                    .map(|(t, g, k, w, lp)| {
                        let target = format!("w{t}");
                        let bin = Bin::from_frequency(10u64.pow((t % 4) as u32));
                        rec(&target, bin, g, g || k, &format!("w{w}"), lp)
                    })
                    .collect()
            },
        )
    }

    fn bins_for(records: &[PredictionRecord]) -> BinAssignment {
        let mut train = FrequencyTable::default();
        for t in 0..12 {
            train.add(&format!("w{t}"), 10u64.pow((t % 4) as u32));
        }
        assign_bins(&train, records.iter().map(|r| r.target.as_str()))
    }

    proptest! {
        #[test]
        fn report_matches_recount(records in arb_records()) {
            let bins = bins_for(&records);
            let rep = EvalReport::from_records(&records, &bins).unwrap();
            let mut g = 0; let mut k = 0;
            let mut types = Vec::<&str>::new();
            let mut gt = Vec::<&str>::new();
            for r in &records {
                if r.greedy_hit { g += 1; if !gt.contains(&r.target.as_str()) { gt.push(&r.target); } }
                if r.topk_hit { k += 1; }
                if !types.contains(&r.target.as_str()) { types.push(&r.target); }
            }
            prop_assert_eq!(rep.top1.hits, g);
            prop_assert_eq!(rep.topk.hits, k);
            prop_assert_eq!(rep.t1.hits as usize, gt.len());
            prop_assert_eq!(rep.t1.total as usize, types.len());
            prop_assert!(rep.top1.percent <= rep.topk.percent && rep.t1.percent <= rep.tk.percent);
            let bin_hits: u64 = rep.coverage.iter().map(|c| c.tokens.hits).sum();
            prop_assert_eq!(bin_hits, rep.top1.hits);
            for c in &rep.coverage {
                prop_assert!((0.0..=100.0).contains(&c.tokens.percent));
                prop_assert!((0.0..=100.0).contains(&c.types.percent));
            }
        }

        #[test]
        fn ppx_is_permutation_invariant(records in arb_records(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = word_perplexity(&records).unwrap();
            let b = word_perplexity(&shuffled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn accumulators_merge(records in arb_records(), cut in 0usize..80) {
            let cut = cut.min(records.len());
            let mut whole = Accumulator::default();
            records.iter().for_each(|r| whole.push(r));
            let (mut a, mut b) = (Accumulator::default(), Accumulator::default());
            records[..cut].iter().for_each(|r| a.push(r));
            records[cut..].iter().for_each(|r| b.push(r));
            let ab = a.clone().merge(b.clone());
            let ba = b.merge(a);
            for m in [ab, ba] {
                prop_assert_eq!(m.events, whole.events);
                prop_assert_eq!(m.greedy_hits, whole.greedy_hits);
                prop_assert_eq!(&m.greedy_types, &whole.greedy_types);
                prop_assert_eq!(&m.topk_types, &whole.topk_types);
                prop_assert!((m.logprob_sum - whole.logprob_sum).abs() < 1e-9);
            }
        }

        #[test]
        fn softmatch_monotone_and_rescan(records in arb_records()) {
            let mut t = EmbeddingTable::new(3);
            for i in 0..12 {
                let x = i as f32;
                t.insert(format!("w{i}"), &[x.cos(), x.sin(), 0.1 * x]).unwrap();
            }
            let idx = NeighborIndex::build(&t, Backend::Exact).unwrap();
            let depths = [1, 3, 10, 25];
            let sweep = softmatch_rescore(&records, &idx, &depths, SoftChannel::Greedy).unwrap();
            for w in sweep.windows(2) {
                prop_assert!(w[0].accuracy.hits <= w[1].accuracy.hits);
                prop_assert!(w[0].types.hits <= w[1].types.hits);
            }
            for p in &sweep {
                // rescan: neighbourhood of size d = target plus d-1 nearest
                let hits = records.iter().filter(|r| {
                    r.greedy_hit || idx.knn(&r.target, p.depth - 1).iter().any(|n| n.word == r.greedy_word)
                }).count() as u64;
                prop_assert_eq!(p.accuracy.hits, hits);
            }
        }
    }
}
