use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use wordeval::corpus::{assign_bins, count_frequencies, ingest, Corpus};
use wordeval::decode::{DecodeConfig, GreedyMode, TopKMode, DEFAULT_K, DEFAULT_MAX_UNITS};
use wordeval::embedding::{train_sgns, Backend, EmbeddingTable, ForestParams, NeighborIndex, SgnsParams};
use wordeval::error::{Error, Result};
use wordeval::eval::{evaluate, EvalOptions, DEFAULT_MAX_HISTORY};
use wordeval::metrics::{accuracy, softmatch_rescore, Ratio, SoftChannel, SoftmatchPoint, DEFAULT_DEPTHS};
use wordeval::paraphrase::{check_conditions, chi_square_independence, load_triples, run_probes, TokenVectors};
use wordeval::predictor::{train_ngram, Predictor, RemoteEndpoint, RemotePredictor, DEFAULT_DISCOUNT};
use wordeval::report::{
    read_records, render_table, write_contingency_tsv, write_coverage_tsv, write_records, write_softmatch_tsv,
    ParaphraseFile, ReportFile,
};
use wordeval::tokenizer::{load_vocab, Scheme, SubwordVocab};

use crate::config::{existing, optional_existing, required, Settings};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = s.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("`out_dir`: {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Writes through a buffer and reports failures against the file path.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn lowercase(s: &Settings) -> bool {
    s.lowercase.unwrap_or(false)
}

fn load_corpus(s: &Settings, key: &str) -> Result<Corpus> {
    let path = match key {
        "train" => existing(&s.train, key)?,
        _ => existing(&s.test, key)?,
    };
    ingest(path, lowercase(s))
}

fn vocab(s: &Settings) -> Result<SubwordVocab> {
    let scheme: Scheme = required(&s.scheme, "scheme")?.parse()?;
    let units = existing(&s.units, "units")?;
    let merges = optional_existing(&s.merges, "merges")?;
    let mut v = load_vocab(scheme, units, merges)?;
    if let Some(u) = &s.unk_unit {
        v = v.with_unknown(u)?;
    }
    if let Some(u) = &s.eot_unit {
        v = v.with_end_of_text(u)?;
    }
    Ok(v)
}

fn endpoint(s: &Settings) -> Result<Option<RemoteEndpoint>> {
    match (&s.remote, &s.spawn) {
        (Some(_), Some(_)) => Err(Error::Config("`remote` and `spawn` are mutually exclusive".into())),
        (Some(a), None) => Ok(Some(RemoteEndpoint::Tcp(a.clone()))),
        (None, Some(c)) => Ok(Some(RemoteEndpoint::Spawn(c.clone()))),
        (None, None) => Ok(None),
    }
}

fn connect(s: &Settings, endpoint: &RemoteEndpoint, vocab: &SubwordVocab) -> Result<RemotePredictor> {
    let secs = s.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
    if !(secs > 0.0 && secs.is_finite()) {
        return Err(Error::Config(format!("`timeout_secs` must be positive, got {secs}")));
    }
    RemotePredictor::connect(endpoint, vocab, Duration::from_secs_f64(secs))
}

fn decode_config(s: &Settings) -> Result<DecodeConfig> {
    let greedy_mode = match s.greedy_mode.as_deref() {
        None | Some("full") => GreedyMode::FullWord,
        Some("early") => GreedyMode::EarlyExit,
        Some(o) => return Err(Error::Config(format!("`greedy_mode` must be full or early, got `{o}`"))),
    };
    let topk_mode = match s.topk_mode.as_deref() {
        None | Some("unit-path") => TopKMode::UnitPath,
        Some("whole-word") => TopKMode::WholeWordRank,
        Some(o) => return Err(Error::Config(format!("`topk_mode` must be unit-path or whole-word, got `{o}`"))),
    };
    let cfg = DecodeConfig {
        k: s.k.unwrap_or(DEFAULT_K),
        max_units: s.max_units.unwrap_or(DEFAULT_MAX_UNITS),
        greedy_mode,
        topk_mode,
    };
    if cfg.k == 0 || cfg.max_units == 0 {
        return Err(Error::Config("`k` and `max_units` must be positive".into()));
    }
    Ok(cfg)
}

pub fn stats(s: &Settings) -> Result<()> {
    let train = load_corpus(s, "train")?;
    let test = load_corpus(s, "test")?;
    let dir = out_dir(s)?;
    let train_freq = count_frequencies(&train)?;
    let test_freq = count_frequencies(&test)?;
    let bins = assign_bins(&train_freq, test_freq.sorted().into_iter().map(|(w, _)| w));
    write_file(&dir.join("frequencies.tsv"), |w| train_freq.write_tsv(w))?;
    write_file(&dir.join("bins.tsv"), |w| bins.write_tsv(w))?;
    write_file(&dir.join("zipf.tsv"), |w| {
        writeln!(w, "rank\tword\tcount")?;
        for (rank, word, count) in train_freq.rank_frequency() {
            writeln!(w, "{rank}\t{word}\t{count}")?;
        }
        Ok(())
    })?;
    let [high, mid, low] = bins.populations();
    println!("train: {} tokens, {} types", train_freq.total(), train_freq.num_types());
    println!("test:  {} tokens, {} types", test_freq.total(), test_freq.num_types());
    println!(
        "test types by train frequency: high {high}  mid {mid}  low {low}  unbinned {}",
        bins.population(wordeval::Bin::Unbinned)
    );
    Ok(())
}

pub fn sgns_params(s: &Settings) -> SgnsParams {
    let d = SgnsParams::default();
    SgnsParams {
        dim: s.dim.unwrap_or(d.dim),
        window: s.window.unwrap_or(d.window),
        negatives: s.negatives.unwrap_or(d.negatives),
        epochs: s.epochs.unwrap_or(d.epochs),
        min_count: s.min_count.unwrap_or(d.min_count),
        learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
        seed: s.seed.unwrap_or(d.seed),
    }
}

pub fn train_embeddings(s: &Settings) -> Result<()> {
    let corpus = load_corpus(s, "train")?;
    let dir = out_dir(s)?;
    let table = train_sgns(&corpus, &sgns_params(s))?;
    let path = dir.join("embeddings.txt");
    table.save(&path)?;
    println!("{} vectors of dimension {} written to {}", table.len(), table.dim(), path.display());
    Ok(())
}

fn build_predictor(s: &Settings, vocab: &SubwordVocab, train: &Corpus) -> Result<(Box<dyn Predictor>, String)> {
    let remote = endpoint(s)?;
    let kind = s
        .predictor
        .clone()
        .unwrap_or_else(|| if remote.is_some() { "remote" } else { "ngram" }.to_owned());
    match (kind.as_str(), remote) {
        ("ngram", None) => {
            let order = s.order.unwrap_or(DEFAULT_ORDER);
            let discount = s.discount.unwrap_or(DEFAULT_DISCOUNT);
            let model = train_ngram(&vocab.encode_corpus(train)?, vocab.len(), order, discount)?;
            Ok((Box::new(model), format!("ngram-{order}")))
        }
        ("ngram", Some(_)) => Err(Error::Config(
            "`predictor = ngram` conflicts with `remote`/`spawn`".into(),
        )),
        ("remote", Some(ep)) => Ok((Box::new(connect(s, &ep, vocab)?), "remote".to_owned())),
        ("remote", None) => Err(Error::Config("`predictor = remote` needs `remote` or `spawn`".into())),
        (other, _) => Err(Error::Config(format!("`predictor` must be ngram or remote, got `{other}`"))),
    }
}

pub fn evaluate_cmd(s: &Settings) -> Result<()> {
    let train = load_corpus(s, "train")?;
    let test = load_corpus(s, "test")?;
    let vocab = vocab(s)?;
    let decode = decode_config(s)?;
    let dir = out_dir(s)?;
    let (pred, default_name) = build_predictor(s, &vocab, &train)?;
    let opts = EvalOptions {
        decode,
        rolling_context: s.rolling_context.unwrap_or(false),
        max_history: s.max_history.unwrap_or(DEFAULT_MAX_HISTORY),
    };
    let train_freq = count_frequencies(&train)?;
    let run = evaluate(pred.as_ref(), &vocab, &train_freq, &test, &opts)?;
    if run.records.is_empty() && !run.aborted.is_empty() {
        return Err(Error::Transport(format!("all {} events aborted: {}", run.aborted.len(), run.aborted[0].reason)));
    }
    let file = ReportFile {
        model: s.model_name.clone().unwrap_or(default_name),
        k: decode.k,
        report: run.report()?,
        aborted: run.aborted.clone(),
        unsegmentable: run.unsegmentable.clone(),
    };
    let table = render_table(&file);
    write_file(&dir.join("report.txt"), |w| w.write_all(table.as_bytes()))?;
    write_json(&dir.join("report.json"), &file)?;
    write_file(&dir.join("coverage.tsv"), |w| write_coverage_tsv(&file.report, w))?;
    write_file(&dir.join("records.jsonl"), |w| write_records(&run.records, w))?;
    print!("{table}");
    if !run.aborted.is_empty() {
        return Err(Error::Transport(format!(
            "{} events aborted and left out of every denominator (see report.json)",
            run.aborted.len()
        )));
    }
    Ok(())
}

fn backend(s: &Settings) -> Result<Backend> {
    match s.ann.as_deref() {
        None | Some("exact") => Ok(Backend::Exact),
        Some("forest") => {
            let d = ForestParams::default();
            Ok(Backend::Forest(ForestParams {
                trees: s.trees.unwrap_or(d.trees),
                leaf_size: s.leaf_size.unwrap_or(d.leaf_size),
                search_factor: s.search_factor.unwrap_or(d.search_factor),
                seed: s.seed.unwrap_or(d.seed),
            }))
        }
        Some(o) => Err(Error::Config(format!("`ann` must be exact or forest, got `{o}`"))),
    }
}

#[derive(Serialize)]
struct SoftmatchFile {
    channel: SoftChannel,
    top1: Ratio,
    points: Vec<SoftmatchPoint>,
}

pub fn softmatch(s: &Settings) -> Result<()> {
    let dir = out_dir(s)?;
    let default_records = dir.join("records.jsonl");
    let records_path = match &s.records {
        Some(_) => existing(&s.records, "records")?.to_path_buf(),
        None if default_records.exists() => default_records,
        None => return Err(Error::Config(format!("`records` is not set and {} does not exist", default_records.display()))),
    };
    let embeddings = existing(&s.embeddings, "embeddings")?;
    let channel = match s.soft_channel.as_deref() {
        None | Some("greedy") => SoftChannel::Greedy,
        Some("topk") => SoftChannel::TopK,
        Some(o) => return Err(Error::Config(format!("`soft_channel` must be greedy or topk, got `{o}`"))),
    };
    let depths = s.depths.clone().unwrap_or_else(|| DEFAULT_DEPTHS.to_vec());
    let file = File::open(&records_path).map_err(|e| Error::Io {
        path: records_path.clone(),
        source: e,
    })?;
    let records = read_records(BufReader::new(file), &records_path)?;
    let table = EmbeddingTable::load(embeddings)?;
    let index = NeighborIndex::build(&table, backend(s)?)?;
    let points = softmatch_rescore(&records, &index, &depths, channel)?;
    write_file(&dir.join("softmatch.tsv"), |w| write_softmatch_tsv(&points, w))?;
    let out = SoftmatchFile {
        channel,
        top1: accuracy(&records)?.0,
        points,
    };
    write_json(&dir.join("softmatch.json"), &out)?;
    println!("{:>6} {:>10} {:>10}", "depth", "accuracy%", "types%");
    for p in &out.points {
        println!("{:>6} {:>10.2} {:>10.2}", p.depth, p.accuracy.percent, p.types.percent);
    }
    Ok(())
}

pub fn paraphrase(s: &Settings) -> Result<()> {
    let triples = load_triples(existing(&s.triples, "triples")?, lowercase(s))?;
    let dir = out_dir(s)?;
    if s.check_frequency.unwrap_or(s.train.is_some()) {
        let train = load_corpus(s, "train")?;
        check_conditions(&triples, &count_frequencies(&train)?)?;
    }
    let static_table;
    let remote;
    let scorer: &dyn TokenVectors = match s.scorer.as_deref() {
        None | Some("static") => {
            static_table = EmbeddingTable::load(existing(&s.embeddings, "embeddings")?)?;
            &static_table
        }
        Some("remote") => {
            let ep = endpoint(s)?
                .ok_or_else(|| Error::Config("`scorer = remote` needs `remote` or `spawn`".into()))?;
            remote = connect(s, &ep, &vocab(s)?)?;
            &remote
        }
        Some(o) => return Err(Error::Config(format!("`scorer` must be static or remote, got `{o}`"))),
    };
    let summary = run_probes(&triples, scorer)?;
    let chi = chi_square_independence(summary.table(), s.yates.unwrap_or(false));
    let out = ParaphraseFile {
        summary,
        chi_square: chi.as_ref().ok().copied(),
        chi_square_error: chi.as_ref().err().map(|e| e.to_string()),
    };
    write_file(&dir.join("paraphrase.tsv"), |w| write_contingency_tsv(&out.summary, w))?;
    write_json(&dir.join("paraphrase.json"), &out)?;
    println!("{:<8} {:>6} {:>6} {:>6}", "", "hits", "misses", "total");
    for (name, c) in [("rare", out.summary.rare), ("common", out.summary.common)] {
        println!("{name:<8} {:>6} {:>6} {:>6}", c.hits, c.misses, c.total);
    }
    for skip in &out.summary.skipped {
        println!("skipped probe at line {}: {}", skip.line, skip.reason);
    }
    match chi {
        Ok(c) => {
            println!("chi-square {:.4} (df {}), p = {:.3e}", c.statistic, c.dof, c.p_value);
            Ok(())
        }
        Err(e) => Err(e),
    }
}
