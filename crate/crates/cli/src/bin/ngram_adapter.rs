//! Serves the in-repo n-gram model, and optionally word vectors, over the
//! line-delimited JSON protocol. Talks on stdio unless `--listen` is given.

use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use wordeval::corpus::ingest;
use wordeval::embedding::EmbeddingTable;
use wordeval::error::{Error, Result};
use wordeval::predictor::protocol::serve;
use wordeval::predictor::{train_ngram, NGramModel, DEFAULT_DISCOUNT};
use wordeval::tokenizer::{load_vocab, Scheme, SubwordVocab};

#[derive(Parser)]
#[command(name = "ngram-adapter", version)]
struct Args {
    #[arg(long)]
    scheme: Scheme,
    #[arg(long)]
    units: PathBuf,
    #[arg(long)]
    merges: Option<PathBuf>,
    #[arg(long)]
    unk_unit: Option<String>,
    #[arg(long)]
    eot_unit: Option<String>,
    /// Corpus the model is trained on.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    lowercase: bool,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
    discount: f64,
    /// Word vectors to answer embedding requests with.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Accept TCP connections on this address instead of using stdio.
    #[arg(long)]
    listen: Option<String>,
}

struct Served {
    model: NGramModel,
    vocab: SubwordVocab,
    embeddings: Option<EmbeddingTable>,
}

fn load(args: &Args) -> Result<Served> {
    let mut vocab = load_vocab(args.scheme, &args.units, args.merges.as_deref())?;
    if let Some(u) = &args.unk_unit {
        vocab = vocab.with_unknown(u)?;
    }
    if let Some(u) = &args.eot_unit {
        vocab = vocab.with_end_of_text(u)?;
    }
    let corpus = ingest(&args.train, args.lowercase)?;
    let model = train_ngram(&vocab.encode_corpus(&corpus)?, vocab.len(), args.order, args.discount)?;
    let embeddings = args.embeddings.as_ref().map(EmbeddingTable::load).transpose()?;
    Ok(Served {
        model,
        vocab,
        embeddings,
    })
}

fn run(args: Args) -> Result<()> {
    let served = Arc::new(load(&args)?);
    let Some(addr) = args.listen else {
        let stdin = io::stdin().lock();
        return serve(&served.model, &served.vocab, served.embeddings.as_ref(), stdin, io::stdout().lock());
    };
    let listener = TcpListener::bind(&addr).map_err(|e| Error::Config(format!("cannot listen on {addr}: {e}")))?;
    eprintln!("listening on {}", listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let served = Arc::clone(&served);
        std::thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(r) => BufReader::new(r),
                Err(e) => return log::warn!("connection setup failed: {e}"),
            };
            if let Err(e) = serve(&served.model, &served.vocab, served.embeddings.as_ref(), reader, stream) {
                log::warn!("connection closed: {e}");
            }
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
