//! Line-delimited JSON protocol (v1) between the evaluator and a model adapter.
//!
//! ```text
//! adapter → {"type":"hello","scheme":"bpe","vocab_sha256":"…","vocab_size":N}
//! client  → {"type":"predict","id":1,"context":[5,17],"k":10}
//! adapter → {"type":"dist","id":1,"top":[[17,-0.5],[3,-1.9],…]}
//! client  → {"type":"embed","id":2,"tokens":["the","cat"]}
//! adapter → {"type":"vectors","id":2,"vectors":[[0.1,…],null]}
//! adapter → {"type":"error","id":2,"message":"…"}
//! ```
//!
//! The adapter speaks first. Each request carries a fresh id and the response
//! must echo it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::tokenizer::{Scheme, SubwordVocab, UnitId};

use super::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        scheme: Scheme,
        vocab_sha256: String,
        vocab_size: usize,
    },
    Predict {
        id: u64,
        context: Vec<UnitId>,
        k: usize,
    },
    Dist {
        id: u64,
        top: Vec<(UnitId, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    Embed {
        id: u64,
        tokens: Vec<String>,
    },
    Vectors {
        id: u64,
        vectors: Vec<Option<Vec<f32>>>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

impl Message {
    pub fn hello(vocab: &SubwordVocab) -> Self {
        Message::Hello {
            scheme: vocab.scheme(),
            vocab_sha256: vocab.fingerprint(),
            vocab_size: vocab.len(),
        }
    }

    pub fn to_line(&self) -> String {
        // the enum holds no maps with non-string keys, so this cannot fail
        serde_json::to_string(self).expect("protocol message serializes")
    }

    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol {
            message: e.to_string(),
            line: line.trim_end().to_owned(),
        })
    }
}

/// Answers protocol requests from `input` until it closes. Used by adapters
/// that wrap an in-process predictor, and by loopback tests.
pub fn serve<P, R, W>(
    predictor: &P,
    vocab: &SubwordVocab,
    embeddings: Option<&EmbeddingTable>,
    input: R,
    mut output: W,
) -> Result<()>
where
    P: Predictor + ?Sized,
    R: BufRead,
    W: Write,
{
    let io_err = |e| Error::Transport(format!("adapter output: {e}"));
    writeln!(output, "{}", Message::hello(vocab).to_line()).map_err(io_err)?;
    output.flush().map_err(io_err)?;
    for line in input.lines() {
        let line = line.map_err(|e| Error::Transport(format!("adapter input: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match Message::parse(&line) {
            Ok(Message::Predict { id, context, k }) => {
                let warning = (k > predictor.vocab_size())
                    .then(|| format!("k={k} clamped to {}", predictor.vocab_size()));
                match predictor.predict(&context, k) {
                    Ok(d) => Message::Dist {
                        id,
                        top: d.top,
                        warning,
                    },
                    Err(e) => Message::Error {
                        id: Some(id),
                        message: e.to_string(),
                    },
                }
            }
            Ok(Message::Embed { id, tokens }) => match embeddings {
                Some(table) => Message::Vectors {
                    id,
                    vectors: tokens.iter().map(|t| table.get(t).map(<[f32]>::to_vec)).collect(),
                },
                None => Message::Error {
                    id: Some(id),
                    message: "embedding extension not available".into(),
                },
            },
            Ok(other) => Message::Error {
                id: None,
                message: format!("unexpected message {}", other.to_line()),
            },
            Err(e) => Message::Error {
                id: None,
                message: e.to_string(),
            },
        };
        writeln!(output, "{}", reply.to_line()).map_err(io_err)?;
        output.flush().map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let m = Message::Predict {
            id: 3,
            context: vec![UnitId(1), UnitId(2)],
            k: 10,
        };
        assert_eq!(m.to_line(), r#"{"type":"predict","id":3,"context":[1,2],"k":10}"#);
        let d = Message::parse(r#"{"type":"dist","id":3,"top":[[4,-0.25],[1,-2.5]]}"#).unwrap();
        assert_eq!(
            d,
            Message::Dist {
                id: 3,
                top: vec![(UnitId(4), -0.25), (UnitId(1), -2.5)],
                warning: None
            }
        );
        let h = Message::parse(r#"{"type":"hello","scheme":"wordpiece","vocab_sha256":"ab","vocab_size":2}"#)
            .unwrap();
        assert!(matches!(h, Message::Hello { scheme: Scheme::WordPiece, vocab_size: 2, .. }));
    }

    #[test]
    fn malformed_line_is_quoted() {
        match Message::parse("{\"type\":\"dist\",\"id\":") {
            Err(Error::Protocol { line, .. }) => assert_eq!(line, "{\"type\":\"dist\",\"id\":"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn logprobs_survive_the_wire() {
        let lp = (1.0f64 / 3.0).ln();
        let m = Message::Dist {
            id: 1,
            top: vec![(UnitId(0), lp)],
            warning: None,
        };
        match Message::parse(&m.to_line()).unwrap() {
            Message::Dist { top, .. } => assert_eq!(top[0].1.to_bits(), lp.to_bits()),
            _ => unreachable!(),
        }
    }
}
