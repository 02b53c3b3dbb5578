use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::AtomicBool;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::tokenizer::{SubwordVocab, UnitId};

use super::protocol::Message;
use super::{clamp_k, Predictor, UnitDistribution};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RemoteEndpoint {
    /// Shell command whose stdin/stdout carry the protocol.
    Spawn(String),
    /// `host:port` of a listening adapter.
    Tcp(String),
}

struct Session {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    broken: Option<String>,
    child: Option<Child>,
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Session {
    fn recv(&mut self, timeout: Duration) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(self.fail(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                Err(self.fail(format!("no response within {} ms", timeout.as_millis())))
            }
            Err(RecvTimeoutError::Disconnected) => Err(self.fail("connection closed".into())),
        }
    }

    /// Marks the session unusable; responses may now be out of step.
    fn fail(&mut self, why: String) -> Error {
        self.broken = Some(why.clone());
        Error::Transport(why)
    }
}

/// Client for an adapter speaking protocol v1. One request is in flight at a
/// time; open several predictors for parallel sessions.
pub struct RemotePredictor {
    session: Mutex<Session>,
    vocab_size: usize,
    timeout: Duration,
    warned: AtomicBool,
}

fn spawn_reader<R: Read + Send + 'static>(input: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(input);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

impl RemotePredictor {
    /// Connects (or spawns) and checks the adapter's vocabulary against
    /// `vocab`: scheme, size and fingerprint must all agree.
    pub fn connect(endpoint: &RemoteEndpoint, vocab: &SubwordVocab, timeout: Duration) -> Result<Self> {
        let session = match endpoint {
            RemoteEndpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::Transport(format!("connect {addr}: {e}")))?;
                stream.set_nodelay(true).ok();
                let read_half = stream
                    .try_clone()
                    .map_err(|e| Error::Transport(format!("socket: {e}")))?;
                Session {
                    writer: Box::new(stream),
                    lines: spawn_reader(read_half),
                    next_id: 1,
                    broken: None,
                    child: None,
                }
            }
            RemoteEndpoint::Spawn(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Transport(format!("spawn `{cmd}`: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Session {
                    writer: Box::new(stdin),
                    lines: spawn_reader(stdout),
                    next_id: 1,
                    broken: None,
                    child: Some(child),
                }
            }
        };
        Self::handshake(session, vocab, timeout)
    }

    fn handshake(mut session: Session, vocab: &SubwordVocab, timeout: Duration) -> Result<Self> {
        let line = session.recv(timeout)?;
        match Message::parse(&line)? {
            Message::Hello {
                scheme,
                vocab_sha256,
                vocab_size,
            } => {
                if scheme != vocab.scheme() {
                    return Err(Error::Config(format!(
                        "adapter serves a {scheme} vocabulary, expected {}",
                        vocab.scheme()
                    )));
                }
                if vocab_size != vocab.len() {
                    return Err(Error::Config(format!(
                        "adapter vocabulary has {vocab_size} units, local has {}",
                        vocab.len()
                    )));
                }
                if vocab_sha256 != vocab.fingerprint() {
                    return Err(Error::Config(format!(
                        "vocabulary hash mismatch: adapter {vocab_sha256}, local {}",
                        vocab.fingerprint()
                    )));
                }
                Ok(RemotePredictor {
                    session: Mutex::new(session),
                    vocab_size,
                    timeout,
                    warned: AtomicBool::new(false),
                })
            }
            _ => Err(Error::Protocol {
                message: "expected hello".into(),
                line: line.trim_end().to_owned(),
            }),
        }
    }

    fn request(&self, build: impl FnOnce(u64) -> Message) -> Result<Message> {
        let mut s = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(why) = &s.broken {
            return Err(Error::Transport(format!("session unusable: {why}")));
        }
        let id = s.next_id;
        s.next_id += 1;
        let line = build(id).to_line();
        if let Err(e) = writeln!(s.writer, "{line}").and_then(|_| s.writer.flush()) {
            return Err(s.fail(format!("write failed: {e}")));
        }
        let reply = s.recv(self.timeout)?;
        let msg = match Message::parse(&reply) {
            Ok(m) => m,
            Err(e) => {
                s.broken = Some("malformed response".into());
                return Err(e);
            }
        };
        let echoed = match &msg {
            Message::Dist { id, .. } | Message::Vectors { id, .. } => Some(*id),
            Message::Error { id, .. } => *id,
            _ => None,
        };
        if let Message::Error { message, .. } = &msg {
            return Err(Error::Transport(format!("adapter error: {message}")));
        }
        if echoed != Some(id) {
            s.broken = Some("response id mismatch".into());
            return Err(Error::Protocol {
                message: format!("expected response to request {id}"),
                line: reply.trim_end().to_owned(),
            });
        }
        Ok(msg)
    }

    /// Per-token vectors through the embedding extension. `None` entries are
    /// tokens the adapter could not embed.
    pub fn embed(&self, tokens: &[String]) -> Result<Vec<Option<Vec<f32>>>> {
        let msg = self.request(|id| Message::Embed {
            id,
            tokens: tokens.to_vec(),
        })?;
        match msg {
            Message::Vectors { vectors, .. } if vectors.len() == tokens.len() => Ok(vectors),
            other => Err(Error::Protocol {
                message: format!("expected {} vectors", tokens.len()),
                line: other.to_line(),
            }),
        }
    }
}

impl Predictor for RemotePredictor {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution> {
        let k = clamp_k(k, self.vocab_size, &self.warned)?;
        let msg = self.request(|id| Message::Predict {
            id,
            context: context.to_vec(),
            k,
        })?;
        let Message::Dist { mut top, warning, .. } = msg else {
            return Err(Error::Protocol {
                message: "expected dist".into(),
                line: msg.to_line(),
            });
        };
        if let Some(w) = warning {
            log::warn!("adapter: {w}");
        }
        if top.len() < k {
            return Err(Error::Protocol {
                message: format!("asked for {k} units, got {}", top.len()),
                line: Message::Dist { id: 0, top, warning: None }.to_line(),
            });
        }
        top.truncate(k);
        if let Some(&(u, _)) = top.iter().find(|(u, _)| u.index() >= self.vocab_size) {
            return Err(Error::Domain(format!("adapter returned unit {u} outside vocabulary")));
        }
        let total_mass_accounted = top.iter().map(|&(_, lp)| lp.exp()).sum::<f64>().min(1.0);
        let dist = UnitDistribution {
            top,
            total_mass_accounted,
        };
        dist.validate()?;
        Ok(dist)
    }
}
