use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::protocol::{decode_logprobs, Request, Response};
use super::{logsumexp, ModelError, SequenceModel};
use crate::tokenizer::TokenId;

/// Tolerance on |logsumexp| of a returned distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Entries kept per cache before it is cleared.
const CACHE_CAPACITY: usize = 1 << 16;

/// Where an external provider lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "snake_case")]
pub enum Endpoint {
    Tcp { address: String },
    /// A child process speaking the protocol on stdin/stdout.
    Command { program: String, args: Vec<String> },
}

impl FromStr for Endpoint {
    type Err = ModelError;

    /// `host:port`, or `cmd:program arg…` for a child process.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("cmd:") {
            let mut parts = rest.split_whitespace().map(str::to_string);
            let program = parts
                .next()
                .ok_or_else(|| ModelError::Format("empty command endpoint".into()))?;
            return Ok(Endpoint::Command {
                program,
                args: parts.collect(),
            });
        }
        match s.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
                Ok(Endpoint::Tcp {
                    address: s.to_string(),
                })
            }
            _ => Err(ModelError::Format(format!(
                "endpoint {s:?} is neither host:port nor cmd:program"
            ))),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp { address } => write!(f, "{address}"),
            Endpoint::Command { program, args } => {
                write!(f, "cmd:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
        }
    }
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
}

impl Connection {
    fn exchange(&mut self, request: &Request, id: Option<u64>) -> Result<Response, ModelError> {
        let text = serde_json::to_string(request).map_err(|e| ModelError::Format(e.to_string()))?;
        self.writer.write_all(text.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(ModelError::Protocol {
                id,
                message: "connection closed".into(),
            });
        }
        let response: Response = serde_json::from_str(line.trim()).map_err(|e| ModelError::Protocol {
            id,
            message: format!("unparseable response: {e}"),
        })?;
        if let Some(message) = response.error.clone() {
            return Err(match id {
                Some(id) => ModelError::Remote { id, message },
                None => ModelError::Protocol { id, message },
            });
        }
        if response.id != id {
            return Err(ModelError::Protocol {
                id,
                message: format!("response carries id {:?}", response.id),
            });
        }
        Ok(response)
    }
}

/// Client for a provider speaking the protocol. Conditionals and
/// representations are cached per context.
pub struct ExternalModel {
    vocab_size: usize,
    repr_dim: usize,
    connection: Mutex<Connection>,
    cond_cache: Mutex<HashMap<Vec<TokenId>, Vec<f64>>>,
    repr_cache: Mutex<HashMap<Vec<TokenId>, Vec<f64>>>,
    next_id: AtomicU64,
    sent: AtomicU64,
    child: Option<Mutex<Child>>,
}

impl fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalModel")
            .field("vocab_size", &self.vocab_size)
            .field("repr_dim", &self.repr_dim)
            .field("requests_sent", &self.requests_sent())
            .finish()
    }
}

impl ExternalModel {
    pub fn connect(endpoint: &Endpoint) -> Result<Self, ModelError> {
        match endpoint {
            Endpoint::Tcp { address } => {
                let stream = TcpStream::connect(address)
                    .map_err(|e| ModelError::Io(format!("{address}: {e}")))?;
                let reader = BufReader::new(stream.try_clone()?);
                Self::from_streams(reader, BufWriter::new(stream))
            }
            Endpoint::Command { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| ModelError::Io(format!("{program}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let mut model = Self::from_streams(BufReader::new(stdout), stdin)?;
                model.child = Some(Mutex::new(child));
                Ok(model)
            }
        }
    }

    /// Handshake over an arbitrary byte stream pair.
    pub fn from_streams<R, W>(reader: R, writer: W) -> Result<Self, ModelError>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let mut connection = Connection {
            reader: Box::new(reader),
            writer: Box::new(writer),
        };
        let hello = connection.exchange(&Request::Hello, None)?;
        let (Some(vocab_size), Some(repr_dim)) = (hello.vocab_size, hello.repr_dim) else {
            return Err(ModelError::Protocol {
                id: None,
                message: "handshake lacks vocab_size or repr_dim".into(),
            });
        };
        if vocab_size == 0 {
            return Err(ModelError::Protocol {
                id: None,
                message: "handshake reports an empty vocabulary".into(),
            });
        }
        Ok(Self {
            vocab_size,
            repr_dim,
            connection: Mutex::new(connection),
            cond_cache: Mutex::new(HashMap::new()),
            repr_cache: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            sent: AtomicU64::new(1),
            child: None,
        })
    }

    /// Requests written to the wire so far, the handshake included.
    pub fn requests_sent(&self) -> u64 {
        self.sent.load(Ordering::SeqCst)
    }

    pub fn clear_cache(&self) {
        self.cond_cache.lock().expect("cache lock").clear();
        self.repr_cache.lock().expect("cache lock").clear();
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<(), ModelError> {
        match tokens.iter().find(|t| **t as usize >= self.vocab_size) {
            Some(&token) => Err(ModelError::TokenOutOfRange {
                token,
                vocab_size: self.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn cached<F>(
        &self,
        cache: &Mutex<HashMap<Vec<TokenId>, Vec<f64>>>,
        key: &[TokenId],
        fetch: F,
    ) -> Result<Vec<f64>, ModelError>
    where
        F: FnOnce(u64) -> Result<Vec<f64>, ModelError>,
    {
        if let Some(v) = cache.lock().expect("cache lock").get(key) {
            return Ok(v.clone());
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let v = fetch(id)?;
        let mut cache = cache.lock().expect("cache lock");
        if cache.len() >= CACHE_CAPACITY {
            cache.clear();
        }
        cache.insert(key.to_vec(), v.clone());
        Ok(v)
    }

    fn send(&self, request: &Request, id: u64) -> Result<Response, ModelError> {
        let mut connection = self.connection.lock().expect("connection lock");
        self.sent.fetch_add(1, Ordering::SeqCst);
        connection.exchange(request, Some(id))
    }
}

impl SequenceModel for ExternalModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn repr_dim(&self) -> usize {
        self.repr_dim
    }

    fn log_conditional(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        self.check_tokens(context)?;
        self.cached(&self.cond_cache, context, |id| {
            let response = self.send(
                &Request::Cond {
                    id,
                    context: context.to_vec(),
                },
                id,
            )?;
            let raw = response.logprobs.ok_or_else(|| ModelError::Protocol {
                id: Some(id),
                message: "response lacks logprobs".into(),
            })?;
            if raw.len() != self.vocab_size {
                return Err(ModelError::Dimension {
                    id,
                    expected: self.vocab_size,
                    got: raw.len(),
                });
            }
            let v = decode_logprobs(&raw);
            if v.iter().any(|x| x.is_nan() || *x > 0.0) {
                return Err(ModelError::Protocol {
                    id: Some(id),
                    message: "logprobs contain NaN or positive values".into(),
                });
            }
            let lse = logsumexp(&v);
            if lse.is_nan() || lse.abs() > NORMALIZATION_TOLERANCE {
                return Err(ModelError::Normalization { id, logsumexp: lse });
            }
            Ok(v)
        })
    }

    fn representation(&self, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        self.check_tokens(prefix)?;
        self.cached(&self.repr_cache, prefix, |id| {
            let response = self.send(
                &Request::Repr {
                    id,
                    prefix: prefix.to_vec(),
                },
                id,
            )?;
            let v = response.vector.ok_or_else(|| ModelError::Protocol {
                id: Some(id),
                message: "response lacks vector".into(),
            })?;
            if v.len() != self.repr_dim {
                return Err(ModelError::Dimension {
                    id,
                    expected: self.repr_dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::Protocol {
                    id: Some(id),
                    message: "vector contains non-finite values".into(),
                });
            }
            Ok(v)
        })
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Some(child) = &self.child {
            if let Ok(mut child) = child.lock() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}
