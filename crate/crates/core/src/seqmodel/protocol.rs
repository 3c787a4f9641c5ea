//! Newline-delimited JSON protocol between scoring code and a model
//! provider. Natural-log probabilities of zero travel as `null`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{ModelError, SequenceModel};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello,
    Cond { id: u64, context: Vec<TokenId> },
    Repr { id: u64, prefix: Vec<TokenId> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repr_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn error(id: Option<u64>, message: String) -> Self {
        Response {
            id,
            error: Some(message),
            ..Default::default()
        }
    }
}

/// Finite values pass through; −∞ becomes `null`.
pub fn encode_logprobs(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

pub fn decode_logprobs(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect()
}

/// Answer one request line.
pub fn respond(model: &dyn SequenceModel, line: &str) -> Response {
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_u64()));
            return Response::error(id, format!("bad request: {e}"));
        }
    };
    match request {
        Request::Hello => Response {
            vocab_size: Some(model.vocab_size()),
            repr_dim: Some(model.repr_dim()),
            ..Default::default()
        },
        Request::Cond { id, context } => match model.log_conditional(&context) {
            Ok(v) => Response {
                id: Some(id),
                logprobs: Some(encode_logprobs(&v)),
                ..Default::default()
            },
            Err(e) => Response::error(Some(id), e.to_string()),
        },
        Request::Repr { id, prefix } => match model.representation(&prefix) {
            Ok(v) => Response {
                id: Some(id),
                vector: Some(v),
                ..Default::default()
            },
            Err(e) => Response::error(Some(id), e.to_string()),
        },
    }
}

/// Serve requests line by line until the reader is exhausted.
pub fn serve<R: BufRead, W: Write>(
    model: &dyn SequenceModel,
    reader: R,
    mut writer: W,
) -> Result<(), ModelError> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = respond(model, &line);
        let text = serde_json::to_string(&response).map_err(|e| ModelError::Format(e.to_string()))?;
        writer.write_all(text.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Accept connections forever, one thread per connection.
pub fn serve_listener(
    model: Arc<dyn SequenceModel>,
    listener: TcpListener,
) -> Result<(), ModelError> {
    for stream in listener.incoming() {
        let stream = stream?;
        let model = Arc::clone(&model);
        thread::spawn(move || {
            let _ = serve_connection(model.as_ref(), stream);
        });
    }
    Ok(())
}

fn serve_connection(model: &dyn SequenceModel, stream: TcpStream) -> Result<(), ModelError> {
    let reader = BufReader::new(stream.try_clone()?);
    serve(model, reader, BufWriter::new(stream))
}

pub fn serve_tcp<A: ToSocketAddrs>(
    model: Arc<dyn SequenceModel>,
    address: A,
) -> Result<(), ModelError> {
    serve_listener(model, TcpListener::bind(address)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::UniformModel;

    #[test]
    fn request_wire_format() {
        let r: Request = serde_json::from_str(r#"{"op":"cond","id":7,"context":[1,2]}"#).unwrap();
        assert_eq!(
            r,
            Request::Cond {
                id: 7,
                context: vec![1, 2]
            }
        );
        assert_eq!(serde_json::to_string(&Request::Hello).unwrap(), r#"{"op":"hello"}"#);
    }

    #[test]
    fn hello_and_errors() {
        let m = UniformModel { vocab_size: 4 };
        let hello = respond(&m, r#"{"op":"hello"}"#);
        assert_eq!(
            serde_json::to_string(&hello).unwrap(),
            r#"{"vocab_size":4,"repr_dim":1}"#
        );
        let bad = respond(&m, r#"{"op":"nope","id":3}"#);
        assert_eq!(bad.id, Some(3));
        assert!(bad.error.is_some());
    }

    #[test]
    fn serve_answers_each_line() {
        let m = UniformModel { vocab_size: 2 };
        let input = "{\"op\":\"cond\",\"id\":1,\"context\":[]}\n\n{\"op\":\"repr\",\"id\":2,\"prefix\":[0]}\n";
        let mut out = Vec::new();
        serve(&m, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].logprobs.as_ref().unwrap().len(), 2);
        assert_eq!(lines[1].vector, Some(vec![0.0]));
    }

    #[test]
    fn negative_infinity_travels_as_null() {
        let enc = encode_logprobs(&[0.0, f64::NEG_INFINITY]);
        assert_eq!(serde_json::to_string(&enc).unwrap(), "[0.0,null]");
        assert_eq!(decode_logprobs(&enc)[1], f64::NEG_INFINITY);
    }
}
