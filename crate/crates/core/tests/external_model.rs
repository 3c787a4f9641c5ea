use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use eventinfo::infomeasure::{score_cohort, ScoreMode, ScoreOptions};
use eventinfo::seqmodel::protocol::serve_listener;
use eventinfo::seqmodel::{BackoffConfig, BackoffModel, Endpoint, ExternalModel, ModelError, SequenceModel};
use eventinfo::synthgen::{generate, GeneratorConfig};
use eventinfo::tokenizer::{Timeline, Tokenizer};
use serde_json::{json, Value};

fn timelines(n: usize, seed: u64) -> Vec<Timeline> {
    let cfg = GeneratorConfig {
        n_patients: n,
        seed,
        max_events: 60,
        ..Default::default()
    };
    Tokenizer::preset().encode_all(&generate(&cfg).unwrap().hospitalizations).unwrap()
}

fn backoff() -> BackoffModel {
    BackoffModel::train(&timelines(40, 1), 208, BackoffConfig::default()).unwrap()
}

fn live_server(model: Arc<dyn SequenceModel>) -> Endpoint {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    thread::spawn(move || serve_listener(model, listener));
    Endpoint::Tcp { address }
}

/// A one-connection server answering each request with `reply`.
fn scripted_server<F>(reply: F) -> Endpoint
where
    F: Fn(&Value) -> Value + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer: TcpStream = stream;
        for line in reader.lines() {
            let Ok(line) = line else { break };
            let request: Value = serde_json::from_str(&line).unwrap();
            let mut text = reply(&request).to_string();
            text.push('\n');
            if writer.write_all(text.as_bytes()).is_err() {
                break;
            }
        }
    });
    Endpoint::Tcp { address }
}

fn uniform_logprobs(n: usize, total: f64) -> Vec<f64> {
    vec![(total / n as f64).ln(); n]
}

fn hello_or(request: &Value, vocab: usize, repr: usize, other: impl Fn(&Value) -> Value) -> Value {
    if request["op"] == "hello" {
        json!({"vocab_size": vocab, "repr_dim": repr})
    } else {
        other(request)
    }
}

#[test]
fn scores_through_tcp_match_in_process_scores() {
    let model = backoff();
    let endpoint = live_server(Arc::new(model.clone()));
    let remote = ExternalModel::connect(&endpoint).unwrap();
    assert_eq!(remote.vocab_size(), 208);
    let tls: Vec<Timeline> = timelines(4, 9).into_iter().map(|t| t.window_until(t.token_times[0] + 6 * 3600)).collect();
    let opts = ScoreOptions {
        mode: ScoreMode::Raw,
        ..Default::default()
    };
    let local = score_cohort(&model, &tls, opts).unwrap();
    let wire = score_cohort(&remote, &tls, opts).unwrap();
    for (a, b) in local.iter().zip(&wire) {
        for (x, y) in a.token_bits.iter().zip(&b.token_bits) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn repeated_contexts_are_served_from_cache() {
    let endpoint = live_server(Arc::new(backoff()));
    let remote = ExternalModel::connect(&endpoint).unwrap();
    assert_eq!(remote.requests_sent(), 1);
    let tl = &timelines(1, 4)[0];
    let toks = &tl.tokens[..40];
    let first = remote.sequence_log_probs(toks).unwrap();
    let after_first = remote.requests_sent();
    assert_eq!(after_first, 1 + 40);
    assert_eq!(remote.sequence_log_probs(toks).unwrap(), first);
    assert_eq!(remote.requests_sent(), after_first);
    remote.representation(&toks[..5]).unwrap();
    remote.representation(&toks[..5]).unwrap();
    assert_eq!(remote.requests_sent(), after_first + 1);
    remote.clear_cache();
    remote.log_conditional(&toks[..3]).unwrap();
    assert_eq!(remote.requests_sent(), after_first + 2);
}

#[test]
fn unnormalized_conditionals_are_rejected() {
    let endpoint = scripted_server(|r| {
        hello_or(r, 4, 2, |r| json!({"id": r["id"], "logprobs": uniform_logprobs(4, 0.9)}))
    });
    let remote = ExternalModel::connect(&endpoint).unwrap();
    let err = remote.log_conditional(&[1]).unwrap_err();
    assert!(matches!(err, ModelError::Normalization { .. }), "{err}");
}

#[test]
fn wrong_lengths_are_dimension_errors() {
    let endpoint = scripted_server(|r| {
        hello_or(r, 4, 2, |r| match r["op"].as_str() {
            Some("cond") => json!({"id": r["id"], "logprobs": uniform_logprobs(3, 1.0)}),
            _ => json!({"id": r["id"], "vector": [0.0, 1.0, 2.0]}),
        })
    });
    let remote = ExternalModel::connect(&endpoint).unwrap();
    let err = remote.log_conditional(&[]).unwrap_err();
    assert!(matches!(err, ModelError::Dimension { expected: 4, got: 3, .. }), "{err}");
    let err = remote.representation(&[0]).unwrap_err();
    assert!(matches!(err, ModelError::Dimension { expected: 2, got: 3, .. }), "{err}");
}

#[test]
fn remote_errors_and_mismatched_ids_surface() {
    let endpoint = scripted_server(|r| {
        hello_or(r, 4, 2, |r| match r["op"].as_str() {
            Some("cond") => json!({"id": r["id"], "error": "no capacity"}),
            _ => json!({"id": 999_999, "vector": [0.0, 0.0]}),
        })
    });
    let remote = ExternalModel::connect(&endpoint).unwrap();
    let err = remote.log_conditional(&[2]).unwrap_err();
    assert!(matches!(&err, ModelError::Remote { message, .. } if message == "no capacity"), "{err}");
    let err = remote.representation(&[2]).unwrap_err();
    assert!(matches!(err, ModelError::Protocol { .. }), "{err}");
}

#[test]
fn out_of_range_tokens_never_reach_the_wire() {
    let endpoint = live_server(Arc::new(backoff()));
    let remote = ExternalModel::connect(&endpoint).unwrap();
    let err = remote.log_conditional(&[208]).unwrap_err();
    assert!(matches!(err, ModelError::TokenOutOfRange { token: 208, .. }), "{err}");
    assert_eq!(remote.requests_sent(), 1);
}

#[test]
fn bad_handshake_is_rejected() {
    let endpoint = scripted_server(|_| json!({"vocab_size": 0, "repr_dim": 1}));
    assert!(matches!(ExternalModel::connect(&endpoint), Err(ModelError::Protocol { .. })));
    let endpoint = scripted_server(|_| json!({"repr_dim": 1}));
    assert!(matches!(ExternalModel::connect(&endpoint), Err(ModelError::Protocol { .. })));
}

#[test]
fn unreachable_endpoint_is_an_io_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    drop(listener);
    let err = ExternalModel::connect(&Endpoint::Tcp { address }).unwrap_err();
    assert!(matches!(err, ModelError::Io(_)), "{err}");
}
