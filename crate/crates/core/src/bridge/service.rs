//! HTTP client for a remote teacher.
//!
//! `POST {endpoint}/teacher/query` with a JSON [`TeacherRequest`]; the
//! reply is a [`TeacherResponse`] whose payload is base64-encoded
//! little-endian `f32`. `dims` is `[N]` for logits or `[N, M+1, P]` for
//! token embeddings, which are run through the logits transform here.

use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{transform_embeddings_to_logits, EmbeddingTensor, TokenizedLabelSet};
use crate::taskstream::{ClassDescriptor, Sample};
use crate::{Error, Result, TeacherError};

pub const QUERY_PATH: &str = "/teacher/query";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Want {
    #[default]
    Embeddings,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRequest {
    pub request_id: u64,
    pub sample_id: String,
    pub question: String,
    pub features: Vec<f64>,
    pub candidate_labels: Vec<String>,
    pub want: Want,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherResponse {
    pub request_id: u64,
    pub dims: Vec<usize>,
    pub payload: String,
}

pub fn encode_f32_payload(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f32_payload(payload: &str) -> Result<Vec<f64>, TeacherError> {
    let bytes = B64
        .decode(payload)
        .map_err(|e| TeacherError::Malformed(format!("payload is not base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(TeacherError::Malformed(format!(
            "payload of {} bytes is not a whole number of f32",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Base URL, e.g. `http://127.0.0.1:8700`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub want: Want,
}

#[derive(Debug)]
pub struct ServiceTeacher {
    config: ServiceConfig,
    agent: ureq::Agent,
    max_label_tokens: usize,
    vocab_size: usize,
    eps: f64,
    next_id: AtomicU64,
}

enum Attempt {
    Done(Result<Vec<f64>>),
    Retry(TeacherError),
}

impl ServiceTeacher {
    pub fn new(config: ServiceConfig, max_label_tokens: usize, vocab_size: usize, eps: f64) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(config.timeout)
            .timeout(config.timeout)
            .build();
        Self {
            config,
            agent,
            max_label_tokens,
            vocab_size,
            eps,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), QUERY_PATH)
    }

    pub fn query(&self, sample: &Sample, classes: &[ClassDescriptor]) -> Result<Vec<f64>> {
        let request = TeacherRequest {
            request_id: self.next_id.fetch_add(1, Ordering::Relaxed),
            sample_id: sample.id.clone(),
            question: sample.question.clone(),
            features: sample.features.clone(),
            candidate_labels: classes.iter().map(|c| c.name.clone()).collect(),
            want: self.config.want,
        };
        let attempts = self.config.retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            match self.attempt(&request, classes) {
                Attempt::Done(r) => return r,
                Attempt::Retry(e) => last = Some(e),
            }
        }
        Err(match last {
            Some(TeacherError::Timeout { endpoint, .. }) => TeacherError::Timeout { endpoint, attempts },
            Some(e) => e,
            None => unreachable!("at least one attempt"),
        }
        .into())
    }

    fn attempt(&self, request: &TeacherRequest, classes: &[ClassDescriptor]) -> Attempt {
        let url = self.url();
        let reply = match self.agent.post(&url).send_json(request) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) if code >= 500 => {
                let body = r.into_string().unwrap_or_default();
                return Attempt::Retry(TeacherError::Transport {
                    endpoint: url,
                    message: format!("HTTP {code}: {body}"),
                });
            }
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Attempt::Done(Err(TeacherError::Malformed(format!("HTTP {code}: {body}")).into()));
            }
            Err(ureq::Error::Transport(t)) => {
                return Attempt::Retry(if is_timeout(&t) {
                    TeacherError::Timeout {
                        endpoint: url,
                        attempts: 1,
                    }
                } else {
                    TeacherError::Transport {
                        endpoint: url,
                        message: t.to_string(),
                    }
                });
            }
        };
        let body = match reply.into_string() {
            Ok(b) => b,
            Err(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
                return Attempt::Retry(TeacherError::Timeout {
                    endpoint: url,
                    attempts: 1,
                })
            }
            Err(e) => {
                return Attempt::Retry(TeacherError::Transport {
                    endpoint: url,
                    message: e.to_string(),
                })
            }
        };
        let response: TeacherResponse = match serde_json::from_str(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Done(Err(TeacherError::Malformed(e.to_string()).into())),
        };
        Attempt::Done(self.decode(request, &response, classes))
    }

    fn decode(
        &self,
        request: &TeacherRequest,
        response: &TeacherResponse,
        classes: &[ClassDescriptor],
    ) -> Result<Vec<f64>> {
        if response.request_id != request.request_id {
            return Err(TeacherError::Malformed(format!(
                "response id {} does not answer request {}",
                response.request_id, request.request_id
            ))
            .into());
        }
        let values = decode_f32_payload(&response.payload)?;
        let expected: usize = response.dims.iter().product();
        if values.len() != expected {
            return Err(TeacherError::Malformed(format!(
                "dims {:?} need {expected} values, payload has {}",
                response.dims,
                values.len()
            ))
            .into());
        }
        match response.dims[..] {
            [n] => {
                if n != classes.len() {
                    return Err(TeacherError::Dimension(format!("{n} logits for {} candidates", classes.len())).into());
                }
                Ok(values)
            }
            [n, m1, p] => {
                let labels = TokenizedLabelSet::from_token_sequences(
                    classes.iter().map(|c| c.tokens.clone()).collect(),
                    self.max_label_tokens,
                    self.vocab_size,
                )?;
                let tensor = EmbeddingTensor::new(n, m1, p, values)?;
                transform_embeddings_to_logits(&tensor, &labels, self.eps).map_err(|e| match e {
                    Error::Dimension(m) => TeacherError::Dimension(m).into(),
                    other => other,
                })
            }
            _ => Err(TeacherError::Malformed(format!("unsupported dims {:?}", response.dims)).into()),
        }
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    let mut source: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(t);
    while let Some(s) = source {
        if let Some(io) = s.downcast_ref::<io::Error>() {
            return matches!(io.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock);
        }
        source = s.source();
    }
    t.to_string().contains("timed out")
}
