//! Client for an external model server (HTTP or a stdio subprocess).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Duration;

use serde_json::{json, Value};

use super::wire::{
    parse_frame, DecodeRequest, DecodeResponse, DistributionRequest, DistributionResponse,
    EncodeRequest, EncodeResponse, InfoResponse,
};
use super::{Model, ModelConfig, Prompt, TokenDistribution, TokenId};
use crate::error::{Error, Result};

pub trait Transport: Send {
    /// `op` is one of `distribution`, `encode`, `decode`, `info`.
    fn call(&mut self, op: &str, body: Value) -> Result<Value>;
}

pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpTransport {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn call(&mut self, op: &str, body: Value) -> Result<Value> {
        let url = format!("{}/v1/{op}", self.base);
        let unavailable = |e: ureq::Error| Error::ModelUnavailable(format!("{url}: {e}"));
        let mut response = if op == "info" {
            self.agent.get(&url).call().map_err(unavailable)?
        } else {
            self.agent.post(&url).send_json(&body).map_err(unavailable)?
        };
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| Error::protocol(format!("{url}: unreadable response: {e}")))
    }
}

/// One JSON request per line on stdin, one response per line on stdout.
pub struct StdioTransport {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl StdioTransport {
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::config("empty model server command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::ModelUnavailable(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(StdioTransport {
            child,
            stdin,
            stdout,
        })
    }
}

impl Transport for StdioTransport {
    fn call(&mut self, op: &str, mut body: Value) -> Result<Value> {
        match body {
            Value::Object(ref mut map) => {
                map.insert("op".into(), Value::String(op.into()));
            }
            _ => body = json!({ "op": op }),
        }
        let unavailable = |e: std::io::Error| Error::ModelUnavailable(format!("model server pipe: {e}"));
        let mut line = serde_json::to_string(&body)?;
        line.push('\n');
        self.stdin.write_all(line.as_bytes()).map_err(unavailable)?;
        self.stdin.flush().map_err(unavailable)?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(unavailable)? == 0 {
            return Err(Error::ModelUnavailable("model server closed its output".into()));
        }
        serde_json::from_str(&reply).map_err(|e| Error::protocol(format!("bad response line: {e}")))
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Model whose distributions come from a server. Distributions are memoized
/// per generation session.
pub struct RemoteModel {
    transport: Box<dyn Transport>,
    model_name: String,
    vocab_size: usize,
    done_token: Option<TokenId>,
    max_len: Option<usize>,
    cache: HashMap<(String, Vec<TokenId>), TokenDistribution>,
}

impl RemoteModel {
    /// Queries `/v1/info` for whatever the config leaves unset.
    pub fn connect(
        mut transport: Box<dyn Transport>,
        model_name: Option<String>,
        vocab_size: Option<usize>,
        done_token: Option<TokenId>,
        max_len: Option<usize>,
    ) -> Result<Self> {
        let (model_name, vocab_size, done_token) = match (model_name, vocab_size) {
            (Some(name), Some(vocab)) => (name, vocab, done_token),
            (name, vocab) => {
                let info: InfoResponse = parse_frame(transport.call("info", json!({}))?)?;
                (
                    name.unwrap_or(info.model_name),
                    vocab.unwrap_or(info.vocab_size),
                    done_token.or(info.done_token),
                )
            }
        };
        Ok(RemoteModel {
            transport,
            model_name,
            vocab_size,
            done_token,
            max_len,
            cache: HashMap::new(),
        })
    }

    /// Params: `{"url": "http://host:port"}` or `{"command": [argv...]}`,
    /// plus optional `"model_name"`.
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let transport: Box<dyn Transport> = match (
            cfg.param::<String>("url")?,
            cfg.param::<Vec<String>>("command")?,
        ) {
            (Some(url), None) => Box::new(HttpTransport::new(&url)),
            (None, Some(cmd)) => Box::new(StdioTransport::spawn(&cmd)?),
            _ => {
                return Err(Error::config(
                    "remote model needs exactly one of params.url or params.command",
                ))
            }
        };
        Self::connect(
            transport,
            cfg.param("model_name")?,
            cfg.vocab_size,
            cfg.done_token,
            cfg.max_len,
        )
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }
}

impl Model for RemoteModel {
    fn kind(&self) -> &str {
        "remote"
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn done_token(&self) -> Option<TokenId> {
        self.done_token
    }

    fn max_len(&self) -> Option<usize> {
        self.max_len
    }

    fn next_token_dist(
        &mut self,
        prompt: &Prompt,
        generated: &[TokenId],
    ) -> Result<TokenDistribution> {
        let key = (prompt.text.clone(), generated.to_vec());
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let request = DistributionRequest {
            prompt: prompt.text.clone(),
            tokens: generated.to_vec(),
            model_name: self.model_name.clone(),
        };
        let reply = self.transport.call("distribution", serde_json::to_value(&request)?)?;
        let frame: DistributionResponse = parse_frame(reply)?;
        if frame.vocab_size != self.vocab_size {
            return Err(Error::protocol(format!(
                "server vocab_size {} differs from expected {}",
                frame.vocab_size, self.vocab_size
            )));
        }
        let dist = frame.into_distribution()?;
        self.cache.insert(key, dist.clone());
        Ok(dist)
    }

    fn detokenize(&mut self, tokens: &[TokenId]) -> Result<Option<String>> {
        let body = serde_json::to_value(DecodeRequest {
            tokens: tokens.to_vec(),
        })?;
        let reply: DecodeResponse = parse_frame(self.transport.call("decode", body)?)?;
        Ok(Some(reply.text))
    }

    fn tokenize(&mut self, text: &str) -> Result<Option<Vec<TokenId>>> {
        let body = serde_json::to_value(EncodeRequest { text: text.into() })?;
        let reply: EncodeResponse = parse_frame(self.transport.call("encode", body)?)?;
        Ok(Some(reply.tokens))
    }

    fn reset_session(&mut self) {
        self.cache.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    /// Records calls and answers with a fixed distribution.
    struct FakeTransport {
        calls: Arc<Mutex<Vec<(String, Value)>>>,
        reply: Value,
    }

    impl Transport for FakeTransport {
        fn call(&mut self, op: &str, body: Value) -> Result<Value> {
            self.calls.lock().unwrap().push((op.to_string(), body));
            Ok(match op {
                "info" => json!({"model_name": "fake", "vocab_size": 3, "done_token": 2}),
                _ => self.reply.clone(),
            })
        }
    }

    #[test]
    fn memoizes_within_session_and_reads_info() {
        let calls = Arc::new(Mutex::new(vec![]));
        let transport = FakeTransport {
            calls: calls.clone(),
            reply: json!({"probs": [0.2, 0.3, 0.5], "vocab_size": 3}),
        };
        let mut model = RemoteModel::connect(Box::new(transport), None, None, None, Some(4)).unwrap();
        assert_eq!(model.vocab_size(), 3);
        assert_eq!(model.done_token(), Some(2));
        assert_eq!(model.model_name(), "fake");
        let p = Prompt::text("hi");
        let a = model.next_token_dist(&p, &[1]).unwrap();
        let b = model.next_token_dist(&p, &[1]).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.lock().unwrap().len(), 2);
        model.next_token_dist(&Prompt::text("other"), &[1]).unwrap();
        assert_eq!(calls.lock().unwrap().len(), 3);
        model.reset_session();
        model.next_token_dist(&p, &[1]).unwrap();
        let log = calls.lock().unwrap();
        assert_eq!(log.len(), 4);
        assert_eq!(log[1].1["prompt"], "hi");
        assert_eq!(log[1].1["tokens"], json!([1]));
    }

    #[test]
    fn rejects_malformed_distribution() {
        let transport = FakeTransport {
            calls: Arc::default(),
            reply: json!({"probs": [0.2, 0.3, 0.4], "vocab_size": 3}),
        };
        let mut model =
            RemoteModel::connect(Box::new(transport), Some("m".into()), Some(3), None, None).unwrap();
        assert!(matches!(
            model.next_token_dist(&Prompt::default(), &[]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn unreachable_server_is_unavailable() {
        let mut transport = HttpTransport::new("http://127.0.0.1:9");
        assert!(matches!(
            transport.call("info", json!({})),
            Err(Error::ModelUnavailable(_))
        ));
    }
}
