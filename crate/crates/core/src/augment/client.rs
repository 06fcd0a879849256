use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Paraphraser, STOPWORDS};
use crate::process::run_piped;
use crate::text::{normalize, Sentence};

/// Single-turn text completion.
pub trait ChatClient: Send + Sync {
    fn name(&self) -> &str;

    fn timeout(&self) -> Duration;

    /// Returns the completion text. Transport failures are errors, never an
    /// empty string.
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Wire request: `{"prompt": "..."}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChatRequest<'a> {
    pub prompt: &'a str,
}

/// Wire response: `{"text": "..."}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

pub const DEFAULT_CHAT_TIMEOUT: Duration = Duration::from_secs(120);

/// Offline rule-based client. It answers the default prompt templates:
/// keyword requests with the non-stopword tokens of the sentence, fluency
/// checks with `[FLUENT]`, and paraphrase requests with lexicon-driven
/// rewordings (synonym phrases plus clause reordering).
#[derive(Debug, Default)]
pub struct MockChatClient {
    paraphraser: Paraphraser,
    fail_on: HashSet<String>,
}

impl MockChatClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes every request about `sentence` fail with a transport error.
    pub fn failing_on(mut self, sentence: &str) -> Self {
        self.fail_on.insert(normalize(sentence, false));
        self
    }
}

fn field<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.trim().strip_prefix(label)).map(str::trim)
}

fn requested_count(prompt: &str) -> Option<usize> {
    prompt
        .split("Write ")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|n| n.parse().ok())
}

impl ChatClient for MockChatClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn timeout(&self) -> Duration {
        Duration::ZERO
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let target = field(prompt, "Sentence:")
            .ok_or_else(|| Error::Transport("mock: prompt has no `Sentence:` line".into()))?;
        if self.fail_on.contains(&normalize(target, false)) {
            return Err(Error::Transport("mock: injected failure".into()));
        }
        let sentence = Sentence::new(target);
        if prompt.contains("[FLUENT]") {
            return Ok("[FLUENT]".into());
        }
        if let Some(k) = requested_count(prompt) {
            let lines: Vec<String> = self
                .paraphraser
                .diverse_variants(&sentence, k)
                .iter()
                .map(|s| s.raw().to_owned())
                .collect();
            return Ok(lines.join("\n"));
        }
        let keywords: Vec<&str> = sentence
            .tokens()
            .iter()
            .map(String::as_str)
            .filter(|t| !STOPWORDS.contains(t))
            .collect();
        Ok(keywords.join(", "))
    }
}

/// POSTs `{"prompt"}` as JSON to an HTTP endpoint and reads `{"text"}`.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    url: String,
    timeout: Duration,
}

impl HttpChatClient {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpChatClient {
            url: url.into(),
            timeout,
        }
    }
}

impl ChatClient for HttpChatClient {
    fn name(&self) -> &str {
        &self.url
    }

    fn timeout(&self) -> Duration {
        self.timeout
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::to_value(ChatRequest { prompt })?;
        let resp = ureq::post(&self.url)
            .timeout(self.timeout)
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => Error::Transport(format!("{}: HTTP {code}", self.url)),
                ureq::Error::Transport(t) if t.kind() == ureq::ErrorKind::Io => {
                    let msg = t.to_string();
                    if msg.contains("timed out") {
                        Error::Timeout(self.timeout)
                    } else {
                        Error::Transport(msg)
                    }
                }
                ureq::Error::Transport(t) => Error::Transport(t.to_string()),
            })?;
        let parsed: ChatResponse = resp
            .into_json()
            .map_err(|e| Error::MalformedResponse(format!("{}: {e}", self.url)))?;
        Ok(parsed.text)
    }
}

/// Runs a command per request (under `sh -c`): one `{"prompt"}` JSON line on
/// stdin, one `{"text"}` JSON line expected on stdout.
#[derive(Debug, Clone)]
pub struct ProcessChatClient {
    command: String,
    timeout: Duration,
}

impl ProcessChatClient {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        ProcessChatClient {
            command: command.into(),
            timeout,
        }
    }
}

impl ChatClient for ProcessChatClient {
    fn name(&self) -> &str {
        &self.command
    }

    fn timeout(&self) -> Duration {
        self.timeout
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let mut payload = serde_json::to_vec(&ChatRequest { prompt })?;
        payload.push(b'\n');
        let lines = run_piped(&self.command, payload, self.timeout)?;
        let line = lines
            .iter()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::MalformedResponse(format!("`{}` produced no output", self.command)))?;
        let parsed: ChatResponse = serde_json::from_str(line).map_err(|e| Error::MalformedResponse(e.to_string()))?;
        Ok(parsed.text)
    }
}

/// `mock`, `http://...` / `https://...`, or `process:<command>`.
pub fn client_from_spec(spec: &str, timeout: Duration) -> Result<Box<dyn ChatClient>> {
    if spec == "mock" {
        Ok(Box::new(MockChatClient::new()))
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Ok(Box::new(HttpChatClient::new(spec, timeout)))
    } else if let Some(cmd) = spec.strip_prefix("process:") {
        Ok(Box::new(ProcessChatClient::new(cmd, timeout)))
    } else {
        Err(Error::config(format!(
            "client: unknown value `{spec}` (expected mock, an http(s) URL, or process:<command>)"
        )))
    }
}
