//! Chat-completion transport shared by the reason annotator and the model
//! client: an OpenAI-style HTTP client, a retry helper and recorded transcripts.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use base64::Engine;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ClientError {
    /// Network, HTTP status or replay-miss failure. Retried.
    #[error("transport: {0}")]
    Transport(String),
    /// The service answered but the payload is unusable. Not retried.
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
            factor: 1.0,
        }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        let ms = self.base_delay_ms as f64 * self.factor.powi(attempt as i32 - 2);
        Duration::from_millis(ms as u64)
    }
}

/// Outcome of a retried call and how many attempts it took.
#[derive(Debug)]
pub struct Attempted<T> {
    pub result: Result<T, ClientError>,
    pub attempts: u32,
}

/// Run `f` until it succeeds, fails with a non-transport error, or the policy
/// runs out of attempts. Waits with exponential backoff between attempts.
pub fn call_with_retry<T>(policy: &RetryPolicy, mut f: impl FnMut(u32) -> Result<T, ClientError>) -> Attempted<T> {
    let max = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        let d = policy.delay_before(attempt);
        if !d.is_zero() {
            std::thread::sleep(d);
        }
        match f(attempt) {
            Err(ClientError::Transport(e)) if attempt < max => {
                log::debug!("attempt {attempt} failed: {e}");
            }
            result => return Attempted { result, attempts: attempt },
        }
    }
}

pub fn png_data_url(img: &RgbImage) -> String {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("PNG encoding to memory cannot fail");
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(buf.into_inner())
    )
}

/// Minimal chat-completion contract: POST `{model, messages}` to the endpoint,
/// read `choices[0].message.content`.
#[derive(Clone)]
pub struct ChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            agent,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn request_body(&self, prompt: &str, images: &[RgbImage]) -> serde_json::Value {
        let mut content: Vec<serde_json::Value> = images
            .iter()
            .map(|img| json!({"type": "image_url", "image_url": {"url": png_data_url(img)}}))
            .collect();
        content.push(json!({"type": "text", "text": prompt}));
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        })
    }

    pub fn complete(&self, prompt: &str, images: &[RgbImage]) -> Result<String, ClientError> {
        let body = self.request_body(prompt, images);
        let mut req = self.agent.post(&self.endpoint);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ClientError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ClientError::Malformed(format!("HTTP {status}")));
        }
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| ClientError::Malformed("missing choices[0].message.content".into()))
    }
}

/// One recorded exchange. `error` entries replay as transport failures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Recorded responses keyed by request key, read from JSON Lines.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    entries: HashMap<String, TranscriptEntry>,
}

impl Transcript {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.key.clone(), e)).collect(),
        }
    }

    pub fn read<R: BufRead>(r: R) -> std::io::Result<Self> {
        let mut entries = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            entries.push(e);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn replay(&self, key: &str) -> Result<String, ClientError> {
        match self.entries.get(key) {
            Some(TranscriptEntry { response: Some(r), .. }) => Ok(r.clone()),
            Some(TranscriptEntry { error: Some(e), .. }) => Err(ClientError::Transport(e.clone())),
            Some(_) => Err(ClientError::Malformed(format!("empty transcript entry {key}"))),
            None => Err(ClientError::Transport(format!("no recorded response for {key}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn write_transcript<W: Write>(entries: &[TranscriptEntry], mut w: W) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
