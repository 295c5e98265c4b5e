use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{GeneratorConfig, GeneratorError, ObjectiveGenerator};

/// Chat-completions client with exponential backoff.
pub struct RemoteGenerator {
    cfg: GeneratorConfig,
    agent: Agent,
    seq: AtomicU64,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(GeneratorError),
}

impl RemoteGenerator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self, GeneratorError> {
        cfg.validate()?;
        if let Some(dir) = &cfg.log_dir {
            std::fs::create_dir_all(dir)?;
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            cfg,
            agent,
            seq: AtomicU64::new(0),
        })
    }

    fn body(&self, prompt: &str) -> String {
        json!({
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        })
        .to_string()
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .agent
            .post(&self.cfg.endpoint_url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if status >= 400 {
            return Attempt::Fatal(GeneratorError::Transport {
                attempts: 1,
                last: format!("HTTP {status}: {text}"),
            });
        }
        match content_of(&text) {
            Some(c) => Attempt::Done(c),
            None => Attempt::Fatal(GeneratorError::BadResponse(truncate(&text, 200))),
        }
    }

    fn log(&self, n: u64, kind: &str, text: &str) -> Result<(), GeneratorError> {
        if let Some(dir) = &self.cfg.log_dir {
            write_log(dir, n, kind, text)?;
        }
        Ok(())
    }
}

fn write_log(dir: &Path, n: u64, kind: &str, text: &str) -> std::io::Result<()> {
    std::fs::write(dir.join(format!("{n:06}-{kind}.txt")), text)
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// `choices[0].message.content` of a chat-completions reply.
fn content_of(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl ObjectiveGenerator for RemoteGenerator {
    fn query(&self, prompt: &str) -> Result<String, GeneratorError> {
        let n = self.seq.fetch_add(1, Ordering::SeqCst);
        let body = self.body(prompt);
        self.log(n, "request", &body)?;
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for k in 0..attempts {
            if k > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (k - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Attempt::Done(content) => {
                    self.log(n, "response", &content)?;
                    return Ok(content);
                }
                Attempt::Retry(msg) => {
                    log::warn!("generator request {n} attempt {} failed: {msg}", k + 1);
                    last = msg;
                }
                Attempt::Fatal(e) => {
                    self.log(n, "error", &e.to_string())?;
                    return Err(e);
                }
            }
        }
        self.log(n, "error", &last)?;
        Err(GeneratorError::Transport { attempts, last })
    }
}
