//! Objective generation: prompt assembly, transport to a chat-completions
//! endpoint, extraction of the first objective in the reply, and offline
//! mocks.

mod extract;
mod mock;
mod prompt;
mod remote;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

pub use extract::{extract_objective, find_json_objects, ExtractError};
pub use mock::{AdaptiveMock, MockGenerator};
pub use prompt::{compose_prompt, render_dyn, OperatorKind, PromptParts, W1_SENTENCE};
pub use remote::RemoteGenerator;

pub const API_KEY_ENV: &str = "DISPATCH_API_KEY";

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("transport failed after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
    #[error("endpoint returned a response without message content: {0}")]
    BadResponse(String),
    #[error("operator {0:?} requires a parent")]
    MissingParent(OperatorKind),
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("could not write audit log: {0}")]
    Log(#[from] std::io::Error),
}

/// Anything that turns a prompt into raw response text. Implementations are
/// shared across concurrently evaluated individuals.
pub trait ObjectiveGenerator: Send + Sync {
    fn query(&self, prompt: &str) -> Result<String, GeneratorError>;
}

impl<G: ObjectiveGenerator + ?Sized> ObjectiveGenerator for Box<G> {
    fn query(&self, prompt: &str) -> Result<String, GeneratorError> {
        (**self).query(prompt)
    }
}

impl<G: ObjectiveGenerator + ?Sized> ObjectiveGenerator for &G {
    fn query(&self, prompt: &str) -> Result<String, GeneratorError> {
        (**self).query(prompt)
    }
}

/// Wraps a generator and counts calls.
pub struct CountingGenerator<G> {
    inner: G,
    calls: AtomicUsize,
}

impl<G> CountingGenerator<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<G: ObjectiveGenerator> ObjectiveGenerator for CountingGenerator<G> {
    fn query(&self, prompt: &str) -> Result<String, GeneratorError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.query(prompt)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GeneratorMode {
    Remote,
    Mock,
    AdaptiveMock,
}

#[derive(Clone, Debug)]
pub struct GeneratorConfig {
    pub mode: GeneratorMode,
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_ms: u64,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    pub api_key: Option<String>,
    pub log_dir: Option<PathBuf>,
    pub mock_invalid_rate: f64,
    pub mock_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            mode: GeneratorMode::Mock,
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_name: "default".into(),
            temperature: 0.9,
            max_retries: 3,
            timeout_ms: 60_000,
            backoff_ms: 500,
            api_key: None,
            log_dir: None,
            mock_invalid_rate: 0.0,
            mock_seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GeneratorError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.mock_invalid_rate) {
            return Err(GeneratorError::Config(format!(
                "mock invalid rate {} must lie in [0, 1]",
                self.mock_invalid_rate
            )));
        }
        if self.mode == GeneratorMode::Remote && self.endpoint_url.is_empty() {
            return Err(GeneratorError::Config("remote mode needs an endpoint".into()));
        }
        Ok(())
    }

    /// Reads the API key from [`API_KEY_ENV`] when none is set.
    pub fn with_env_key(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        self
    }
}

pub fn build_generator(cfg: &GeneratorConfig) -> Result<Box<dyn ObjectiveGenerator>, GeneratorError> {
    cfg.validate()?;
    Ok(match cfg.mode {
        GeneratorMode::Mock => Box::new(MockGenerator::new(cfg.mock_seed, cfg.mock_invalid_rate)),
        GeneratorMode::AdaptiveMock => Box::new(AdaptiveMock::new(cfg.mock_seed, cfg.mock_invalid_rate)),
        GeneratorMode::Remote => Box::new(RemoteGenerator::new(cfg.clone())?),
    })
}
