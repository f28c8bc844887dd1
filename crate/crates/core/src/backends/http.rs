use std::io::Read;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, Route, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointKind {
    Caption,
    Generate,
    Rewrite,
}

impl EndpointKind {
    pub fn route(self) -> Route {
        match self {
            EndpointKind::Caption => Route::Caption,
            EndpointKind::Generate => Route::Generate,
            EndpointKind::Rewrite => Route::Rewrite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEndpoint {
    pub base_url: String,
    pub kind: EndpointKind,
    /// Per-attempt timeout in seconds.
    pub timeout: f64,
    pub max_retries: u32,
    #[serde(default)]
    pub auth_token: Option<String>,
    /// Name of an environment variable holding the bearer token. Read at
    /// request time; there is no default variable.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    /// Model identifier recorded in manifests, e.g. `blip2`. Defaults to
    /// `http:{base_url}`.
    #[serde(default)]
    pub name: Option<String>,
}

impl BackendEndpoint {
    pub fn new(base_url: impl Into<String>, kind: EndpointKind) -> Self {
        Self { base_url: base_url.into(), kind, timeout: 60.0, max_retries: 2, auth_token: None, auth_token_env: None, name: None }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(BackendError::Config(format!("timeout must be positive, got {}", self.timeout)));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(BackendError::Config(format!("base_url must be http(s): {:?}", self.base_url)));
        }
        Ok(())
    }

    fn token(&self) -> Option<String> {
        self.auth_token.clone().or_else(|| self.auth_token_env.as_ref().and_then(|k| std::env::var(k).ok()))
    }
}

/// Blocking HTTP client for one endpoint. 5xx responses and transport
/// failures are retried with jittered exponential backoff, up to
/// `max_retries + 1` attempts in total; 4xx responses fail immediately.
pub struct HttpTransport {
    endpoint: BackendEndpoint,
    agent: ureq::Agent,
    backoff_base: Duration,
}

impl HttpTransport {
    pub fn new(endpoint: BackendEndpoint) -> Result<Self, BackendError> {
        endpoint.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(endpoint.timeout)).build();
        Ok(Self { endpoint, agent, backoff_base: Duration::from_millis(100) })
    }

    /// Shorter backoff, for tests against local stubs.
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    fn url(&self, route: Route) -> String {
        format!("{}{}", self.endpoint.base_url.trim_end_matches('/'), route.path())
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = rand::thread_rng().gen_range(0.5..1.5) * f64::from(1u32 << attempt.min(10));
        let wait = self.backoff_base.mul_f64(factor);
        // Never sleep longer than one attempt's timeout, which bounds the
        // total wait by timeout x attempts.
        wait.min(Duration::from_secs_f64(self.endpoint.timeout))
    }
}

impl Transport for HttpTransport {
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let attempts = self.endpoint.max_retries + 1;
        let mut last = String::new();
        let started = Instant::now();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            let mut req = self.agent.post(&self.url(route)).set("Content-Type", "application/json");
            if let Some(token) = self.endpoint.token() {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
            match req.send_bytes(body) {
                Ok(resp) => {
                    let mut out = Vec::new();
                    resp.into_reader()
                        .read_to_end(&mut out)
                        .map_err(|e| BackendError::Transport { attempts: attempt + 1, message: e.to_string() })?;
                    return Ok(out);
                }
                Err(ureq::Error::Status(status, resp)) if (400..500).contains(&status) => {
                    let message = resp.into_string().unwrap_or_default();
                    return Err(BackendError::Rejection { status, message });
                }
                Err(ureq::Error::Status(status, resp)) => {
                    last = format!("status {status}: {}", resp.into_string().unwrap_or_default());
                }
                Err(ureq::Error::Transport(t)) => last = t.to_string(),
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: format!("{last} (after {:.1}s)", started.elapsed().as_secs_f64()),
        })
    }

    fn backend_id(&self, _: Route) -> String {
        match &self.endpoint.name {
            Some(n) => n.clone(),
            None => format!("http:{}", self.endpoint.base_url.trim_end_matches('/')),
        }
    }
}
