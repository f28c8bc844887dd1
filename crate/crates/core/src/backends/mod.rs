//! Captioning, text-to-image and caption-rewrite backends behind one small
//! HTTP/JSON protocol:
//!
//! | route | request | response |
//! |---|---|---|
//! | `POST /v1/caption` | `{"image_b64"}` or `{"image_ref"}` | `{"caption"}` |
//! | `POST /v1/generate` | `{"prompt","guidance_scale","seed","width","height","steps","negative_prompt"}` | `{"image_b64","meta"}` |
//! | `POST /v1/rewrite` | `{"prompt","max_tokens","temperature"}` | `{"text"}` |
//!
//! A [`Transport`] moves canonical request bytes to a backend and returns
//! the response body. Implementations: [`HttpTransport`] (real servers),
//! [`ReplayTransport`] (offline fixtures), [`RecordingTransport`] (fills a
//! replay store while forwarding) and [`WorldBackend`] (the toy world,
//! in-process).

mod conformance;
mod http;
mod payload;
mod protocol;
mod replay;
mod stub;
mod world;

pub use conformance::{run_conformance, ConformanceCheck, ConformanceProbe};
pub use http::{BackendEndpoint, EndpointKind, HttpTransport};
pub use payload::{decode_vector_payload, encode_vector_payload, VECTOR_PAYLOAD_MAGIC};
pub use protocol::{
    canonical_request, request_digest, split_canonical, CaptionRequest, CaptionResponse, GenerateRequest,
    GenerateResponse, Route, RewriteRequest, RewriteResponse,
};
pub use replay::{RecordingTransport, ReplayStore, ReplayTransport, REPLAY_INDEX_FILE};
pub use stub::{Handler, StubServer};
pub use world::{RewriterMode, WorldBackend};

use std::sync::atomic::{AtomicUsize, Ordering};

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptkit::ANSWER_MARKER;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend rejected the request with status {status}: {message}")]
    Rejection { status: u16, message: String },
    #[error("backend returned an empty caption")]
    EmptyCaption,
    #[error("no replay entry for request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("replay store io: {0}")]
    Io(String),
}

/// Carries canonical requests to a backend. Implementations must be safe to
/// share across threads.
pub trait Transport: Send + Sync {
    /// Sends one request and returns the raw response body.
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError>;

    /// Identifier recorded in manifests as the backend that served `route`.
    fn backend_id(&self, route: Route) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub guidance_scale: f64,
    pub width: u32,
    pub height: u32,
    /// Sampler steps. 50 is a convention, not a published setting.
    pub steps: u32,
    /// No negative prompt by default; none is published.
    pub negative_prompt: Option<String>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { guidance_scale: 1.5, width: 512, height: 512, steps: 50, negative_prompt: None }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 1.0) {
            return Err(BackendError::Config(format!("guidance_scale must be >= 1, got {}", self.guidance_scale)));
        }
        if self.width == 0 || self.height == 0 || self.steps == 0 {
            return Err(BackendError::Config("width, height and steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewriteParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for RewriteParams {
    /// 512 tokens at temperature 0.7, the published rewrite settings.
    fn default() -> Self {
        Self { max_tokens: 512, temperature: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub payload: Vec<u8>,
    pub meta: GenerateRequest,
}

fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    transport: &dyn Transport,
    route: Route,
    request: &Req,
) -> Result<Resp, BackendError> {
    let body = serde_json::to_vec(request).expect("protocol bodies serialize");
    let raw = transport.post(route, &body)?;
    serde_json::from_slice(&raw).map_err(|e| BackendError::MalformedResponse(format!("{}: {e}", route.path())))
}

fn clean_caption(resp: CaptionResponse) -> Result<String, BackendError> {
    let caption = resp.caption.trim();
    if caption.is_empty() {
        return Err(BackendError::EmptyCaption);
    }
    Ok(caption.to_string())
}

/// Captions a sample by reference. The caption comes back trimmed.
pub fn caption_sample(transport: &dyn Transport, sample_ref: &str) -> Result<String, BackendError> {
    if sample_ref.is_empty() {
        return Err(BackendError::MalformedRequest("empty sample reference".into()));
    }
    clean_caption(post_json(transport, Route::Caption, &CaptionRequest::by_ref(sample_ref))?)
}

/// Captions raw image bytes (sent base64-encoded).
pub fn caption_bytes(transport: &dyn Transport, image: &[u8]) -> Result<String, BackendError> {
    clean_caption(post_json(transport, Route::Caption, &CaptionRequest::by_bytes(image))?)
}

/// Generates one sample. The response's echo must match the request.
pub fn generate_sample(
    transport: &dyn Transport,
    prompt: &str,
    config: &GenerationConfig,
    seed: u64,
) -> Result<GeneratedSample, BackendError> {
    if prompt.is_empty() {
        return Err(BackendError::MalformedRequest("empty prompt".into()));
    }
    config.validate()?;
    let request = GenerateRequest {
        prompt: prompt.to_string(),
        guidance_scale: config.guidance_scale,
        seed,
        width: config.width,
        height: config.height,
        steps: config.steps,
        negative_prompt: config.negative_prompt.clone(),
    };
    let resp: GenerateResponse = post_json(transport, Route::Generate, &request)?;
    if resp.meta.prompt != request.prompt
        || resp.meta.seed != request.seed
        || resp.meta.guidance_scale != request.guidance_scale
    {
        return Err(BackendError::MalformedResponse("generate echo does not match the request".into()));
    }
    let payload = base64::engine::general_purpose::STANDARD
        .decode(resp.image_b64.as_bytes())
        .map_err(|e| BackendError::MalformedResponse(format!("image_b64: {e}")))?;
    Ok(GeneratedSample { payload, meta: resp.meta })
}

/// Sends a rewrite request built by `promptkit::rewrite_request` and returns
/// the raw completion.
pub fn rewrite_caption(
    transport: &dyn Transport,
    request_text: &str,
    params: &RewriteParams,
) -> Result<String, BackendError> {
    if !request_text.ends_with(ANSWER_MARKER) {
        return Err(BackendError::MalformedRequest(format!("rewrite request must end with {ANSWER_MARKER:?}")));
    }
    let request = RewriteRequest { prompt: request_text.to_string(), max_tokens: params.max_tokens, temperature: params.temperature };
    let resp: RewriteResponse = post_json(transport, Route::Rewrite, &request)?;
    Ok(resp.text)
}

/// Wraps a transport and counts the requests that reach it.
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T: Transport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.post(route, body)
    }

    fn backend_id(&self, route: Route) -> String {
        self.inner.backend_id(route)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        (**self).post(route, body)
    }

    fn backend_id(&self, route: Route) -> String {
        (**self).backend_id(route)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(&'static str);
    impl Transport for Fixed {
        fn post(&self, _: Route, _: &[u8]) -> Result<Vec<u8>, BackendError> {
            Ok(self.0.as_bytes().to_vec())
        }
        fn backend_id(&self, _: Route) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn caption_is_trimmed() {
        assert_eq!(caption_sample(&Fixed(r#"{"caption":"  a dog  "}"#), "x").unwrap(), "a dog");
        assert_eq!(caption_sample(&Fixed(r#"{"caption":"   "}"#), "x"), Err(BackendError::EmptyCaption));
        assert!(matches!(caption_sample(&Fixed("not json"), "x"), Err(BackendError::MalformedResponse(_))));
    }

    #[test]
    fn rewrite_defaults_and_marker() {
        assert_eq!(RewriteParams::default(), RewriteParams { max_tokens: 512, temperature: 0.7 });
        let t = Fixed(r#"{"text":"1. a"}"#);
        assert!(matches!(rewrite_caption(&t, "no marker", &RewriteParams::default()), Err(BackendError::MalformedRequest(_))));
        assert_eq!(rewrite_caption(&t, "x\n# Answer:", &RewriteParams::default()).unwrap(), "1. a");
    }

    #[test]
    fn generation_defaults_and_validation() {
        let c = GenerationConfig::default();
        assert_eq!((c.width, c.height, c.steps, c.guidance_scale), (512, 512, 50, 1.5));
        assert!(c.negative_prompt.is_none());
        assert!(GenerationConfig { guidance_scale: 0.5, ..c.clone() }.validate().is_err());
        assert!(GenerationConfig { width: 0, ..c }.validate().is_err());
    }

    #[test]
    fn echo_mismatch_is_malformed() {
        let t = Fixed(
            r#"{"image_b64":"","meta":{"prompt":"other","guidance_scale":1.5,"seed":1,"width":512,"height":512,"steps":50,"negative_prompt":null}}"#,
        );
        let r = generate_sample(&t, "A photo of tench", &GenerationConfig::default(), 1);
        assert!(matches!(r, Err(BackendError::MalformedResponse(_))));
    }
}
