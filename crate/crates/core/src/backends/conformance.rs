//! Protocol conformance checks against a running backend server. External
//! adapters are expected to pass all of them.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    caption_sample, generate_sample, rewrite_caption, BackendEndpoint, BackendError, EndpointKind, GenerationConfig,
    HttpTransport, RewriteParams, Route,
};
use crate::promptkit::rewrite_request;

/// Inputs the checks send. The sample reference must be one the server can
/// resolve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceProbe {
    pub sample_ref: String,
    pub prompt: String,
    pub class_name: String,
    pub caption: String,
    /// Per-request timeout in seconds.
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl ConformanceCheck {
    fn new(name: &str, result: Result<String, String>) -> Self {
        match result {
            Ok(detail) => Self { name: name.into(), passed: true, detail },
            Err(detail) => Self { name: name.into(), passed: false, detail },
        }
    }
}

fn raw_status(agent: &ureq::Agent, url: &str, body: &[u8]) -> Result<u16, String> {
    match agent.post(url).set("Content-Type", "application/json").send_bytes(body) {
        Ok(r) => Ok(r.status()),
        Err(ureq::Error::Status(s, _)) => Ok(s),
        Err(e) => Err(e.to_string()),
    }
}

fn expect_4xx(status: Result<u16, String>) -> Result<String, String> {
    match status {
        Ok(s) if (400..500).contains(&s) => Ok(format!("status {s}")),
        Ok(s) => Err(format!("expected 4xx, got {s}")),
        Err(e) => Err(e),
    }
}

/// Runs every check against `base_url` and returns one result per check.
pub fn run_conformance(base_url: &str, probe: &ConformanceProbe) -> Result<Vec<ConformanceCheck>, BackendError> {
    let endpoint = |kind| {
        let mut ep = BackendEndpoint::new(base_url, kind);
        ep.timeout = probe.timeout;
        ep.max_retries = 0;
        HttpTransport::new(ep).map(|t| t.with_backoff_base(Duration::ZERO))
    };
    let (captioner, generator, rewriter) =
        (endpoint(EndpointKind::Caption)?, endpoint(EndpointKind::Generate)?, endpoint(EndpointKind::Rewrite)?);
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(probe.timeout)).build();
    let base = base_url.trim_end_matches('/');
    let err = |e: BackendError| e.to_string();
    let mut out = Vec::new();

    out.push(ConformanceCheck::new(
        "caption-by-ref",
        caption_sample(&captioner, &probe.sample_ref).map(|c| format!("caption {c:?}")).map_err(err),
    ));
    out.push(ConformanceCheck::new(
        "caption-rejects-empty-request",
        expect_4xx(raw_status(&agent, &format!("{base}{}", Route::Caption.path()), b"{}")),
    ));
    out.push(ConformanceCheck::new(
        "caption-rejects-invalid-json",
        expect_4xx(raw_status(&agent, &format!("{base}{}", Route::Caption.path()), b"{not json")),
    ));

    let config = GenerationConfig::default();
    let first = generate_sample(&generator, &probe.prompt, &config, 7);
    out.push(ConformanceCheck::new(
        "generate-echo",
        match &first {
            Ok(s) if s.payload.is_empty() => Err("empty payload".into()),
            Ok(s) => Ok(format!("{} payload bytes, guidance {}", s.payload.len(), s.meta.guidance_scale)),
            Err(e) => Err(e.to_string()),
        },
    ));
    out.push(ConformanceCheck::new(
        "generate-deterministic",
        match (&first, &generate_sample(&generator, &probe.prompt, &config, 7)) {
            (Ok(a), Ok(b)) if a.payload == b.payload => Ok("same seed, same payload".into()),
            (Ok(_), Ok(_)) => Err("same seed gave different payloads".into()),
            (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
        },
    ));

    out.push(ConformanceCheck::new(
        "rewrite",
        rewrite_request(&probe.class_name, &probe.caption)
            .map_err(|e| e.to_string())
            .and_then(|req| rewrite_caption(&rewriter, &req, &RewriteParams::default()).map_err(err))
            .and_then(|t| if t.trim().is_empty() { Err("empty text".into()) } else { Ok(format!("{} chars", t.len())) }),
    ));
    out.push(ConformanceCheck::new("unknown-route-404", {
        match raw_status(&agent, &format!("{base}/v1/unknown"), b"{}") {
            Ok(404) => Ok("status 404".into()),
            Ok(s) => Err(format!("expected 404, got {s}")),
            Err(e) => Err(e),
        }
    }));
    Ok(out)
}
