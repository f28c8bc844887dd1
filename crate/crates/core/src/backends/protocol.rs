//! JSON bodies of the three routes and their canonical byte form.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Caption,
    Generate,
    Rewrite,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::Caption, Route::Generate, Route::Rewrite];

    pub fn path(self) -> &'static str {
        match self {
            Route::Caption => "/v1/caption",
            Route::Generate => "/v1/generate",
            Route::Rewrite => "/v1/rewrite",
        }
    }

    pub fn from_path(path: &str) -> Option<Route> {
        Route::ALL.into_iter().find(|r| r.path() == path)
    }
}

/// Exactly one of the two fields is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl CaptionRequest {
    pub fn by_ref(sample_ref: impl Into<String>) -> Self {
        Self { image_b64: None, image_ref: Some(sample_ref.into()) }
    }

    pub fn by_bytes(bytes: &[u8]) -> Self {
        use base64::Engine;
        Self { image_b64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)), image_ref: None }
    }

    pub fn is_well_formed(&self) -> bool {
        self.image_b64.is_some() != self.image_ref.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub prompt: String,
    pub guidance_scale: f64,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub negative_prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub image_b64: String,
    pub meta: GenerateRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewriteRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RewriteRequest>,
}

/// `POST {path}\n{compact JSON body}`: the bytes a request digest covers.
pub fn canonical_request<T: Serialize>(route: Route, body: &T) -> Vec<u8> {
    let mut out = format!("POST {}\n", route.path()).into_bytes();
    out.extend(serde_json::to_vec(body).expect("protocol bodies serialize"));
    out
}

/// Splits canonical bytes back into route and JSON body.
pub fn split_canonical(bytes: &[u8]) -> Option<(Route, &[u8])> {
    let nl = bytes.iter().position(|b| *b == b'\n')?;
    let head = std::str::from_utf8(&bytes[..nl]).ok()?;
    let route = Route::from_path(head.strip_prefix("POST ")?)?;
    Some((route, &bytes[nl + 1..]))
}

/// Lowercase hex SHA-256 of the canonical request bytes.
pub fn request_digest(canonical: &[u8]) -> String {
    hex::encode(Sha256::digest(canonical))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(seed: u64, g: f64) -> GenerateRequest {
        GenerateRequest {
            prompt: "A photo of tench".into(),
            guidance_scale: g,
            seed,
            width: 512,
            height: 512,
            steps: 50,
            negative_prompt: None,
        }
    }

    #[test]
    fn digest_golden_and_sensitivity() {
        assert_eq!(request_digest(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        let a = canonical_request(Route::Generate, &gen(1, 1.5));
        assert_eq!(request_digest(&a), request_digest(&a.clone()));
        assert_ne!(request_digest(&a), request_digest(&canonical_request(Route::Generate, &gen(2, 1.5))));
    }

    #[test]
    fn wire_forms() {
        let a = canonical_request(Route::Generate, &gen(7, 1.5));
        assert_eq!(
            String::from_utf8(a).unwrap(),
            "POST /v1/generate\n{\"prompt\":\"A photo of tench\",\"guidance_scale\":1.5,\"seed\":7,\"width\":512,\
             \"height\":512,\"steps\":50,\"negative_prompt\":null}"
        );
        let c = serde_json::to_string(&CaptionRequest::by_ref("imagenette/n01440764/0.jpg")).unwrap();
        assert_eq!(c, r#"{"image_ref":"imagenette/n01440764/0.jpg"}"#);
        let r = serde_json::to_string(&RewriteRequest { prompt: "p".into(), max_tokens: 512, temperature: 0.7 }).unwrap();
        assert_eq!(r, r#"{"prompt":"p","max_tokens":512,"temperature":0.7}"#);
    }

    #[test]
    fn guidance_values_round_trip() {
        for g in [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.5] {
            let bytes = serde_json::to_vec(&gen(0, g)).unwrap();
            let text = String::from_utf8(bytes.clone()).unwrap();
            assert!(text.contains(&format!("\"guidance_scale\":{g:.1}")), "{text}");
            assert_eq!(serde_json::from_slice::<GenerateRequest>(&bytes).unwrap(), gen(0, g));
        }
    }

    #[test]
    fn canonical_split_round_trip() {
        for route in Route::ALL {
            let bytes = canonical_request(route, &serde_json::json!({"x": 1}));
            let (r, body) = split_canonical(&bytes).unwrap();
            assert_eq!(r, route);
            assert_eq!(body, br#"{"x":1}"#);
        }
        assert!(split_canonical(b"GET /v1/caption\n{}").is_none());
    }

    #[test]
    fn caption_request_shape() {
        assert!(CaptionRequest::by_ref("a").is_well_formed());
        assert!(CaptionRequest::by_bytes(b"\x89PNG").is_well_formed());
        assert!(!CaptionRequest { image_b64: None, image_ref: None }.is_well_formed());
        assert!(serde_json::from_str::<CaptionRequest>(r#"{"image_url":"x"}"#).is_err());
    }
}
