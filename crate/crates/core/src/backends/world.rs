//! The toy world served through the backend protocol, so the pipeline can
//! run end to end without external models.

use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::payload::{decode_vector_payload, encode_vector_payload};
use super::protocol::{CaptionRequest, CaptionResponse, GenerateRequest, GenerateResponse, RewriteRequest, RewriteResponse};
use super::{BackendError, Route, Transport};
use crate::dataman::decode_inline_vector;
use crate::promptkit::{Prompt, Template, ANSWER_MARKER, CAPTION_MARKER};
use crate::synthworld::{CaptionerQuality, GuidanceKnob, WorldSpec};

/// How the toy rewriter treats the world tokens in a caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewriterMode {
    /// Both candidates keep the caption's tokens.
    #[default]
    Preserve,
    /// Both candidates drop the caption and keep only the class name.
    Destroy,
}

/// Captioner, generator and rewriter of one [`WorldSpec`].
///
/// Samples travel as `vec:` references or `CIPV` vector payloads. The
/// generator finds the class by name in the prompt (earliest match, longest
/// name on ties) and uses the guidance scale as the knob and the request
/// seed as its RNG seed.
#[derive(Debug, Clone)]
pub struct WorldBackend {
    world: WorldSpec,
    quality: CaptionerQuality,
    rewriter: RewriterMode,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, BackendError> {
    serde_json::from_slice(body).map_err(|e| BackendError::MalformedRequest(e.to_string()))
}

fn unprocessable(message: impl Into<String>) -> BackendError {
    BackendError::Rejection { status: 422, message: message.into() }
}

impl WorldBackend {
    pub fn new(world: WorldSpec, quality: CaptionerQuality, rewriter: RewriterMode) -> Result<Self, BackendError> {
        world.validate().map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { world, quality, rewriter })
    }

    pub fn world(&self) -> &WorldSpec {
        &self.world
    }

    /// Class named in `text`, if any.
    pub fn class_in_text(&self, text: &str) -> Option<usize> {
        let w = words(text);
        let mut best: Option<(usize, usize, usize)> = None;
        for (ci, c) in self.world.classes.iter().enumerate() {
            let name = words(&c.name);
            if name.is_empty() || name.len() > w.len() {
                continue;
            }
            if let Some(pos) = (0..=w.len() - name.len()).find(|&i| w[i..i + name.len()] == name[..]) {
                let better = match best {
                    None => true,
                    Some((bp, bl, _)) => pos < bp || (pos == bp && name.len() > bl),
                };
                if better {
                    best = Some((pos, name.len(), ci));
                }
            }
        }
        best.map(|b| b.2)
    }

    fn caption(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: CaptionRequest = parse(body)?;
        if !req.is_well_formed() {
            return Err(BackendError::MalformedRequest("exactly one of image_b64 and image_ref is required".into()));
        }
        let x = match (&req.image_ref, &req.image_b64) {
            (Some(r), _) => decode_inline_vector(r),
            (None, Some(b)) => base64::engine::general_purpose::STANDARD
                .decode(b.as_bytes())
                .ok()
                .and_then(|bytes| decode_vector_payload(&bytes)),
            (None, None) => None,
        }
        .ok_or_else(|| unprocessable("sample is not a feature vector"))?;
        let caption = self.world.synth_caption(&x, self.quality).map_err(|e| unprocessable(e.to_string()))?;
        Ok(serde_json::to_vec(&CaptionResponse { caption }).expect("response serializes"))
    }

    fn generate(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: GenerateRequest = parse(body)?;
        let knob = GuidanceKnob::new(req.guidance_scale).map_err(|e| unprocessable(e.to_string()))?;
        let label = self.class_in_text(&req.prompt).ok_or_else(|| unprocessable("prompt names no class"))?;
        let prompt = Prompt { text: req.prompt.clone(), label, source_index: None, template: Template::Cip };
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let x = self.world.synth_generate(&prompt, knob, &mut rng).map_err(|e| unprocessable(e.to_string()))?;
        let image_b64 = base64::engine::general_purpose::STANDARD.encode(encode_vector_payload(&x));
        Ok(serde_json::to_vec(&GenerateResponse { image_b64, meta: req }).expect("response serializes"))
    }

    fn rewrite(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: RewriteRequest = parse(body)?;
        let class = req
            .prompt
            .split_once("caption about ")
            .and_then(|(_, rest)| rest.split_once(" category."))
            .map(|(name, _)| name.to_string())
            .ok_or_else(|| unprocessable("request names no category"))?;
        let caption = req
            .prompt
            .split_once(&format!("{CAPTION_MARKER}\n"))
            .and_then(|(_, rest)| rest.rsplit_once(&format!("\n{ANSWER_MARKER}")))
            .map(|(c, _)| c.trim().to_string())
            .ok_or_else(|| unprocessable("request has no caption block"))?;
        let text = match self.rewriter {
            RewriterMode::Preserve => format!("1. {class} {caption}\n2. a {class} {caption}"),
            RewriterMode::Destroy => format!("1. a {class} somewhere\n2. a {class} elsewhere"),
        };
        Ok(serde_json::to_vec(&RewriteResponse { text, meta: None }).expect("response serializes"))
    }
}

impl Transport for WorldBackend {
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        match route {
            Route::Caption => self.caption(body),
            Route::Generate => self.generate(body),
            Route::Rewrite => self.rewrite(body),
        }
    }

    fn backend_id(&self, route: Route) -> String {
        match route {
            Route::Caption => format!("world:captioner:{}", serde_json::to_value(self.quality).unwrap().as_str().unwrap()),
            Route::Generate => "world:generator".into(),
            Route::Rewrite => format!("world:rewriter:{}", serde_json::to_value(self.rewriter).unwrap().as_str().unwrap()),
        }
    }
}
