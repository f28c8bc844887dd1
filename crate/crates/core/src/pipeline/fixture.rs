//! The ImageNette replay fixture: three classes with three real images each,
//! their BLIP-2 captions, zero-shot captions of preliminary images and
//! language-model rewrites, served by [`FixtureBackend`] and recorded into a
//! replay store so pipeline runs can be checked offline byte for byte.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::Engine;

use super::config::{Mode, PipelineConfig};
use super::run::{run_pipeline, RunOptions};
use super::{io_error, PipelineError};
use crate::backends::{
    BackendEndpoint, BackendError, CaptionRequest, CaptionResponse, EndpointKind, GenerateRequest, GenerateResponse,
    RewriteRequest, RewriteResponse, Route, StubServer, Transport,
};
use crate::dataman::{derive_seed, save_manifest};
use crate::promptkit::{parse_caption_fixture, CaptionFixture, ANSWER_MARKER, CAPTION_MARKER};

pub const IMAGENETTE_GLOBAL_SEED: u64 = 20_230_915;
/// Guidance used for the fixture runs.
pub const IMAGENETTE_GUIDANCE: f64 = 2.0;
const REF_PREFIX: &str = "imagenette";
const PAYLOAD_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Parsed (real captions, zero-shot captions, rewrites) fixtures.
pub fn imagenette_fixtures() -> (CaptionFixture, CaptionFixture, CaptionFixture) {
    let parse = |text: &str| parse_caption_fixture(text).expect("bundled fixtures parse");
    (
        parse(include_str!("../../fixtures/imagenette_blip2.txt")),
        parse(include_str!("../../fixtures/imagenette_zero_shot.txt")),
        parse(include_str!("../../fixtures/vicuna_rewrites.txt")),
    )
}

/// Deterministic stand-ins for the captioner, the generator and the
/// rewriter over the fixture tables.
///
/// Generated "images" are a PNG signature followed by the request's seed,
/// guidance and prompt. Captioning one of them returns the zero-shot caption
/// of the real sample whose preliminary seed it carries. Rewrites return two
/// of the class's five rewrites, chosen by the caption's position.
pub struct FixtureBackend {
    real_captions: HashMap<String, String>,
    zero_shot_by_seed: HashMap<u64, String>,
    rewrites: HashMap<String, Vec<String>>,
    caption_position: HashMap<(String, String), usize>,
}

fn unprocessable(message: impl Into<String>) -> BackendError {
    BackendError::Rejection { status: 422, message: message.into() }
}

fn parse<T: for<'de> serde::Deserialize<'de>>(body: &[u8]) -> Result<T, BackendError> {
    serde_json::from_slice(body).map_err(|e| BackendError::MalformedRequest(e.to_string()))
}

fn placeholder_image(req: &GenerateRequest) -> Vec<u8> {
    let mut out = PAYLOAD_MAGIC.to_vec();
    out.extend(format!("seed {}\nguidance {:?}\n{}\n", req.seed, req.guidance_scale, req.prompt).into_bytes());
    out
}

fn placeholder_seed(bytes: &[u8]) -> Option<u64> {
    let text = std::str::from_utf8(bytes.strip_prefix(PAYLOAD_MAGIC)?).ok()?;
    text.lines().next()?.strip_prefix("seed ")?.parse().ok()
}

impl FixtureBackend {
    pub fn new(global_seed: u64) -> Self {
        let (real, zero_shot, rewrites) = imagenette_fixtures();
        let real_captions = real.captions(REF_PREFIX).into_iter().collect();
        let mut zero_shot_by_seed = HashMap::new();
        let mut i = 0u64;
        for class in &zero_shot.classes {
            for caption in &class.captions {
                zero_shot_by_seed.insert(derive_seed(global_seed, "preliminary", i, 0), caption.clone());
                i += 1;
            }
        }
        let mut caption_position = HashMap::new();
        for fixture in [&real, &zero_shot] {
            for class in &fixture.classes {
                for (j, c) in class.captions.iter().enumerate() {
                    caption_position.insert((class.name.clone(), c.clone()), j);
                }
            }
        }
        let rewrites = rewrites.classes.into_iter().map(|c| (c.name, c.captions)).collect();
        Self { real_captions, zero_shot_by_seed, rewrites, caption_position }
    }

    fn caption(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: CaptionRequest = parse(body)?;
        let caption = match (&req.image_ref, &req.image_b64) {
            (Some(r), None) => self.real_captions.get(r).cloned(),
            (None, Some(b)) => base64::engine::general_purpose::STANDARD
                .decode(b)
                .ok()
                .and_then(|bytes| placeholder_seed(&bytes))
                .and_then(|seed| self.zero_shot_by_seed.get(&seed).cloned()),
            _ => return Err(BackendError::MalformedRequest("exactly one of image_b64 and image_ref".into())),
        };
        let caption = caption.ok_or_else(|| unprocessable("unknown image"))?;
        Ok(serde_json::to_vec(&CaptionResponse { caption }).expect("serializes"))
    }

    fn generate(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: GenerateRequest = parse(body)?;
        let image_b64 = base64::engine::general_purpose::STANDARD.encode(placeholder_image(&req));
        Ok(serde_json::to_vec(&GenerateResponse { image_b64, meta: req }).expect("serializes"))
    }

    fn rewrite(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: RewriteRequest = parse(body)?;
        let class = req
            .prompt
            .split_once("caption about ")
            .and_then(|(_, rest)| rest.split_once(" category."))
            .map(|(c, _)| c.to_string())
            .ok_or_else(|| unprocessable("no category"))?;
        let caption = req
            .prompt
            .split_once(&format!("{CAPTION_MARKER}\n"))
            .and_then(|(_, rest)| rest.rsplit_once(&format!("\n{ANSWER_MARKER}")))
            .map(|(c, _)| c.to_string())
            .ok_or_else(|| unprocessable("no caption block"))?;
        let pool = self.rewrites.get(&class).ok_or_else(|| unprocessable("unknown class"))?;
        let j = *self.caption_position.get(&(class, caption)).ok_or_else(|| unprocessable("unknown caption"))?;
        let text = format!("1. {}\n2. {}", pool[(2 * j) % pool.len()], pool[(2 * j + 1) % pool.len()]);
        Ok(serde_json::to_vec(&RewriteResponse { text, meta: Some(req) }).expect("serializes"))
    }
}

impl Transport for FixtureBackend {
    fn post(&self, route: Route, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        match route {
            Route::Caption => self.caption(body),
            Route::Generate => self.generate(body),
            Route::Rewrite => self.rewrite(body),
        }
    }

    fn backend_id(&self, route: Route) -> String {
        match route {
            Route::Caption => "blip2",
            Route::Generate => "stable-diffusion-v1-5",
            Route::Rewrite => "vicuna-13b",
        }
        .into()
    }
}

/// Config for an offline fixture run of `mode` (any mode but synthworld).
pub fn imagenette_config(mode: Mode, fixture_root: &Path, output_dir: impl Into<PathBuf>) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(mode, output_dir);
    cfg.input_manifest = Some(fixture_root.join("real.jsonl"));
    cfg.replay = Some(fixture_root.join("replay"));
    cfg.global_seed = IMAGENETTE_GLOBAL_SEED;
    cfg.generation.guidance_scale = IMAGENETTE_GUIDANCE;
    cfg
}

/// Writes `root/real.jsonl` and records every request of a run in each mode
/// into `root/replay`, going through HTTP against a local [`FixtureBackend`].
pub fn build_imagenette_fixture(root: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
    let (real, _, _) = imagenette_fixtures();
    let manifest = real.real_manifest(REF_PREFIX, IMAGENETTE_GLOBAL_SEED);
    save_manifest(&manifest, root.join("real.jsonl"))
        .map_err(|source| PipelineError::Manifest { stage: super::Stage::Real, source })?;

    let backend = FixtureBackend::new(IMAGENETTE_GLOBAL_SEED);
    let ids: HashMap<EndpointKind, String> =
        [EndpointKind::Caption, EndpointKind::Generate, EndpointKind::Rewrite]
            .into_iter()
            .map(|k| (k, backend.backend_id(k.route())))
            .collect();
    let server = StubServer::serve(Arc::new(backend)).map_err(|e| PipelineError::Io(e.to_string()))?;
    let scratch = root.join(".scratch");
    let _ = fs::remove_dir_all(&scratch);
    for mode in [Mode::Basic, Mode::Cip, Mode::ZeroShotCip, Mode::CipLlm] {
        let mut cfg = imagenette_config(mode, root, scratch.join(mode.name()));
        cfg.replay = None;
        cfg.record = Some(root.join("replay"));
        let endpoint = |kind: EndpointKind| {
            let mut ep = BackendEndpoint::new(server.url(), kind);
            ep.name = Some(ids[&kind].clone());
            Some(ep)
        };
        cfg.backends.caption = endpoint(EndpointKind::Caption);
        cfg.backends.generate = endpoint(EndpointKind::Generate);
        cfg.backends.rewrite = endpoint(EndpointKind::Rewrite);
        run_pipeline(&cfg, RunOptions::default())?;
    }
    fs::remove_dir_all(&scratch).map_err(|e| io_error(&scratch, e))
}
