use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Mode, PipelineConfig, Strategy};
use super::exec::{run_ordered, OrderedError};
use super::{io_error, PipelineError, Stage, RESOLVED_CONFIG_FILE, SAMPLES_DIR};
use crate::backends::{
    caption_bytes, caption_sample, decode_vector_payload, generate_sample, rewrite_caption, BackendError,
    GenerationConfig, HttpTransport, RecordingTransport, ReplayStore, ReplayTransport, Route, Transport, WorldBackend,
};
use crate::dataman::{
    derive_seed, encode_inline_vector, load_manifest, manifest_to_bytes, repair_torn_tail, save_manifest, ClassMap,
    Manifest, ManifestWriter, Provenance, Record, INLINE_MAX_DIM,
};
use crate::promptkit::{basic_prompt, build_prompt_set, postprocess_llm_output, rewrite_request, select_candidate};
use crate::synthworld::WorldSpec;
use crate::trainer::{eval_on_set, eval_on_world, load_classifier, save_classifier, train, write_classifier, Classifier, RiskReport};

pub const REPORT_VERSION: u32 = 1;

/// Guidance of the preliminary basic-prompt pass of zero-shot runs,
/// whatever the final guidance.
pub const PRELIMINARY_GUIDANCE: f64 = 1.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue a run found in the output directory.
    pub resume: bool,
    /// Stop cleanly once this stage is checkpointed.
    pub stop_after: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub real: usize,
    pub preliminary: Option<usize>,
    pub captions: Option<usize>,
    pub rewrites: Option<usize>,
    pub prompts: usize,
    pub synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub evaluated: bool,
    /// Why evaluation was skipped.
    pub reason: Option<String>,
    pub risk: Option<RiskReport>,
    /// Risk of the same model class trained on the real sample instead.
    pub real_baseline: Option<RiskReport>,
}

impl Evaluation {
    fn skipped(reason: impl Into<String>) -> Self {
        Self { evaluated: false, reason: Some(reason.into()), risk: None, real_baseline: None }
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.risk.as_ref().map(|r| r.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub report_version: u32,
    pub mode: Mode,
    pub strategy: Strategy,
    pub global_seed: u64,
    pub guidance_scale: f64,
    pub replicas_per_prompt: usize,
    pub counts: StageCounts,
    pub label_counts: Vec<usize>,
    /// Backend that served each route used by the run.
    pub backends: BTreeMap<String, String>,
    pub synthetic_sha256: String,
    pub classifier_sha256: Option<String>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed { synthetic: Manifest, report: PipelineReport },
    Stopped { after: Stage },
}

struct Backends {
    caption: Arc<dyn Transport>,
    generate: Arc<dyn Transport>,
    rewrite: Arc<dyn Transport>,
}

/// A transport for routes the run never uses.
struct Unconfigured;

impl Transport for Unconfigured {
    fn post(&self, route: Route, _: &[u8]) -> Result<Vec<u8>, BackendError> {
        Err(BackendError::Config(format!("no backend configured for {}", route.path())))
    }

    fn backend_id(&self, _: Route) -> String {
        "none".into()
    }
}

fn backend_config(e: BackendError) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn build_backends(cfg: &PipelineConfig, world: Option<&WorldSpec>) -> Result<Backends, PipelineError> {
    if let (Some(world), Some(w)) = (world, &cfg.world) {
        let b: Arc<dyn Transport> =
            Arc::new(WorldBackend::new(world.clone(), w.captioner, w.rewriter).map_err(backend_config)?);
        return Ok(Backends { caption: b.clone(), generate: b.clone(), rewrite: b });
    }
    if let Some(dir) = &cfg.replay {
        if !dir.join(crate::backends::REPLAY_INDEX_FILE).exists() {
            return Err(PipelineError::Config(format!("{} is not a replay store", dir.display())));
        }
        let t: Arc<dyn Transport> = Arc::new(ReplayTransport::open(dir).map_err(backend_config)?);
        return Ok(Backends { caption: t.clone(), generate: t.clone(), rewrite: t });
    }
    let store = match &cfg.record {
        Some(dir) => Some(Arc::new(ReplayStore::open(dir).map_err(backend_config)?)),
        None => None,
    };
    let make = |ep: &Option<crate::backends::BackendEndpoint>| -> Result<Arc<dyn Transport>, PipelineError> {
        let Some(ep) = ep else { return Ok(Arc::new(Unconfigured)) };
        let http = HttpTransport::new(ep.clone()).map_err(backend_config)?;
        Ok(match &store {
            Some(s) => Arc::new(RecordingTransport::new(http, s.clone())),
            None => Arc::new(http),
        })
    };
    Ok(Backends {
        caption: make(&cfg.backends.caption)?,
        generate: make(&cfg.backends.generate)?,
        rewrite: make(&cfg.backends.rewrite)?,
    })
}

enum WorkError {
    Backend(BackendError),
    Other(String),
}

impl From<BackendError> for WorkError {
    fn from(e: BackendError) -> Self {
        WorkError::Backend(e)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| io_error(Path::new(&tmp), e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    opts: RunOptions,
    dir: Option<PathBuf>,
    strategy: Strategy,
    world: Option<WorldSpec>,
    backends: Backends,
}

impl Run<'_> {
    fn path(&self, stage: Stage) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(stage.file()))
    }

    fn stop_here(&self, stage: Stage) -> bool {
        self.opts.stop_after == Some(stage)
    }

    /// A stage computed in one piece with no backend calls.
    fn whole_stage(
        &self,
        stage: Stage,
        compute: impl FnOnce() -> Result<Manifest, PipelineError>,
    ) -> Result<Manifest, PipelineError> {
        let Some(path) = self.path(stage) else { return compute() };
        if self.opts.resume && path.exists() {
            return load_manifest(&path).map_err(|source| PipelineError::Manifest { stage, source });
        }
        let m = compute()?;
        save_manifest(&m, &path).map_err(|source| PipelineError::Manifest { stage, source })?;
        Ok(m)
    }

    /// A stage of `expected` records, each produced by one or more backend
    /// calls and appended to the checkpoint as soon as all earlier records
    /// are in.
    fn record_stage<W>(&self, stage: Stage, class_map: &ClassMap, expected: usize, work: W) -> Result<Manifest, PipelineError>
    where
        W: Fn(usize) -> Result<Record, WorkError> + Sync,
    {
        let manifest_err = |source| PipelineError::Manifest { stage, source };
        let mut manifest = Manifest::new(class_map.clone(), self.cfg.global_seed);
        let mut writer = None;
        if let Some(path) = self.path(stage) {
            if self.opts.resume && path.exists() {
                repair_torn_tail(&path).map_err(manifest_err)?;
                manifest = load_manifest(&path).map_err(manifest_err)?;
                if manifest.len() > expected {
                    return Err(PipelineError::Stage {
                        stage,
                        indices: vec![],
                        message: format!("checkpoint has {} records, expected {expected}", manifest.len()),
                    });
                }
                if manifest.len() < expected {
                    writer = Some(ManifestWriter::open(&path).map_err(manifest_err)?);
                }
            } else {
                writer = Some(ManifestWriter::create(&path, class_map.clone(), self.cfg.global_seed).map_err(manifest_err)?);
            }
        }
        let start = manifest.len();
        let result = run_ordered(start, expected, self.cfg.concurrency, work, |batch: Vec<Record>| {
            if let Some(w) = writer.as_mut() {
                w.append(&batch)?;
            }
            manifest.records.extend(batch);
            Ok(())
        });
        match result {
            Ok(()) => Ok(manifest),
            Err(OrderedError::Commit(source)) => Err(PipelineError::Manifest { stage, source }),
            Err(OrderedError::Work { indices, error: WorkError::Backend(source) }) => {
                Err(PipelineError::Backend { stage, indices, source })
            }
            Err(OrderedError::Work { indices, error: WorkError::Other(message) }) => {
                Err(PipelineError::Stage { stage, indices, message })
            }
        }
    }

    /// Turns a generated payload into a sample reference: inline for small
    /// feature vectors, otherwise a file under `samples/`.
    fn store_payload(&self, stage: Stage, index: usize, payload: &[u8]) -> Result<String, WorkError> {
        if let Some(v) = decode_vector_payload(payload).filter(|v| !v.is_empty() && v.len() <= INLINE_MAX_DIM) {
            return Ok(encode_inline_vector(&v));
        }
        let Some(dir) = &self.dir else {
            return Err(WorkError::Other("payload is not a small feature vector and the run has no output directory".into()));
        };
        let ext = if payload.starts_with(b"\x89PNG") { "png" } else { "bin" };
        let rel = format!("{SAMPLES_DIR}/{}-{index:08}.{ext}", stage.name());
        let path = dir.join(&rel);
        let mut tmp = path.as_os_str().to_os_string();
        tmp.push(".tmp");
        fs::write(&tmp, payload)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| WorkError::Other(format!("{}: {e}", path.display())))?;
        Ok(rel)
    }

    fn caption_of(&self, sample_ref: &str) -> Result<String, WorkError> {
        let t = self.backends.caption.as_ref();
        match &self.dir {
            Some(dir) if sample_ref.starts_with(&format!("{SAMPLES_DIR}/")) => {
                let bytes = fs::read(dir.join(sample_ref)).map_err(|e| WorkError::Other(format!("{sample_ref}: {e}")))?;
                Ok(caption_bytes(t, &bytes)?)
            }
            _ => Ok(caption_sample(t, sample_ref)?),
        }
    }

    fn generation(&self, guidance: f64) -> GenerationConfig {
        GenerationConfig { guidance_scale: guidance, ..self.cfg.generation.clone() }
    }

    fn real_stage(&self) -> Result<Manifest, PipelineError> {
        self.whole_stage(Stage::Real, || {
            let mut m = match (&self.world, &self.cfg.world) {
                (Some(world), Some(w)) => {
                    let seed = w.sample_seed.unwrap_or(self.cfg.global_seed);
                    world.sample_real(w.n_real, seed).map_err(|e| PipelineError::Config(e.to_string()))?
                }
                _ => {
                    let path = self.cfg.input_manifest.as_ref().expect("validated");
                    load_manifest(path).map_err(|source| PipelineError::Manifest { stage: Stage::Real, source })?
                }
            };
            if m.is_empty() {
                return Err(PipelineError::Stage { stage: Stage::Real, indices: vec![], message: "real manifest is empty".into() });
            }
            m.global_seed = self.cfg.global_seed;
            Ok(m)
        })
    }

    fn preliminary_stage(&self, real: &Manifest) -> Result<Manifest, PipelineError> {
        let gen = self.generation(PRELIMINARY_GUIDANCE);
        let id = self.backends.generate.backend_id(Route::Generate);
        self.record_stage(Stage::Preliminary, &real.class_map, real.len(), |i| {
            let src = &real.records[i];
            let name = real.class_map.name(src.label).expect("validated label");
            let prompt = basic_prompt(name).map_err(|e| WorkError::Other(e.to_string()))?;
            let seed = derive_seed(self.cfg.global_seed, "preliminary", i as u64, 0);
            let sample = generate_sample(self.backends.generate.as_ref(), &prompt, &gen, seed)?;
            Ok(Record {
                index: i as u64,
                sample_ref: self.store_payload(Stage::Preliminary, i, &sample.payload)?,
                label: src.label,
                caption: None,
                prompt: Some(prompt),
                seed: Some(seed),
                provenance: Provenance::SyntheticBasic,
                backend_id: Some(id.clone()),
            })
        })
    }

    fn caption_stage(&self, source: &Manifest) -> Result<Manifest, PipelineError> {
        let id = self.backends.caption.backend_id(Route::Caption);
        self.record_stage(Stage::Caption, &source.class_map, source.len(), |i| {
            let src = &source.records[i];
            Ok(Record { caption: Some(self.caption_of(&src.sample_ref)?), backend_id: Some(id.clone()), ..src.clone() })
        })
    }

    fn rewrite_stage(&self, captions: &Manifest) -> Result<Manifest, PipelineError> {
        let id = self.backends.rewrite.backend_id(Route::Rewrite);
        let other = |e: crate::promptkit::PromptError| WorkError::Other(e.to_string());
        self.record_stage(Stage::Rewrite, &captions.class_map, captions.len(), |i| {
            let src = &captions.records[i];
            let name = captions.class_map.name(src.label).expect("validated label");
            let caption = src.caption.as_deref().unwrap_or_default();
            let request = rewrite_request(name, caption).map_err(other)?;
            let text = rewrite_caption(self.backends.rewrite.as_ref(), &request, &self.cfg.rewrite)?;
            // Completions may or may not echo the request; parse what follows
            // the last answer marker either way.
            let full = if text.contains("# Answer") { text } else { format!("{request}\n{text}") };
            let candidates = postprocess_llm_output(&full).map_err(other)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.global_seed, "llm-select", i as u64, 0));
            let chosen = select_candidate(&candidates, &mut rng).map_err(other)?;
            Ok(Record { caption: Some(chosen), backend_id: Some(id.clone()), ..src.clone() })
        })
    }

    fn prompts_stage(&self, source: &Manifest) -> Result<Manifest, PipelineError> {
        self.whole_stage(Stage::Prompts, || {
            let set = build_prompt_set(source, self.strategy.template()).map_err(|e| PipelineError::Stage {
                stage: Stage::Prompts,
                indices: match &e {
                    crate::promptkit::PromptError::MissingCaption { indices } => indices.clone(),
                    _ => vec![],
                },
                message: e.to_string(),
            })?;
            let mut m = Manifest::new(source.class_map.clone(), self.cfg.global_seed);
            m.records = source
                .records
                .iter()
                .zip(set.prompts())
                .map(|(r, p)| Record { prompt: Some(p.text.clone()), ..r.clone() })
                .collect();
            Ok(m)
        })
    }

    fn generate_stage(&self, prompts: &Manifest) -> Result<Manifest, PipelineError> {
        let reps = self.cfg.replicas_per_prompt;
        let gen = self.generation(self.cfg.generation.guidance_scale);
        let id = self.backends.generate.backend_id(Route::Generate);
        let provenance = self.strategy.provenance();
        self.record_stage(Stage::Generate, &prompts.class_map, prompts.len() * reps, |j| {
            let (i, r) = (j / reps, j % reps);
            let src = &prompts.records[i];
            let prompt = src.prompt.clone().expect("prompt stage sets every prompt");
            let seed = derive_seed(self.cfg.global_seed, "generate", i as u64, r as u64);
            let sample = generate_sample(self.backends.generate.as_ref(), &prompt, &gen, seed)?;
            Ok(Record {
                index: j as u64,
                sample_ref: self.store_payload(Stage::Generate, j, &sample.payload)?,
                label: src.label,
                caption: src.caption.clone(),
                prompt: Some(prompt),
                seed: Some(seed),
                provenance,
                backend_id: Some(id.clone()),
            })
        })
    }

    fn train_stage(&self, synthetic: &Manifest) -> Result<Result<Classifier, String>, PipelineError> {
        let stage = Stage::Train;
        let Ok(samples) = synthetic.feature_vectors() else {
            return Ok(Err("synthetic samples are images, not feature vectors; train on them externally".into()));
        };
        if let Some(path) = self.path(stage) {
            if self.opts.resume && path.exists() {
                return Ok(Ok(load_classifier(&path).map_err(|source| PipelineError::Train { stage, source })?));
            }
        }
        let seed = derive_seed(self.cfg.global_seed, "train", 0, 0);
        let model = train(&samples, synthetic.class_map.len(), &self.cfg.train, seed)
            .map_err(|source| PipelineError::Train { stage, source })?;
        if let Some(path) = self.path(stage) {
            save_classifier(&model, &path).map_err(|source| PipelineError::Train { stage, source })?;
        }
        Ok(Ok(model))
    }

    fn eval_stage(&self, real: &Manifest, model: &Result<Classifier, String>) -> Result<Evaluation, PipelineError> {
        let stage = Stage::Eval;
        let model = match model {
            Ok(m) => m,
            Err(reason) => return Ok(Evaluation::skipped(reason.clone())),
        };
        if let (Some(world), Some(w)) = (&self.world, &self.cfg.world) {
            let eval_seed = derive_seed(w.sample_seed.unwrap_or(self.cfg.global_seed), "eval", 0, 0);
            let risk = eval_on_world(model, world, w.n_eval, eval_seed);
            let real_baseline = if w.baseline_real {
                let samples = real.feature_vectors().map_err(|source| PipelineError::Manifest { stage, source })?;
                let seed = derive_seed(self.cfg.global_seed, "train-real", 0, 0);
                let base = train(&samples, world.k(), &self.cfg.train, seed)
                    .map_err(|source| PipelineError::Train { stage, source })?;
                Some(eval_on_world(&base, world, w.n_eval, eval_seed))
            } else {
                None
            };
            return Ok(Evaluation { evaluated: true, reason: None, risk: Some(risk), real_baseline });
        }
        let Some(path) = &self.cfg.test_manifest else {
            return Ok(Evaluation::skipped("no test_manifest configured"));
        };
        let test = load_manifest(path).map_err(|source| PipelineError::Manifest { stage, source })?;
        let Ok(samples) = test.feature_vectors() else {
            return Ok(Evaluation::skipped("test samples are not feature vectors"));
        };
        let risk = eval_on_set(model, &samples).map_err(|source| PipelineError::Train { stage, source })?;
        Ok(Evaluation { evaluated: true, reason: None, risk: Some(risk), real_baseline: None })
    }

    fn execute(&self) -> Result<RunOutcome, PipelineError> {
        macro_rules! checkpoint {
            ($stage:expr) => {
                if self.stop_here($stage) {
                    return Ok(RunOutcome::Stopped { after: $stage });
                }
            };
        }
        let real = self.real_stage()?;
        checkpoint!(Stage::Real);
        let mut counts =
            StageCounts { real: real.len(), preliminary: None, captions: None, rewrites: None, prompts: 0, synthetic: 0 };
        let mut routes = vec![Route::Generate];
        let mut source = real.clone();
        if self.strategy == Strategy::ZeroShotCip {
            source = self.preliminary_stage(&real)?;
            counts.preliminary = Some(source.len());
            checkpoint!(Stage::Preliminary);
        }
        if self.strategy.uses_captions() {
            source = self.caption_stage(&source)?;
            counts.captions = Some(source.len());
            routes.push(Route::Caption);
            checkpoint!(Stage::Caption);
        }
        if self.strategy == Strategy::CipLlm {
            source = self.rewrite_stage(&source)?;
            counts.rewrites = Some(source.len());
            routes.push(Route::Rewrite);
            checkpoint!(Stage::Rewrite);
        }
        let prompts = self.prompts_stage(&source)?;
        counts.prompts = prompts.len();
        checkpoint!(Stage::Prompts);
        let synthetic = self.generate_stage(&prompts)?;
        counts.synthetic = synthetic.len();
        checkpoint!(Stage::Generate);
        let model = self.train_stage(&synthetic)?;
        checkpoint!(Stage::Train);
        let evaluation = self.eval_stage(&real, &model)?;

        let backends = routes
            .into_iter()
            .map(|r| {
                let t = match r {
                    Route::Caption => &self.backends.caption,
                    Route::Generate => &self.backends.generate,
                    Route::Rewrite => &self.backends.rewrite,
                };
                (r.path().to_string(), t.backend_id(r))
            })
            .collect();
        let report = PipelineReport {
            report_version: REPORT_VERSION,
            mode: self.cfg.mode,
            strategy: self.strategy,
            global_seed: self.cfg.global_seed,
            guidance_scale: self.cfg.generation.guidance_scale,
            replicas_per_prompt: self.cfg.replicas_per_prompt,
            counts,
            label_counts: synthetic.label_counts(),
            backends,
            synthetic_sha256: sha256_hex(&manifest_to_bytes(&synthetic)),
            classifier_sha256: model.as_ref().ok().map(|m| sha256_hex(write_classifier(m).as_bytes())),
            evaluation,
        };
        if let Some(path) = self.path(Stage::Eval) {
            write_atomic(&path, &report_bytes(&report))?;
        }
        Ok(RunOutcome::Completed { synthetic, report })
    }
}

/// Canonical report bytes: pretty JSON with a trailing newline.
pub(crate) fn report_bytes<T: Serialize>(report: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("reports serialize");
    bytes.push(b'\n');
    bytes
}

fn prepare(cfg: &PipelineConfig) -> Result<(Strategy, Option<WorldSpec>), PipelineError> {
    cfg.validate()?;
    let strategy = cfg.strategy()?;
    let world = cfg.world.as_ref().map(|w| w.world.build());
    Ok((strategy, world))
}

/// Runs every stage in `cfg.output_dir`, checkpointing as it goes.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> Result<RunOutcome, PipelineError> {
    let (strategy, world) = prepare(cfg)?;
    let dir = cfg.output_dir.clone();
    let resolved = report_bytes(cfg);
    let resolved_path = dir.join(RESOLVED_CONFIG_FILE);
    if resolved_path.exists() {
        if !opts.resume {
            return Err(PipelineError::Config(format!(
                "{} already holds a run; resume it or choose another output_dir",
                dir.display()
            )));
        }
        let previous = fs::read(&resolved_path).map_err(|e| io_error(&resolved_path, e))?;
        if previous != resolved {
            return Err(PipelineError::Config("resumed run has a different resolved config".into()));
        }
    } else {
        fs::create_dir_all(dir.join(SAMPLES_DIR)).map_err(|e| io_error(&dir, e))?;
        write_atomic(&resolved_path, &resolved)?;
    }
    let backends = build_backends(cfg, world.as_ref())?;
    Run { cfg, opts, dir: Some(dir), strategy, world, backends }.execute()
}

/// Runs every stage without touching the disk. Generated payloads must be
/// small feature vectors.
pub fn run_in_memory(cfg: &PipelineConfig) -> Result<(Manifest, PipelineReport), PipelineError> {
    let (strategy, world) = prepare(cfg)?;
    let backends = build_backends(cfg, world.as_ref())?;
    let run = Run { cfg, opts: RunOptions::default(), dir: None, strategy, world, backends };
    match run.execute()? {
        RunOutcome::Completed { synthetic, report } => Ok((synthetic, report)),
        RunOutcome::Stopped { .. } => unreachable!("no stop point is set"),
    }
}

fn run_strategy(cfg: &PipelineConfig, want: Strategy) -> Result<(Manifest, PipelineReport), PipelineError> {
    let got = cfg.strategy()?;
    if got != want {
        return Err(PipelineError::Config(format!("expected a {} run, config is {}", want.name(), got.name())));
    }
    match run_pipeline(cfg, RunOptions { resume: true, stop_after: None })? {
        RunOutcome::Completed { synthetic, report } => Ok((synthetic, report)),
        RunOutcome::Stopped { .. } => unreachable!("no stop point is set"),
    }
}

/// Caption, concatenate, generate, train and evaluate.
pub fn run_cip(cfg: &PipelineConfig) -> Result<(Manifest, PipelineReport), PipelineError> {
    run_strategy(cfg, Strategy::Cip)
}

/// Basic-prompt preliminary pass at guidance 1.5, captioned, then
/// regenerated with caption prompts.
pub fn run_zero_shot(cfg: &PipelineConfig) -> Result<(Manifest, PipelineReport), PipelineError> {
    run_strategy(cfg, Strategy::ZeroShotCip)
}

/// CiP with every caption rewritten by a language model first.
pub fn run_llm_variant(cfg: &PipelineConfig) -> Result<(Manifest, PipelineReport), PipelineError> {
    run_strategy(cfg, Strategy::CipLlm)
}
