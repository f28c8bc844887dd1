use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::backends::{BackendEndpoint, EndpointKind, GenerationConfig, RewriteParams, RewriterMode};
use crate::dataman::Provenance;
use crate::promptkit::Template;
use crate::synthworld::{presets, CaptionerQuality, WorldSpec};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Basic,
    Cip,
    ZeroShotCip,
    CipLlm,
    Synthworld,
}

/// How prompts are built. Every mode but `synthworld` is its own strategy;
/// synthworld runs carry one in their world config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Basic,
    Cip,
    ZeroShotCip,
    CipLlm,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Basic, Strategy::Cip, Strategy::ZeroShotCip, Strategy::CipLlm];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Basic => "basic",
            Strategy::Cip => "cip",
            Strategy::ZeroShotCip => "zero-shot-cip",
            Strategy::CipLlm => "cip-llm",
        }
    }

    pub fn from_name(name: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn template(self) -> Template {
        match self {
            Strategy::Basic => Template::Basic,
            Strategy::Cip | Strategy::ZeroShotCip => Template::Cip,
            Strategy::CipLlm => Template::Llm,
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            Strategy::ZeroShotCip => Provenance::SyntheticZeroshot,
            s => s.template().provenance(),
        }
    }

    pub fn uses_captions(self) -> bool {
        self != Strategy::Basic
    }

    /// Whether runs of this strategy pass through `stage`.
    pub fn runs_stage(self, stage: Stage) -> bool {
        match stage {
            Stage::Preliminary => self == Strategy::ZeroShotCip,
            Stage::Caption => self.uses_captions(),
            Stage::Rewrite => self == Strategy::CipLlm,
            _ => true,
        }
    }
}

impl Mode {
    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Mode::Basic => Some(Strategy::Basic),
            Mode::Cip => Some(Strategy::Cip),
            Mode::ZeroShotCip => Some(Strategy::ZeroShotCip),
            Mode::CipLlm => Some(Strategy::CipLlm),
            Mode::Synthworld => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Synthworld => "synthworld",
            m => m.strategy().expect("non-world modes have a strategy").name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        [Mode::Basic, Mode::Cip, Mode::ZeroShotCip, Mode::CipLlm, Mode::Synthworld].into_iter().find(|m| m.name() == name)
    }
}

/// Named toy worlds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorldPreset {
    Symmetric1d { separation: f64 },
    Polysemy { p: f64 },
    Sweep { seed: u64 },
}

impl WorldPreset {
    pub fn build(self) -> WorldSpec {
        match self {
            WorldPreset::Symmetric1d { separation } => presets::symmetric_1d(separation),
            WorldPreset::Polysemy { p } => presets::polysemy_world(p),
            WorldPreset::Sweep { seed } => presets::sweep_world(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldSource {
    Preset(WorldPreset),
    Spec(WorldSpec),
}

impl WorldSource {
    pub fn build(&self) -> WorldSpec {
        match self {
            WorldSource::Preset(p) => p.build(),
            WorldSource::Spec(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub world: WorldSource,
    pub strategy: Strategy,
    #[serde(default = "default_quality")]
    pub captioner: CaptionerQuality,
    #[serde(default)]
    pub rewriter: RewriterMode,
    /// Size of the real training sample `T`.
    pub n_real: usize,
    /// Monte-Carlo draws for risk evaluation.
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    /// Seed of the real sample and of the evaluation draws. Defaults to the
    /// run's global seed; runs that share it are paired.
    #[serde(default)]
    pub sample_seed: Option<u64>,
    /// Also train on the real sample and report its risk.
    #[serde(default)]
    pub baseline_real: bool,
}

fn default_quality() -> CaptionerQuality {
    CaptionerQuality::Fine
}

fn default_n_eval() -> usize {
    20_000
}

impl WorldConfig {
    /// Strategy actually run. A captioner that says nothing leaves only the
    /// class name, so caption-based strategies reduce to basic prompts.
    pub fn effective_strategy(&self) -> Strategy {
        if self.captioner == CaptionerQuality::None {
            Strategy::Basic
        } else {
            self.strategy
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    #[serde(default)]
    pub caption: Option<BackendEndpoint>,
    #[serde(default)]
    pub generate: Option<BackendEndpoint>,
    #[serde(default)]
    pub rewrite: Option<BackendEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Real manifest `T` (every mode but synthworld).
    #[serde(default)]
    pub input_manifest: Option<PathBuf>,
    /// Held-out real manifest used for evaluation, when its samples are
    /// feature vectors.
    #[serde(default)]
    pub test_manifest: Option<PathBuf>,
    #[serde(default)]
    pub world: Option<WorldConfig>,
    #[serde(default)]
    pub backends: BackendsConfig,
    /// Serve every backend request from this replay store.
    #[serde(default)]
    pub replay: Option<PathBuf>,
    /// Record every live backend exchange into this replay store.
    #[serde(default)]
    pub record: Option<PathBuf>,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub rewrite: RewriteParams,
    #[serde(default = "one")]
    pub replicas_per_prompt: usize,
    #[serde(default)]
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub global_seed: u64,
    /// Maximum in-flight backend requests per stage.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn one() -> usize {
    1
}

fn default_concurrency() -> usize {
    4
}

impl PipelineConfig {
    /// A config with defaults everywhere but the required fields.
    pub fn new(mode: Mode, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            input_manifest: None,
            test_manifest: None,
            world: None,
            backends: BackendsConfig::default(),
            replay: None,
            record: None,
            generation: GenerationConfig::default(),
            rewrite: RewriteParams::default(),
            replicas_per_prompt: 1,
            train: TrainConfig::default(),
            output_dir: output_dir.into(),
            global_seed: 0,
            concurrency: default_concurrency(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn strategy(&self) -> Result<Strategy, PipelineError> {
        match (self.mode.strategy(), &self.world) {
            (Some(s), _) => Ok(s),
            (None, Some(w)) => Ok(w.effective_strategy()),
            (None, None) => Err(PipelineError::Config("synthworld mode needs a world config".into())),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.replicas_per_prompt == 0 {
            return bad("replicas_per_prompt must be at least 1".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        self.generation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let strategy = self.strategy()?;
        match self.mode {
            Mode::Synthworld => {
                let w = self.world.as_ref().expect("checked by strategy()");
                w.world.build().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
                if w.n_real == 0 || w.n_eval == 0 {
                    return bad("world n_real and n_eval must be positive".into());
                }
                if self.replay.is_some() || self.record.is_some() {
                    return bad("synthworld runs use the in-process world backend; drop replay/record".into());
                }
            }
            _ => {
                if self.world.is_some() {
                    return bad(format!("mode {} does not take a world config", self.mode.name()));
                }
                if self.input_manifest.is_none() {
                    return bad(format!("mode {} needs input_manifest", self.mode.name()));
                }
                if self.replay.is_some() && self.record.is_some() {
                    return bad("replay and record are mutually exclusive".into());
                }
                if self.replay.is_none() {
                    let need = |ep: &Option<BackendEndpoint>, kind: EndpointKind| -> Result<(), PipelineError> {
                        match ep {
                            None => Err(PipelineError::Config(format!(
                                "mode {} needs a {kind:?} backend or a replay store",
                                self.mode.name()
                            ))),
                            Some(e) if e.kind != kind => {
                                Err(PipelineError::Config(format!("backend for {kind:?} is declared as {:?}", e.kind)))
                            }
                            Some(e) => e.validate().map_err(|e| PipelineError::Config(e.to_string())),
                        }
                    };
                    need(&self.backends.generate, EndpointKind::Generate)?;
                    if strategy.uses_captions() {
                        need(&self.backends.caption, EndpointKind::Caption)?;
                    }
                    if strategy == Strategy::CipLlm {
                        need(&self.backends.rewrite, EndpointKind::Rewrite)?;
                    }
                }
            }
        }
        Ok(())
    }
}
