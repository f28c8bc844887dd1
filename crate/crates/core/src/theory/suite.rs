use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_bound, BoundConfig, TheoryError};
use crate::dataman::{decode_inline_vector, derive_seed};
use crate::promptkit::{build_prompt_set, PromptSet, Template};
use crate::synthworld::presets::{random_world, RandomWorldParams};
use crate::synthworld::{CaptionerQuality, GuidanceKnob, WorldError, WorldSpec};
use crate::trainer::{ModelKind, TrainConfig};

const SUITE_KNOBS: [f64; 6] = [1.0, 1.5, 2.0, 3.0, 5.0, 7.5];

/// Prompts for `m` real draws: basic prompts for `None`, otherwise CiP
/// prompts from the toy captioner at `quality`.
pub fn sample_prompt_set(
    world: &WorldSpec,
    m: usize,
    quality: CaptionerQuality,
    seed: u64,
) -> Result<PromptSet, TheoryError> {
    let mut manifest = world.sample_real(m, seed)?;
    if quality == CaptionerQuality::None {
        return build_prompt_set(&manifest, Template::Basic).map_err(|e| WorldError::Invalid(e.to_string()).into());
    }
    for r in &mut manifest.records {
        let x = decode_inline_vector(&r.sample_ref).expect("sample_real writes inline vectors");
        r.caption = Some(world.synth_caption(&x, quality)?);
    }
    build_prompt_set(&manifest, Template::Cip).map_err(|e| WorldError::Invalid(e.to_string()).into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSuiteSpec {
    pub configs: usize,
    pub seed: u64,
    pub n_mc: usize,
    pub max_classes: usize,
    pub max_prompts: usize,
    pub n_sigma: f64,
    pub train: TrainConfig,
}

impl Default for BoundSuiteSpec {
    /// 200 planar worlds with up to 5 classes and 200 prompts, 5e4 Monte
    /// Carlo draws per risk, 3 sigma.
    fn default() -> Self {
        Self {
            configs: 200,
            seed: 1,
            n_mc: 50_000,
            max_classes: 5,
            max_prompts: 200,
            n_sigma: 3.0,
            train: TrainConfig {
                epochs: 30,
                lr_decay_every: 10,
                model: ModelKind::Mlp { hidden: 16 },
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSuiteCase {
    pub seed: u64,
    pub classes: usize,
    pub prompts: usize,
    pub captioner: CaptionerQuality,
    pub guidance: f64,
    pub r_d: f64,
    pub r_dc: f64,
    pub distance: f64,
    pub sigma_total: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSuiteReport {
    pub spec: BoundSuiteSpec,
    pub held: usize,
    pub cases: Vec<BoundSuiteCase>,
    pub runtime_secs: f64,
}

impl BoundSuiteReport {
    pub fn share_held(&self) -> f64 {
        self.held as f64 / self.cases.len().max(1) as f64
    }
}

/// Checks the bound on `spec.configs` random planar worlds, each with a
/// random prompt set (basic, coarse or fine captions) and guidance value.
pub fn run_bound_suite(spec: &BoundSuiteSpec) -> Result<BoundSuiteReport, TheoryError> {
    spec.train.validate()?;
    if spec.configs == 0 || spec.n_mc == 0 || spec.max_prompts == 0 || spec.max_classes < 2 {
        return Err(WorldError::Invalid("bound suite needs configs, n_mc, max_prompts >= 1 and max_classes >= 2".into()).into());
    }
    let started = Instant::now();
    let params = RandomWorldParams { d: 2, max_classes: spec.max_classes, ..RandomWorldParams::default() };
    let cases = (0..spec.configs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(spec.seed, "bound-suite", i, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let world = random_world(seed, params);
            let m = rng.gen_range(spec.max_prompts.min(10)..=spec.max_prompts);
            let captioner = [CaptionerQuality::None, CaptionerQuality::Coarse, CaptionerQuality::Fine][rng.gen_range(0..3)];
            let guidance = SUITE_KNOBS[rng.gen_range(0..SUITE_KNOBS.len())];
            let prompts = sample_prompt_set(&world, m, captioner, seed)?;
            let cfg = BoundConfig { train: spec.train.clone(), n_train: None, n_mc: spec.n_mc, seed };
            let report = check_bound(&world, &prompts, GuidanceKnob::new(guidance)?, &cfg)?;
            Ok(BoundSuiteCase {
                seed,
                classes: world.k(),
                prompts: m,
                captioner,
                guidance,
                r_d: report.r_d,
                r_dc: report.r_dc,
                distance: report.distance,
                sigma_total: report.sigma_total(),
                holds: report.holds_within(spec.n_sigma),
            })
        })
        .collect::<Result<Vec<_>, TheoryError>>()?;
    Ok(BoundSuiteReport {
        spec: spec.clone(),
        held: cases.iter().filter(|c| c.holds).count(),
        cases,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}
