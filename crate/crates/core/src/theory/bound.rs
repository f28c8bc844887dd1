use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance_grid, distance_mc, DistanceEstimate, InducedDistribution, TheoryError};
use crate::dataman::derive_seed;
use crate::promptkit::PromptSet;
use crate::synthworld::{BayesRule, GuidanceKnob, WorldSpec};
use crate::trainer::{eval_on_distribution, train, Classifier, Predictor, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub train: TrainConfig,
    /// Size of `S`; `None` means `|S| = |C|`.
    pub n_train: Option<usize>,
    pub n_mc: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStdErrors {
    pub r_d: f64,
    pub r_dc: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub r_d: f64,
    pub r_dc: f64,
    pub distance: f64,
    /// `r_dc + distance - r_d`; the bound asserts it is non-negative.
    pub slack: f64,
    pub std_errors: BoundStdErrors,
    pub distance_estimate: DistanceEstimate,
}

impl BoundReport {
    /// Root-sum-square of the three estimation errors.
    pub fn sigma_total(&self) -> f64 {
        let s = self.std_errors;
        (s.r_d * s.r_d + s.r_dc * s.r_dc + s.distance * s.distance).sqrt()
    }

    /// `r_D <= r_DC + d + n_sigma * sigma_total`.
    pub fn holds_within(&self, n_sigma: f64) -> bool {
        self.slack >= -n_sigma * self.sigma_total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub complexity_term: f64,
    pub distance_term: f64,
}

pub fn decompose_bound(report: &BoundReport) -> BoundTerms {
    BoundTerms { complexity_term: report.r_dc, distance_term: report.distance }
}

/// A classifier trained on a subset of the classes, predicting in the full
/// label space.
struct Remapped {
    inner: Classifier,
    classes: Vec<usize>,
}

impl Predictor for Remapped {
    fn predict(&self, x: &[f64]) -> usize {
        self.classes[self.inner.predict(x)]
    }
}

/// Draws `S` i.i.d. from the induced distribution, labels it with the
/// world's Bayes rule (the labeling function shared by both sides), trains,
/// and estimates both risks plus the distance.
///
/// Classes absent from `S` are dropped from training; the model still
/// predicts in the world's label space.
pub fn check_bound(
    world: &WorldSpec,
    prompts: &PromptSet,
    knob: GuidanceKnob,
    config: &BoundConfig,
) -> Result<BoundReport, TheoryError> {
    world.validate()?;
    let induced = InducedDistribution::new(world, prompts, knob)?;
    check_bound_induced(world, &induced, config)
}

/// [`check_bound`] for an already built (possibly transformed) induced
/// distribution.
pub fn check_bound_induced(
    world: &WorldSpec,
    induced: &InducedDistribution,
    config: &BoundConfig,
) -> Result<BoundReport, TheoryError> {
    let labeler = BayesRule::new(world);
    let n_train = config.n_train.unwrap_or(induced.len()).max(1);

    let mut samples: Vec<(Vec<f64>, usize)> = (0..n_train as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "bound-train", i, 0));
            let x = induced.mixture().sample(&mut rng);
            let y = labeler.label(&x);
            (x, y)
        })
        .collect();
    let mut classes: Vec<usize> = samples.iter().map(|s| s.1).collect();
    classes.sort_unstable();
    classes.dedup();
    for s in &mut samples {
        s.1 = classes.binary_search(&s.1).expect("label was collected");
    }
    let model = Remapped {
        inner: train(&samples, classes.len(), &config.train, derive_seed(config.seed, "bound-model", 0, 0))?,
        classes,
    };

    let r_d = eval_on_distribution(&model, &world.real_mixture(), &labeler, config.n_mc, derive_seed(config.seed, "bound-rd", 0, 0));
    let r_dc = eval_on_distribution(&model, induced.mixture(), &labeler, config.n_mc, derive_seed(config.seed, "bound-rdc", 0, 0));
    let distance = if world.d <= 2 {
        distance_grid(world, induced, None)?
    } else {
        distance_mc(world, induced, config.n_mc, derive_seed(config.seed, "bound-distance", 0, 0))?
    };
    Ok(BoundReport {
        r_d: r_d.risk,
        r_dc: r_dc.risk,
        distance: distance.value,
        slack: r_dc.risk + distance.value - r_d.risk,
        std_errors: BoundStdErrors { r_d: r_d.std_error, r_dc: r_dc.std_error, distance: distance.tolerance },
        distance_estimate: distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataman::{encode_inline_vector, Manifest, Record};
    use crate::promptkit::{build_prompt_set, Template};
    use crate::synthworld::{presets, CaptionerQuality};

    fn fast() -> TrainConfig {
        TrainConfig { epochs: 30, lr_decay_every: 10, ..TrainConfig::default() }
    }

    #[test]
    fn projection() {
        let r = BoundReport {
            r_d: 0.2,
            r_dc: 0.1,
            distance: 0.3,
            slack: 0.2,
            std_errors: BoundStdErrors { r_d: 0.0, r_dc: 0.0, distance: 0.0 },
            distance_estimate: DistanceEstimate {
                value: 0.3,
                method: super::super::DistanceMethod::Grid,
                tolerance: 0.0,
                grid: None,
                n_mc: None,
            },
        };
        assert_eq!(decompose_bound(&r), BoundTerms { complexity_term: 0.1, distance_term: 0.3 });
    }

    /// One fine-caption prompt per single-mode class reproduces the real
    /// distribution exactly.
    #[test]
    fn degenerate_equality() {
        let w = presets::symmetric_1d(1.5);
        let mut m = Manifest::new(w.class_map(), 0);
        for (label, x) in [(0, -1.5), (1, 1.5)] {
            let mut r = Record::real(0, encode_inline_vector(&[x]), label);
            r.caption = Some(w.synth_caption(&[x], CaptionerQuality::Fine).unwrap());
            m.push(r).unwrap();
        }
        let prompts = build_prompt_set(&m, Template::Cip).unwrap();
        let cfg = BoundConfig { train: fast(), n_train: Some(400), n_mc: 50_000, seed: 3 };
        let rep = check_bound(&w, &prompts, GuidanceKnob::new(1.0).unwrap(), &cfg).unwrap();
        let s = rep.sigma_total();
        assert!(rep.distance.abs() <= 3.0 * s.max(1e-6), "{rep:?}");
        assert!((rep.r_d - rep.r_dc).abs() <= 3.0 * s, "{rep:?}");
        assert!(rep.holds_within(3.0));
    }

    #[test]
    fn shifting_prompts_increases_distance() {
        let w = presets::polysemy_world(0.5);
        let m = w.sample_real(60, 1).unwrap();
        let prompts = build_prompt_set(&m, Template::Basic).unwrap();
        let g = GuidanceKnob::new(1.0).unwrap();
        let ind = InducedDistribution::new(&w, &prompts, g).unwrap();
        let base = distance_grid(&w, &ind, None).unwrap();
        let moved = distance_grid(&w, &ind.shifted(&[5.0 * w.sigma, 0.0]), None).unwrap();
        assert!(moved.value > base.value + moved.tolerance + base.tolerance);
        let cfg = BoundConfig { train: fast(), n_train: None, n_mc: 20_000, seed: 5 };
        assert!(check_bound(&w, &prompts, g, &cfg).unwrap().holds_within(3.0));
        let shifted = check_bound_induced(&w, &ind.shifted(&[5.0 * w.sigma, 0.0]), &cfg).unwrap();
        assert!(shifted.holds_within(3.0), "{shifted:?}");
    }
}
