//! The prompt-induced distribution of a prompt set, the integrated density
//! gap `d(P, Q) = integral |p - q|`, and an empirical check of
//! `R_D(h) <= R_DC(h) + d(X, X_C)`.
//!
//! `d` is the unhalved integral, so it ranges over `[0, 2]` (twice the total
//! variation distance). The expectation in its definition is read as
//! integration against Lebesgue measure, which is what makes the bound's
//! proof go through.

mod bound;
mod distance;
mod suite;

pub use bound::{check_bound, check_bound_induced, decompose_bound, BoundConfig, BoundReport, BoundStdErrors, BoundTerms};
pub use suite::{run_bound_suite, sample_prompt_set, BoundSuiteCase, BoundSuiteReport, BoundSuiteSpec};
pub use distance::{distance_grid, distance_mc, grid_distance, mc_distance, DistanceEstimate, DistanceMethod, GridSpec};

use thiserror::Error;

use crate::promptkit::PromptSet;
use crate::synthworld::{Component, GaussianMixture, GuidanceKnob, ModeRef, WorldError, WorldSpec};
use crate::trainer::TrainError;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("prompt set is empty")]
    EmptyPromptSet,
    #[error("grid quadrature needs d <= 2, got d = {0}")]
    DimensionTooHigh(usize),
    #[error("grid covers only {covered:.6} of the probability mass (need >= {required})")]
    GridCoverage { covered: f64, required: f64 },
    #[error("grid needs at least 2 points per axis with lo < hi")]
    InvalidGrid,
    #[error("distributions have different dimensions")]
    DimensionMismatch,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// `X_C = (1/|C|) sum_i P(s | t_i)` for a prompt set `C`.
#[derive(Debug, Clone)]
pub struct InducedDistribution {
    conditionals: Vec<GaussianMixture>,
    mixture: GaussianMixture,
    targets: Vec<(ModeRef, f64)>,
    knob: GuidanceKnob,
}

impl InducedDistribution {
    pub fn new(world: &WorldSpec, prompts: &PromptSet, knob: GuidanceKnob) -> Result<Self, TheoryError> {
        if prompts.is_empty() {
            return Err(TheoryError::EmptyPromptSet);
        }
        let n = prompts.len() as f64;
        let var = world.sigma * world.sigma / knob.value();
        let mut conditionals = Vec::with_capacity(prompts.len());
        let mut targets: Vec<(ModeRef, f64)> = Vec::new();
        for p in prompts.prompts() {
            let resolved = world.resolve_targets(p, knob)?;
            for &(r, w) in &resolved {
                match targets.iter_mut().find(|(t, _)| *t == r) {
                    Some((_, tw)) => *tw += w / n,
                    None => targets.push((r, w / n)),
                }
            }
            let comps = resolved
                .into_iter()
                .map(|(r, w)| Component { mean: world.mode_mean(r).to_vec(), var, weight: w })
                .collect();
            conditionals.push(GaussianMixture::new(world.d, comps));
        }
        let comps = targets
            .iter()
            .map(|&(r, w)| Component { mean: world.mode_mean(r).to_vec(), var, weight: w })
            .collect();
        let mixture = GaussianMixture::new(world.d, comps);
        Ok(Self { conditionals, mixture, targets, knob })
    }

    pub fn len(&self) -> usize {
        self.conditionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditionals.is_empty()
    }

    pub fn knob(&self) -> GuidanceKnob {
        self.knob
    }

    /// Uniform weight `1 / |C|` carried by each prompt's conditional.
    pub fn component_weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn conditional(&self, i: usize) -> &GaussianMixture {
        &self.conditionals[i]
    }

    /// The induced distribution as one flat Gaussian mixture (conditionals
    /// merged by generator target).
    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    /// Total weight the induced distribution gives to one generator target.
    pub fn target_weight(&self, r: ModeRef) -> f64 {
        self.targets.iter().find(|(t, _)| *t == r).map_or(0.0, |(_, w)| *w)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.mixture.density(x)
    }

    /// The defining average `(1/|C|) sum_i p_i(x)`, evaluated prompt by prompt.
    pub fn density_by_average(&self, x: &[f64]) -> f64 {
        self.conditionals.iter().map(|c| c.density(x)).sum::<f64>() / self.len() as f64
    }

    /// The same distribution with every component mean moved by `delta`.
    pub fn shifted(&self, delta: &[f64]) -> Self {
        let shift = |m: &GaussianMixture| {
            GaussianMixture::new(
                m.dim(),
                m.components()
                    .iter()
                    .map(|c| Component {
                        mean: c.mean.iter().zip(delta).map(|(a, b)| a + b).collect(),
                        ..c.clone()
                    })
                    .collect(),
            )
        };
        Self {
            conditionals: self.conditionals.iter().map(shift).collect(),
            mixture: shift(&self.mixture),
            targets: Vec::new(),
            knob: self.knob,
        }
    }
}

/// Density of the prompt-induced distribution at `x`.
pub fn induced_density(
    world: &WorldSpec,
    prompts: &PromptSet,
    knob: GuidanceKnob,
    x: &[f64],
) -> Result<f64, TheoryError> {
    Ok(InducedDistribution::new(world, prompts, knob)?.density(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptkit::{basic_prompt, cip_prompt, Prompt, Template};
    use crate::synthworld::presets;

    fn set(world: &WorldSpec, prompts: Vec<(String, usize)>) -> PromptSet {
        let ps = prompts
            .into_iter()
            .map(|(text, label)| Prompt { text, label, source_index: None, template: Template::Cip })
            .collect();
        PromptSet::new(ps, world.class_map()).unwrap()
    }

    #[test]
    fn duplicated_prompt_is_idempotent() {
        let w = presets::polysemy_world(0.3);
        let g = GuidanceKnob::new(2.0).unwrap();
        let t = cip_prompt("tench", "running in grass").unwrap();
        let one = InducedDistribution::new(&w, &set(&w, vec![(t.clone(), 0)]), g).unwrap();
        let two = InducedDistribution::new(&w, &set(&w, vec![(t.clone(), 0), (t, 0)]), g).unwrap();
        for x in [[0.0, 0.0], [8.0, 0.0], [3.0, -2.0]] {
            assert!((one.density(&x) - two.density(&x)).abs() < 1e-15);
        }
    }

    #[test]
    fn singleton_at_unit_knob_is_the_mode() {
        let w = presets::symmetric_1d(2.0);
        let t = cip_prompt("right", "running in snow").unwrap();
        let ind = InducedDistribution::new(&w, &set(&w, vec![(t, 1)]), GuidanceKnob::new(1.0).unwrap()).unwrap();
        let g = GaussianMixture::gaussian(vec![2.0], 1.0);
        for x in [-1.0, 2.0, 3.3] {
            assert!((ind.density(&[x]) - g.density(&[x])).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_linearity() {
        let w = presets::polysemy_world(0.5);
        let g = GuidanceKnob::new(1.5).unwrap();
        let a = set(&w, vec![(basic_prompt("tench").unwrap(), 0), (cip_prompt("springer", "sitting in snow").unwrap(), 1)]);
        let b = set(&w, vec![(basic_prompt("chainsaw").unwrap(), 2)]);
        let (pa, pb) = (InducedDistribution::new(&w, &a, g).unwrap(), InducedDistribution::new(&w, &b, g).unwrap());
        let pu = InducedDistribution::new(&w, &a.union(&b).unwrap(), g).unwrap();
        for x in [[0.0, 0.0], [8.0, 0.0], [-4.0, 6.9], [1.0, 1.0]] {
            let expect = (2.0 * pa.density(&x) + pb.density(&x)) / 3.0;
            assert!((pu.density(&x) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn polysemy_neutralized_by_tokens() {
        let w = presets::polysemy_world(0.5);
        let g = GuidanceKnob::new(1.0).unwrap();
        let conf = ModeRef::Confuser { class: 0 };
        let cip = set(&w, vec![(cip_prompt("tench", "running in grass").unwrap(), 0)]);
        assert_eq!(InducedDistribution::new(&w, &cip, g).unwrap().target_weight(conf), 0.0);
        let basic = set(&w, vec![(basic_prompt("tench").unwrap(), 0)]);
        assert_eq!(InducedDistribution::new(&w, &basic, g).unwrap().target_weight(conf), 0.5);
    }

    #[test]
    fn empty_prompt_set_is_rejected() {
        assert!(PromptSet::new(vec![], presets::symmetric_1d(1.0).class_map()).is_err());
    }
}
