//! A closed-form toy universe.
//!
//! Every class is a mixture of isotropic Gaussian modes in a low-dimensional
//! feature space. Each mode carries a background token and a behavior token;
//! a toy captioner reports the tokens of the nearest mode and a toy
//! conditional generator reads them back out of a prompt. Because all the
//! densities involved are Gaussian mixtures, the real distribution, the
//! prompt-induced distribution and the Bayes labeler are exact.
//!
//! Generator model (an analog, not a claim about diffusion internals):
//!
//! - a prompt that names a mode's tokens generates from that mode;
//! - a prompt with only a class name picks one of the class's modes
//!   uniformly (the generator does not know real mode frequencies), except
//!   that with probability `p` a polysemous class name yields the confuser;
//! - the guidance knob `g` shrinks the per-mode variance to `sigma^2 / g`;
//! - with probability `drift / g` the generator ignores everything but the
//!   class name. `drift` defaults to 0.

mod mixture;
pub mod presets;

pub use mixture::{log_sum_exp, normal_cdf, Component, GaussianMixture};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataman::{derive_seed, encode_inline_vector, ClassMap, Manifest, Record, INLINE_MAX_DIM};
use crate::promptkit::Prompt;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("label {0} is not a class of this world")]
    InvalidLabel(usize),
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("vector has dimension {found}, world has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("guidance knob must be >= 1, got {0}")]
    InvalidKnob(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub mean: Vec<f64>,
    pub weight: f64,
    pub background_token: String,
    pub behavior_token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polysemy {
    /// Where the generator lands when it misreads the class name. Its weight
    /// is ignored.
    pub confuser: Mode,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub polysemy: Option<Polysemy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub d: usize,
    pub sigma: f64,
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
    #[serde(default)]
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionerQuality {
    None,
    Coarse,
    Fine,
}

/// Guidance-scale analog, `g >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GuidanceKnob(f64);

impl GuidanceKnob {
    pub fn new(g: f64) -> Result<Self, WorldError> {
        if g.is_finite() && g >= 1.0 {
            Ok(Self(g))
        } else {
            Err(WorldError::InvalidKnob(g))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GuidanceKnob {
    type Error = WorldError;
    fn try_from(g: f64) -> Result<Self, WorldError> {
        GuidanceKnob::new(g)
    }
}

impl From<GuidanceKnob> for f64 {
    fn from(k: GuidanceKnob) -> f64 {
        k.0
    }
}

/// A generator target: one of a class's modes or its confuser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeRef {
    Class { class: usize, mode: usize },
    Confuser { class: usize },
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Match {
    None,
    Background,
    Full,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl WorldSpec {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Invalid(m));
        if self.d == 0 || self.d > INLINE_MAX_DIM {
            return bad(format!("dimension {} outside 1..={INLINE_MAX_DIM}", self.d));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return bad(format!("drift must lie in [0, 1], got {}", self.drift));
        }
        if self.classes.is_empty() {
            return bad("world needs at least one class".into());
        }
        let check_mode = |c: &str, m: &Mode| -> Result<(), WorldError> {
            if m.mean.len() != self.d || m.mean.iter().any(|v| !v.is_finite()) {
                return Err(WorldError::Invalid(format!("class {c:?}: mode mean must be a finite {}-vector", self.d)));
            }
            for t in [&m.background_token, &m.behavior_token] {
                if t.is_empty() || !t.chars().all(|ch| ch.is_ascii_lowercase()) {
                    return Err(WorldError::Invalid(format!(
                        "class {c:?}: token {t:?} must be a non-empty lowercase word"
                    )));
                }
            }
            Ok(())
        };
        let reserved: Vec<String> = ["a", "photo", "of", "in"]
            .iter()
            .map(|s| s.to_string())
            .chain(self.classes.iter().flat_map(|c| words(&c.name)))
            .collect();
        let tokens = self.classes.iter().flat_map(|c| c.modes.iter().chain(c.polysemy.iter().map(|p| &p.confuser)));
        for m in tokens {
            for t in [&m.background_token, &m.behavior_token] {
                if reserved.contains(t) {
                    return bad(format!("token {t:?} collides with template or class-name words"));
                }
            }
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.classes {
            if c.name.trim().is_empty() || !names.insert(c.name.as_str()) {
                return bad(format!("class names must be non-empty and distinct ({:?})", c.name));
            }
            if c.modes.is_empty() {
                return bad(format!("class {:?} has no modes", c.name));
            }
            for m in &c.modes {
                check_mode(&c.name, m)?;
                if !(m.weight > 0.0 && m.weight <= 1.0) {
                    return bad(format!("class {:?}: mode weight {} outside (0, 1]", c.name, m.weight));
                }
            }
            let total: f64 = c.modes.iter().map(|m| m.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("class {:?}: mode weights sum to {total}", c.name));
            }
            if let Some(poly) = &c.polysemy {
                check_mode(&c.name, &poly.confuser)?;
                if !(0.0..=1.0).contains(&poly.p) {
                    return bad(format!("class {:?}: confusion probability {} outside [0, 1]", c.name, poly.p));
                }
            }
        }
        Ok(())
    }

    pub fn class_map(&self) -> ClassMap {
        ClassMap::from_names(&self.classes.iter().map(|c| c.name.as_str()).collect::<Vec<_>>())
            .expect("validated world has distinct class names")
    }

    fn mode(&self, r: ModeRef) -> &Mode {
        match r {
            ModeRef::Class { class, mode } => &self.classes[class].modes[mode],
            ModeRef::Confuser { class } => {
                &self.classes[class].polysemy.as_ref().expect("confuser ref without polysemy").confuser
            }
        }
    }

    pub fn mode_mean(&self, r: ModeRef) -> &[f64] {
        &self.mode(r).mean
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), WorldError> {
        if x.len() != self.d {
            return Err(WorldError::Dimension { expected: self.d, found: x.len() });
        }
        Ok(())
    }

    /// Class-conditional real density `p(x | y = class)`.
    pub fn class_mixture(&self, class: usize) -> GaussianMixture {
        let var = self.sigma * self.sigma;
        GaussianMixture::new(
            self.d,
            self.classes[class]
                .modes
                .iter()
                .map(|m| Component { mean: m.mean.clone(), var, weight: m.weight })
                .collect(),
        )
    }

    /// The real data distribution: uniform class prior over class mixtures.
    pub fn real_mixture(&self) -> GaussianMixture {
        let var = self.sigma * self.sigma;
        let k = self.k() as f64;
        let comps = self
            .classes
            .iter()
            .flat_map(|c| {
                c.modes.iter().map(move |m| Component { mean: m.mean.clone(), var, weight: m.weight / k })
            })
            .collect();
        GaussianMixture::new(self.d, comps)
    }

    /// Closed-form real density `P_X(x)`.
    pub fn true_density(&self, x: &[f64]) -> Result<f64, WorldError> {
        self.check_dim(x)?;
        Ok(self.real_mixture().density(x))
    }

    /// Posterior over classes under the real densities and a uniform prior.
    pub fn bayes_labeler(&self, x: &[f64]) -> Result<Vec<f64>, WorldError> {
        self.check_dim(x)?;
        Ok(BayesRule::new(self).posterior(x))
    }

    /// Bayes-optimal label (lowest index on exact ties).
    pub fn bayes_label(&self, x: &[f64]) -> Result<usize, WorldError> {
        self.check_dim(x)?;
        Ok(BayesRule::new(self).label(x))
    }

    /// Draws `m` labelled real samples. Labels are uniform over classes;
    /// record `i` uses its own derived seed, so any prefix is reproducible.
    pub fn sample_real(&self, m: usize, seed: u64) -> Result<Manifest, WorldError> {
        self.validate()?;
        if m == 0 {
            return Err(WorldError::EmptySample);
        }
        let mut manifest = Manifest::new(self.class_map(), seed);
        for i in 0..m {
            let (x, label) = self.sample_real_one(derive_seed(seed, "real", i as u64, 0));
            manifest
                .push(Record::real(i as u64, encode_inline_vector(&x), label))
                .expect("world labels are in range");
        }
        Ok(manifest)
    }

    pub fn sample_real_one(&self, seed: u64) -> (Vec<f64>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let label = rng.gen_range(0..self.k());
        let x = self.class_mixture(label).sample(&mut rng);
        (x, label)
    }

    /// Index of the mode nearest to `x` in class-major order; exact ties go
    /// to the earlier mode.
    pub fn nearest_mode(&self, x: &[f64]) -> Result<ModeRef, WorldError> {
        self.check_dim(x)?;
        let mut best = (f64::INFINITY, ModeRef::Class { class: 0, mode: 0 });
        for (ci, c) in self.classes.iter().enumerate() {
            for (mi, m) in c.modes.iter().enumerate() {
                let dist: f64 = m.mean.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best.0 {
                    best = (dist, ModeRef::Class { class: ci, mode: mi });
                }
            }
        }
        Ok(best.1)
    }

    /// Toy captioner. `Fine` reports `"{behavior} in {background}"`,
    /// `Coarse` only `"in {background}"`, `None` nothing.
    pub fn synth_caption(&self, x: &[f64], quality: CaptionerQuality) -> Result<String, WorldError> {
        let mode = self.mode(self.nearest_mode(x)?);
        Ok(match quality {
            CaptionerQuality::None => String::new(),
            CaptionerQuality::Coarse => format!("in {}", mode.background_token),
            CaptionerQuality::Fine => format!("{} in {}", mode.behavior_token, mode.background_token),
        })
    }

    /// Targets of a class-name-only prompt.
    fn class_only_targets(&self, class: usize) -> Vec<(ModeRef, f64)> {
        let c = &self.classes[class];
        let p = c.polysemy.as_ref().map_or(0.0, |poly| poly.p);
        let n = c.modes.len() as f64;
        let mut out: Vec<(ModeRef, f64)> =
            (0..c.modes.len()).map(|mode| (ModeRef::Class { class, mode }, (1.0 - p) / n)).collect();
        if p > 0.0 {
            out.push((ModeRef::Confuser { class }, p));
        }
        out
    }

    /// Targets named by the prompt's tokens, if any. Full (behavior and
    /// background) matches beat background-only ones; within a level the
    /// prompt's own class is preferred; the survivors are equally likely.
    fn token_targets(&self, label: usize, text: &str) -> Option<Vec<(ModeRef, f64)>> {
        let w = words(text);
        let has = |t: &str| w.iter().any(|x| x == t);
        let mut scored = Vec::new();
        for (ci, c) in self.classes.iter().enumerate() {
            for (mi, m) in c.modes.iter().enumerate() {
                let level = match (has(&m.background_token), has(&m.behavior_token)) {
                    (true, true) => Match::Full,
                    (true, false) => Match::Background,
                    _ => Match::None,
                };
                scored.push((level, ModeRef::Class { class: ci, mode: mi }));
            }
        }
        let best = scored.iter().map(|s| s.0).max().unwrap_or(Match::None);
        if best == Match::None {
            return None;
        }
        let at_best: Vec<ModeRef> = scored.into_iter().filter(|s| s.0 == best).map(|s| s.1).collect();
        let own: Vec<ModeRef> = at_best
            .iter()
            .copied()
            .filter(|r| matches!(r, ModeRef::Class { class, .. } if *class == label))
            .collect();
        let chosen = if own.is_empty() { at_best } else { own };
        let w = 1.0 / chosen.len() as f64;
        Some(chosen.into_iter().map(|r| (r, w)).collect())
    }

    /// Distribution over generator targets for one prompt at one knob setting.
    /// Weights sum to 1.
    pub fn resolve_targets(&self, prompt: &Prompt, knob: GuidanceKnob) -> Result<Vec<(ModeRef, f64)>, WorldError> {
        if prompt.label >= self.k() {
            return Err(WorldError::InvalidLabel(prompt.label));
        }
        let fallback = self.class_only_targets(prompt.label);
        let Some(tokens) = self.token_targets(prompt.label, &prompt.text) else {
            return Ok(fallback);
        };
        let q = self.drift / knob.value();
        if q == 0.0 {
            return Ok(tokens);
        }
        let mut out: Vec<(ModeRef, f64)> = Vec::new();
        for (r, w) in tokens.into_iter().map(|(r, w)| (r, (1.0 - q) * w)).chain(fallback.into_iter().map(|(r, w)| (r, q * w))) {
            match out.iter_mut().find(|(o, _)| *o == r) {
                Some((_, ow)) => *ow += w,
                None => out.push((r, w)),
            }
        }
        Ok(out)
    }

    /// Exact conditional density `P(s | t)` of the generator for one prompt.
    pub fn prompt_conditional(&self, prompt: &Prompt, knob: GuidanceKnob) -> Result<GaussianMixture, WorldError> {
        let var = self.sigma * self.sigma / knob.value();
        let comps = self
            .resolve_targets(prompt, knob)?
            .into_iter()
            .map(|(r, w)| Component { mean: self.mode_mean(r).to_vec(), var, weight: w })
            .collect();
        Ok(GaussianMixture::new(self.d, comps))
    }

    /// Toy conditional generator: one draw from [`Self::prompt_conditional`].
    pub fn synth_generate<R: Rng + ?Sized>(
        &self,
        prompt: &Prompt,
        knob: GuidanceKnob,
        rng: &mut R,
    ) -> Result<Vec<f64>, WorldError> {
        Ok(self.prompt_conditional(prompt, knob)?.sample(rng))
    }
}

/// The shared labeling function `P(y | x)` with the class densities built
/// once. Used to label both real and induced samples.
#[derive(Debug, Clone)]
pub struct BayesRule {
    classes: Vec<GaussianMixture>,
}

impl BayesRule {
    pub fn new(world: &WorldSpec) -> Self {
        Self { classes: (0..world.k()).map(|c| world.class_mixture(c)).collect() }
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    fn log_densities(&self, x: &[f64]) -> Vec<f64> {
        self.classes.iter().map(|m| m.log_density(x)).collect()
    }

    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let logs = self.log_densities(x);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    /// Argmax of the posterior, lowest index on exact ties.
    pub fn label(&self, x: &[f64]) -> usize {
        argmax(&self.log_densities(x))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptkit::{basic_prompt, cip_prompt, Template};

    fn mode(mean: Vec<f64>, weight: f64, bg: &str, bh: &str) -> Mode {
        Mode { mean, weight, background_token: bg.into(), behavior_token: bh.into() }
    }

    fn two_class_1d(sep: f64) -> WorldSpec {
        WorldSpec {
            d: 1,
            sigma: 1.0,
            classes: vec![
                ClassSpec { name: "left".into(), modes: vec![mode(vec![-sep], 1.0, "grass", "sitting")], polysemy: None },
                ClassSpec { name: "right".into(), modes: vec![mode(vec![sep], 1.0, "snow", "running")], polysemy: None },
            ],
            seed: 0,
            drift: 0.0,
        }
    }

    fn poly_world(p: f64) -> WorldSpec {
        WorldSpec {
            d: 2,
            sigma: 1.0,
            classes: vec![
                ClassSpec {
                    name: "jay".into(),
                    modes: vec![
                        mode(vec![0.0, 0.0], 0.5, "feeder", "perched"),
                        mode(vec![6.0, 0.0], 0.5, "branch", "flying"),
                    ],
                    polysemy: Some(Polysemy { confuser: mode(vec![0.0, 12.0], 1.0, "office", "talking"), p }),
                },
                ClassSpec {
                    name: "person".into(),
                    modes: vec![mode(vec![0.0, 12.0], 1.0, "office", "talking")],
                    polysemy: None,
                },
            ],
            seed: 0,
            drift: 0.0,
        }
    }

    fn prompt(text: String, label: usize, template: Template) -> Prompt {
        Prompt { text, label, source_index: None, template }
    }

    #[test]
    fn density_peak_and_symmetry() {
        let w = WorldSpec {
            classes: vec![two_class_1d(0.0).classes[0].clone()],
            ..two_class_1d(0.0)
        };
        assert!((w.true_density(&[0.0]).unwrap() - 0.398_942).abs() < 1e-6);
        let sym = two_class_1d(2.0);
        for x in [0.3, 1.0, 4.5] {
            assert!((sym.true_density(&[x]).unwrap() - sym.true_density(&[-x]).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let w = poly_world(0.3);
        // Trapezoid rule on a 2-D grid covering every mode +/- 10 sigma.
        let (lo, hi, n) = (-10.0, 22.0, 641);
        let h = (hi - lo) / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                total += wi * wj * w.true_density(&[lo + i as f64 * h, lo + j as f64 * h]).unwrap();
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn posterior_properties() {
        let far = two_class_1d(5.0);
        assert!(far.bayes_labeler(&[-5.0]).unwrap()[0] >= 0.999);
        let same = WorldSpec {
            classes: vec![
                far.classes[0].clone(),
                ClassSpec { name: "twin".into(), ..far.classes[0].clone() },
            ],
            ..far.clone()
        };
        for x in [-3.0, 0.0, 7.0, 40.0] {
            let post = same.bayes_labeler(&[x]).unwrap();
            assert_eq!(post, vec![0.5, 0.5]);
        }
        for x in [-30.0, -1.0, 0.2, 60.0] {
            let s: f64 = far.bayes_labeler(&[x]).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn caption_levels_and_tie_break() {
        let w = two_class_1d(2.0);
        assert_eq!(w.synth_caption(&[2.0], CaptionerQuality::Fine).unwrap(), "running in snow");
        assert_eq!(w.synth_caption(&[2.0], CaptionerQuality::Coarse).unwrap(), "in snow");
        assert_eq!(w.synth_caption(&[2.0], CaptionerQuality::None).unwrap(), "");
        // Equidistant: the lower mode index (class 0) wins.
        assert_eq!(w.synth_caption(&[0.0], CaptionerQuality::Fine).unwrap(), "sitting in grass");
        assert!(w.synth_caption(&[0.0, 1.0], CaptionerQuality::Fine).is_err());
    }

    #[test]
    fn tokens_override_polysemy() {
        let w = poly_world(0.9);
        let cip = prompt(cip_prompt("jay", "perched in feeder").unwrap(), 0, Template::Cip);
        let targets = w.resolve_targets(&cip, GuidanceKnob::new(2.0).unwrap()).unwrap();
        assert_eq!(targets, vec![(ModeRef::Class { class: 0, mode: 0 }, 1.0)]);
        let basic = prompt(basic_prompt("jay").unwrap(), 0, Template::Basic);
        let targets = w.resolve_targets(&basic, GuidanceKnob::new(1.0).unwrap()).unwrap();
        assert!(targets.contains(&(ModeRef::Confuser { class: 0 }, 0.9)));
    }

    #[test]
    fn background_only_prompt_spreads_over_matching_modes() {
        let mut w = poly_world(0.0);
        w.classes[0].modes[1].background_token = "feeder".into();
        let coarse = prompt(cip_prompt("jay", "in feeder").unwrap(), 0, Template::Cip);
        let t = w.resolve_targets(&coarse, GuidanceKnob::new(1.0).unwrap()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|(_, wt)| (*wt - 0.5).abs() < 1e-15));
    }

    #[test]
    fn confuser_frequency_matches_p() {
        let w = poly_world(0.5);
        let basic = prompt(basic_prompt("jay").unwrap(), 0, Template::Basic);
        let knob = GuidanceKnob::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| {
                let x = w.synth_generate(&basic, knob, &mut rng).unwrap();
                w.nearest_mode(&x).unwrap() == ModeRef::Class { class: 1, mode: 0 }
            })
            .count();
        assert!((hits as f64 / n as f64 - 0.5).abs() <= 0.02, "{hits}");
    }

    #[test]
    fn large_knob_collapses_to_mode_mean() {
        let w = two_class_1d(3.0);
        let p = prompt(cip_prompt("right", "running in snow").unwrap(), 1, Template::Cip);
        let knob = GuidanceKnob::new(1e12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = w.synth_generate(&p, knob, &mut rng).unwrap();
            assert!((x[0] - 3.0).abs() < 1e-4);
        }
    }

    #[test]
    fn drift_mixes_in_class_only_targets() {
        let mut w = poly_world(0.5);
        w.drift = 0.4;
        let cip = prompt(cip_prompt("jay", "perched in feeder").unwrap(), 0, Template::Cip);
        let t = w.resolve_targets(&cip, GuidanceKnob::new(2.0).unwrap()).unwrap();
        let total: f64 = t.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        // q = 0.2: confuser weight = 0.2 * 0.5.
        let conf = t.iter().find(|x| x.0 == ModeRef::Confuser { class: 0 }).unwrap().1;
        assert!((conf - 0.1).abs() < 1e-15);
    }

    #[test]
    fn real_sampling_balances_classes() {
        let w = two_class_1d(1.0);
        let m = w.sample_real(10_000, 5).unwrap();
        let c = m.label_counts();
        assert!((c[0] as f64 / 10_000.0 - 0.5).abs() <= 0.02);
        assert_eq!(w.sample_real(0, 5), Err(WorldError::EmptySample));
        // Per-class sample mean within 3 sigma / sqrt(m_c) of the mode.
        let xs = m.feature_vectors().unwrap();
        let right: Vec<f64> = xs.iter().filter(|(_, y)| *y == 1).map(|(x, _)| x[0]).collect();
        let mean = right.iter().sum::<f64>() / right.len() as f64;
        assert!((mean - 1.0).abs() < 3.0 / (right.len() as f64).sqrt());
    }

    #[test]
    fn validation_catches_bad_worlds() {
        let mut w = two_class_1d(1.0);
        w.classes[0].modes[0].weight = 0.5;
        assert!(w.validate().is_err());
        let mut w = poly_world(1.5);
        assert!(w.validate().is_err());
        w.classes[0].polysemy = None;
        w.classes[1].modes[0].behavior_token = "Two Words".into();
        assert!(w.validate().is_err());
        assert!(GuidanceKnob::new(0.5).is_err());
        let json = serde_json::to_string(&poly_world(0.2)).unwrap();
        let back: WorldSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, poly_world(0.2));
    }
}
