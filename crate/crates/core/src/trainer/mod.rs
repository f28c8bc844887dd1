//! Desk-scale classifiers trained by momentum SGD, and 0-1 risk evaluation.

mod checkpoint;
mod model;

pub use checkpoint::{load_classifier, parse_classifier, save_classifier, write_classifier, CHECKPOINT_VERSION};
pub use model::{objective_and_grad, train, train_with_trace, Classifier, Shape};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataman::derive_seed;
use crate::synthworld::{BayesRule, GaussianMixture, WorldSpec};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error("loss became non-finite in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("sample has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("label {label} is outside 0..{k}")]
    InvalidLabel { label: usize, k: usize },
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error("checkpoint io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    LinearSoftmax,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub model: ModelKind,
}

impl Default for TrainConfig {
    /// The ResNet-50 ImageNette schedule applied to a small model: 200
    /// epochs, lr 0.1, momentum 0.9, weight decay 5e-4, lr x0.2 every 50
    /// epochs, batch 128.
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_decay_factor: 0.2,
            lr_decay_every: 50,
            batch_size: 128,
            model: ModelKind::LinearSoftmax,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must lie in (0, 1]");
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if matches!(self.model, ModelKind::Mlp { hidden: 0 }) {
            return bad("mlp hidden width must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// Full-scale recipes, kept as documentation of the reference protocol.
/// They describe image-model training and are never executed here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRecipe {
    pub name: &'static str,
    pub network: &'static str,
    pub optimizer: &'static str,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub schedule: &'static str,
    pub batch_size: usize,
    pub loss: &'static str,
    pub augmentation: &'static str,
}

pub const REFERENCE_RECIPES: [ReferenceRecipe; 4] = [
    ReferenceRecipe {
        name: "imagenette",
        network: "ResNet-50",
        optimizer: "SGD, momentum 0.9",
        epochs: 200,
        lr: 0.1,
        weight_decay: 5e-4,
        schedule: "step, x0.2 every 50 epochs",
        batch_size: 128,
        loss: "cross-entropy",
        augmentation: "crop, flip",
    },
    ReferenceRecipe {
        name: "imagenet-100",
        network: "ResNet-50",
        optimizer: "SGD, momentum 0.9",
        epochs: 200,
        lr: 0.1,
        weight_decay: 5e-4,
        schedule: "step, x0.2 every 50 epochs",
        batch_size: 512,
        loss: "cross-entropy",
        augmentation: "crop, flip",
    },
    ReferenceRecipe {
        name: "imagenet-1k-resnet50",
        network: "ResNet-50",
        optimizer: "Lamb",
        epochs: 300,
        lr: 0.005,
        weight_decay: 0.01,
        schedule: "cosine, 5 warm-up epochs",
        batch_size: 2048,
        loss: "BCE, smoothing 0.1",
        augmentation: "RandAugment, Mixup 0.2, CutMix 1.0",
    },
    ReferenceRecipe {
        name: "imagenet-1k-vit",
        network: "ViT",
        optimizer: "Lamb",
        epochs: 300,
        lr: 0.003,
        weight_decay: 0.02,
        schedule: "cosine, 5 warm-up epochs",
        batch_size: 2048,
        loss: "BCE",
        augmentation: "RandAugment, Mixup 0.8, CutMix 1.0, color jitter 0.3",
    },
];

/// Anything that maps a feature vector to a class.
pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> usize;
}

impl Predictor for Classifier {
    fn predict(&self, x: &[f64]) -> usize {
        Classifier::predict(self, x)
    }
}

impl Predictor for BayesRule {
    fn predict(&self, x: &[f64]) -> usize {
        self.label(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalKind {
    EmpiricalSet,
    MonteCarloWorld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub risk: f64,
    pub accuracy: f64,
    pub n_eval: usize,
    pub std_error: f64,
    pub eval_kind: EvalKind,
}

impl RiskReport {
    fn from_errors(errors: usize, n: usize, eval_kind: EvalKind) -> Self {
        let risk = errors as f64 / n as f64;
        let accuracy = 1.0 - risk;
        let std_error = (accuracy * (1.0 - accuracy) / n as f64).sqrt();
        Self { risk, accuracy, n_eval: n, std_error, eval_kind }
    }
}

/// Exact empirical 0-1 risk on a labelled set.
pub fn eval_on_set<P: Predictor + ?Sized>(model: &P, samples: &[(Vec<f64>, usize)]) -> Result<RiskReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    let errors = samples.par_iter().filter(|(x, y)| model.predict(x) != *y).count();
    Ok(RiskReport::from_errors(errors, samples.len(), EvalKind::EmpiricalSet))
}

/// Monte-Carlo risk against draws from `dist`, labelled by the world's Bayes
/// rule. Draw `i` uses its own derived seed, so the estimate does not depend
/// on thread scheduling.
pub fn eval_on_distribution<P: Predictor + ?Sized>(
    model: &P,
    dist: &GaussianMixture,
    labeler: &BayesRule,
    n_mc: usize,
    seed: u64,
) -> RiskReport {
    let n = n_mc.max(1);
    let errors = (0..n as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "mc-eval", i, 0));
            let x = dist.sample(&mut rng);
            model.predict(&x) != labeler.label(&x)
        })
        .count();
    RiskReport::from_errors(errors, n, EvalKind::MonteCarloWorld)
}

/// Monte-Carlo risk on the real world distribution with Bayes-argmax labels.
pub fn eval_on_world<P: Predictor + ?Sized>(model: &P, world: &WorldSpec, n_mc: usize, seed: u64) -> RiskReport {
    eval_on_distribution(model, &world.real_mixture(), &BayesRule::new(world), n_mc, seed)
}
