use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelKind, TrainConfig, TrainError};

/// Architecture and sizes. Parameters are stored flat, row-major:
/// linear `[W (k x d), b (k)]`, MLP `[W1 (h x d), b1 (h), W2 (k x h), b2 (k)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub kind: ModelKind,
    pub d: usize,
    pub k: usize,
}

impl Shape {
    pub fn n_params(&self) -> usize {
        match self.kind {
            ModelKind::LinearSoftmax => self.k * self.d + self.k,
            ModelKind::Mlp { hidden: h } => h * self.d + h + self.k * h + self.k,
        }
    }

    /// Writes the logits for `x` into `logits`; `hidden` receives the tanh
    /// activations for the MLP (untouched for the linear model).
    fn forward(&self, p: &[f64], x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let (d, k) = (self.d, self.k);
        match self.kind {
            ModelKind::LinearSoftmax => {
                let (w, b) = p.split_at(k * d);
                for c in 0..k {
                    logits[c] = b[c] + dot(&w[c * d..(c + 1) * d], x);
                }
            }
            ModelKind::Mlp { hidden: h } => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                for j in 0..h {
                    hidden[j] = (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh();
                }
                for c in 0..k {
                    logits[c] = b2[c] + dot(&w2[c * h..(c + 1) * h], hidden);
                }
            }
        }
    }

    fn hidden_len(&self) -> usize {
        match self.kind {
            ModelKind::LinearSoftmax => 0,
            ModelKind::Mlp { hidden } => hidden,
        }
    }

    fn glorot_init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params()];
        let mut fill = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in slice {
                *v = rng.gen_range(-limit..limit);
            }
        };
        let (d, k) = (self.d, self.k);
        match self.kind {
            ModelKind::LinearSoftmax => fill(&mut p[..k * d], d, k),
            ModelKind::Mlp { hidden: h } => {
                fill(&mut p[..h * d], d, h);
                let start = h * d + h;
                fill(&mut p[start..start + k * h], h, k);
            }
        }
        p
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place softmax; returns `log(sum(exp(z)))`.
fn softmax(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
    max + total.ln()
}

/// Mean cross-entropy over `batch` plus `weight_decay / 2 * ||params||^2`,
/// and its gradient. Inputs are taken as given (no standardization).
pub fn objective_and_grad(
    shape: &Shape,
    params: &[f64],
    batch: &[(Vec<f64>, usize)],
    weight_decay: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let loss = accumulate(shape, params, batch.iter().map(|(x, y)| (x.as_slice(), *y)), weight_decay, &mut grad);
    (loss, grad)
}

fn accumulate<'a>(
    shape: &Shape,
    params: &[f64],
    batch: impl ExactSizeIterator<Item = (&'a [f64], usize)>,
    weight_decay: f64,
    grad: &mut [f64],
) -> f64 {
    let n = batch.len() as f64;
    let (d, k) = (shape.d, shape.k);
    let h = shape.hidden_len();
    let mut hidden = vec![0.0; h];
    let mut probs = vec![0.0; k];
    let mut dhidden = vec![0.0; h];
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut ce = 0.0;
    for (x, y) in batch {
        shape.forward(params, x, &mut hidden, &mut probs);
        let target_logit = probs[y];
        let log_norm = softmax(&mut probs);
        ce += log_norm - target_logit;
        probs[y] -= 1.0;
        // probs now holds dL/dlogits for this sample.
        match shape.kind {
            ModelKind::LinearSoftmax => {
                let (gw, gb) = grad.split_at_mut(k * d);
                for c in 0..k {
                    let e = probs[c] / n;
                    gb[c] += e;
                    for i in 0..d {
                        gw[c * d + i] += e * x[i];
                    }
                }
            }
            ModelKind::Mlp { hidden: hw } => {
                let w2 = &params[hw * d + hw..hw * d + hw + k * hw];
                let (gw1, rest) = grad.split_at_mut(hw * d);
                let (gb1, rest) = rest.split_at_mut(hw);
                let (gw2, gb2) = rest.split_at_mut(k * hw);
                dhidden.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..k {
                    let e = probs[c] / n;
                    gb2[c] += e;
                    for j in 0..hw {
                        gw2[c * hw + j] += e * hidden[j];
                        dhidden[j] += e * w2[c * hw + j];
                    }
                }
                for j in 0..hw {
                    let pre = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
                    gb1[j] += pre;
                    for i in 0..d {
                        gw1[j * d + i] += pre * x[i];
                    }
                }
            }
        }
    }
    let mut sq = 0.0;
    for (g, p) in grad.iter_mut().zip(params) {
        *g += weight_decay * p;
        sq += p * p;
    }
    ce / n + 0.5 * weight_decay * sq
}

/// A trained classifier, including the input standardization fitted on its
/// training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub shape: Shape,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub params: Vec<f64>,
    pub train_seed: u64,
}

impl Classifier {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        let mut hidden = vec![0.0; self.shape.hidden_len()];
        let mut logits = vec![0.0; self.shape.k];
        self.shape.forward(&self.params, &z, &mut hidden, &mut logits);
        logits
    }

    /// Arg-max class, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        crate::synthworld::argmax(&self.logits(x))
    }
}

fn check_samples(samples: &[(Vec<f64>, usize)], k: usize) -> Result<usize, TrainError> {
    let d = samples.first().ok_or(TrainError::EmptyTrainingSet)?.0.len();
    let mut seen = vec![false; k];
    for (x, y) in samples {
        if x.len() != d {
            return Err(TrainError::Dimension { expected: d, found: x.len() });
        }
        if *y >= k {
            return Err(TrainError::InvalidLabel { label: *y, k });
        }
        seen[*y] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(TrainError::MissingClass(c));
    }
    Ok(d)
}

/// Trains a `k`-class model on `samples`. Deterministic in (sample order,
/// config, seed).
pub fn train(samples: &[(Vec<f64>, usize)], k: usize, config: &TrainConfig, seed: u64) -> Result<Classifier, TrainError> {
    run(samples, k, config, seed, false).map(|(c, _)| c)
}

/// Like [`train`], also returning the full-data objective after every epoch.
pub fn train_with_trace(
    samples: &[(Vec<f64>, usize)],
    k: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Classifier, Vec<f64>), TrainError> {
    run(samples, k, config, seed, true)
}

fn run(
    samples: &[(Vec<f64>, usize)],
    k: usize,
    config: &TrainConfig,
    seed: u64,
    trace: bool,
) -> Result<(Classifier, Vec<f64>), TrainError> {
    config.validate()?;
    let d = check_samples(samples, k)?;
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|(x, _)| x[i]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|i| {
            let var = samples.iter().map(|(x, _)| (x[i] - mean[i]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let data: Vec<(Vec<f64>, usize)> = samples
        .iter()
        .map(|(x, y)| (x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect(), *y))
        .collect();

    let shape = Shape { kind: config.model, d, k };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = shape.glorot_init(&mut rng);
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::new();

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = chunk.iter().map(|&i| (data[i].0.as_slice(), data[i].1));
            let loss = accumulate(&shape, &params, batch, config.weight_decay, &mut grad);
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch });
            }
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v + g;
                *p -= lr * *v;
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Divergence { epoch });
        }
        if trace {
            let all = data.iter().map(|(x, y)| (x.as_slice(), *y));
            let loss = accumulate(&shape, &params, all, config.weight_decay, &mut grad);
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch });
            }
            history.push(loss);
        }
    }
    Ok((Classifier { shape, mean, scale, params, train_seed: seed }, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::{normal_cdf, presets};
    use crate::trainer::eval_on_set;

    fn small_config(model: ModelKind) -> TrainConfig {
        TrainConfig { epochs: 40, lr_decay_every: 15, model, ..TrainConfig::default() }
    }

    fn separable() -> Vec<(Vec<f64>, usize)> {
        (0..60).map(|i| (vec![(i % 30) as f64 * 0.1 + if i < 30 { -5.0 } else { 5.0 }, 1.0], usize::from(i >= 30))).collect()
    }

    fn finite_difference_check(shape: Shape, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<f64> = (0..shape.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let batch: Vec<(Vec<f64>, usize)> =
            (0..7).map(|_| ((0..shape.d).map(|_| rng.gen_range(-2.0..2.0)).collect(), rng.gen_range(0..shape.k))).collect();
        let wd = 0.01;
        let (_, grad) = objective_and_grad(&shape, &params, &batch, wd);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h;
            let mut minus = params.clone();
            minus[i] -= h;
            let fd = (objective_and_grad(&shape, &plus, &batch, wd).0 - objective_and_grad(&shape, &minus, &batch, wd).0)
                / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let lin = Shape { kind: ModelKind::LinearSoftmax, d: 3, k: 4 };
            let mlp = Shape { kind: ModelKind::Mlp { hidden: 5 }, d: 2, k: 3 };
            assert!(finite_difference_check(lin, seed) < 1e-5);
            assert!(finite_difference_check(mlp, seed) < 1e-5);
        }
    }

    #[test]
    fn separable_set_is_learned() {
        let data = separable();
        let c = train(&data, 2, &small_config(ModelKind::LinearSoftmax), 1).unwrap();
        assert_eq!(eval_on_set(&c, &data).unwrap().accuracy, 1.0);
    }

    #[test]
    fn full_batch_loss_is_non_increasing_after_epoch_three() {
        let data = separable();
        let cfg = TrainConfig { batch_size: data.len(), lr: 0.05, ..small_config(ModelKind::LinearSoftmax) };
        let (_, trace) = train_with_trace(&data, 2, &cfg, 2).unwrap();
        for w in trace[3..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{trace:?}");
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let data = separable();
        let cfg = small_config(ModelKind::Mlp { hidden: 6 });
        assert_eq!(train(&data, 2, &cfg, 9).unwrap(), train(&data, 2, &cfg, 9).unwrap());
        assert_ne!(train(&data, 2, &cfg, 9).unwrap().params, train(&data, 2, &cfg, 10).unwrap().params);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let data = separable();
        let cfg = TrainConfig { lr: 1e6, ..TrainConfig::default() };
        assert!(matches!(train(&data, 2, &cfg, 0), Err(TrainError::Divergence { .. })));
    }

    #[test]
    fn input_errors() {
        let cfg = small_config(ModelKind::LinearSoftmax);
        assert_eq!(train(&[], 2, &cfg, 0), Err(TrainError::EmptyTrainingSet));
        let one_class = vec![(vec![0.0], 0), (vec![1.0], 0)];
        assert_eq!(train(&one_class, 2, &cfg, 0), Err(TrainError::MissingClass(1)));
        let ragged = vec![(vec![0.0], 0), (vec![1.0, 2.0], 1)];
        assert!(matches!(train(&ragged, 2, &cfg, 0), Err(TrainError::Dimension { .. })));
    }

    #[test]
    fn two_gaussians_reach_bayes_accuracy() {
        let w = presets::symmetric_1d(1.0);
        let tr = w.sample_real(4000, 1).unwrap().feature_vectors().unwrap();
        let te = w.sample_real(20_000, 2).unwrap().feature_vectors().unwrap();
        let c = train(&tr, 2, &TrainConfig::default(), 3).unwrap();
        let acc = eval_on_set(&c, &te).unwrap().accuracy;
        assert!((acc - normal_cdf(1.0)).abs() <= 0.02, "{acc}");
    }
}
