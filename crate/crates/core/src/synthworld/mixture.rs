use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Isotropic Gaussian component `weight * N(mean, var * I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    pub var: f64,
    pub weight: f64,
}

impl Component {
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let sq: f64 = self.mean.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
        -0.5 * (self.mean.len() as f64) * (LN_2PI + self.var.ln()) - sq / (2.0 * self.var)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Finite mixture of isotropic Gaussians in a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
}

impl GaussianMixture {
    /// Builds a mixture; panics on an empty component list or a dimension
    /// mismatch, which are programming errors at every call site.
    pub fn new(dim: usize, components: Vec<Component>) -> Self {
        assert!(!components.is_empty(), "mixture needs at least one component");
        assert!(components.iter().all(|c| c.mean.len() == dim && c.var > 0.0 && c.weight >= 0.0));
        Self { dim, components }
    }

    pub fn gaussian(mean: Vec<f64>, var: f64) -> Self {
        let dim = mean.len();
        Self::new(dim, vec![Component { mean, var, weight: 1.0 }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.weight * c.pdf(x)).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let term = |c: &Component| c.weight.ln() + c.log_pdf(x);
        let live = || self.components.iter().filter(|c| c.weight > 0.0);
        let max = live().map(term).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return max;
        }
        max + live().map(|c| (term(c) - max).exp()).sum::<f64>().ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let total = self.total_weight();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = self.components.last().unwrap();
        for c in &self.components {
            if u < c.weight {
                chosen = c;
                break;
            }
            u -= c.weight;
        }
        let s = chosen.std();
        chosen
            .mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect()
    }

    /// Probability mass inside the axis-aligned box `[lo, hi]`.
    pub fn mass_in_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let total = self.total_weight();
        self.components
            .iter()
            .map(|c| {
                let s = c.std();
                let p: f64 = (0..self.dim)
                    .map(|i| normal_cdf((hi[i] - c.mean[i]) / s) - normal_cdf((lo[i] - c.mean[i]) / s))
                    .product();
                c.weight * p
            })
            .sum::<f64>()
            / total
    }

    /// Axis-aligned box spanning every component mean +/- `n_std` standard deviations.
    pub fn bounding_box(&self, n_std: f64) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for c in &self.components {
            let r = n_std * c.std();
            for i in 0..self.dim {
                lo[i] = lo[i].min(c.mean[i] - r);
                hi[i] = hi[i].max(c.mean[i] + r);
            }
        }
        (lo, hi)
    }

    pub fn min_std(&self) -> f64 {
        self.components.iter().map(Component::std).fold(f64::INFINITY, f64::min)
    }

    /// Merges components with identical mean and variance, summing weights.
    /// Component order is first occurrence.
    pub fn collapsed(&self) -> Self {
        let mut out: Vec<Component> = Vec::new();
        for c in &self.components {
            match out.iter_mut().find(|o| o.mean == c.mean && o.var == c.var) {
                Some(o) => o.weight += c.weight,
                None => out.push(c.clone()),
            }
        }
        Self::new(self.dim, out)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_peak_and_cdf() {
        let g = GaussianMixture::gaussian(vec![0.0], 1.0);
        assert!((g.density(&[0.0]) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn log_density_matches_density() {
        let m = GaussianMixture::new(
            2,
            vec![
                Component { mean: vec![0.0, 1.0], var: 0.5, weight: 0.3 },
                Component { mean: vec![2.0, -1.0], var: 2.0, weight: 0.7 },
            ],
        );
        for x in [[0.0, 0.0], [1.0, 3.0], [-2.0, 0.5]] {
            assert!((m.log_density(&x).exp() - m.density(&x)).abs() < 1e-15);
        }
        assert!((m.mass_in_box(&[-50.0, -50.0], &[50.0, 50.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_matches_moments() {
        let m = GaussianMixture::gaussian(vec![3.0, -1.0], 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let x = m.sample(&mut rng);
            sum[0] += x[0];
            sum[1] += x[1];
        }
        // 4 standard errors of the mean (sd 2 / sqrt(n)).
        let tol = 4.0 * 2.0 / (n as f64).sqrt();
        assert!((sum[0] / n as f64 - 3.0).abs() < tol);
        assert!((sum[1] / n as f64 + 1.0).abs() < tol);
    }

    #[test]
    fn collapse_preserves_density() {
        let c = |m: f64, w: f64| Component { mean: vec![m], var: 1.0, weight: w };
        let m = GaussianMixture::new(1, vec![c(0.0, 0.25), c(1.0, 0.25), c(0.0, 0.5)]);
        let k = m.collapsed();
        assert_eq!(k.components().len(), 2);
        for x in [-1.0, 0.0, 0.3, 2.0] {
            assert!((m.density(&[x]) - k.density(&[x])).abs() < 1e-15);
        }
    }
}
