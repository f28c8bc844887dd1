use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{InducedDistribution, TheoryError};
use crate::dataman::derive_seed;
use crate::synthworld::{GaussianMixture, WorldSpec};

/// Minimum probability mass a grid must cover for each distribution.
pub const REQUIRED_COVERAGE: f64 = 1.0 - 1e-4;
/// Half-width of automatic grid bounds, in component standard deviations.
pub const AUTO_BOUND_STDS: f64 = 8.0;
const AUTO_POINTS_PER_STD_1D: f64 = 100.0;
const AUTO_POINTS_PER_STD_2D: f64 = 8.0;
const AUTO_MAX_POINTS_1D: usize = 200_001;
const AUTO_MAX_POINTS_2D: usize = 601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per axis of the coarse grid; the reported value uses the
    /// refined grid with `2 * points - 1` points per axis.
    pub points: usize,
}

impl GridSpec {
    /// Bounds at every component mean +/- 8 standard deviations of either
    /// distribution. The coarse spacing is a hundredth (1-D) or an eighth
    /// (2-D) of the narrowest component's standard deviation, capped.
    pub fn auto(p: &GaussianMixture, q: &GaussianMixture) -> Self {
        let (lo_p, hi_p) = p.bounding_box(AUTO_BOUND_STDS);
        let (lo_q, hi_q) = q.bounding_box(AUTO_BOUND_STDS);
        let lo: Vec<f64> = lo_p.iter().zip(&lo_q).map(|(a, b)| a.min(*b)).collect();
        let hi: Vec<f64> = hi_p.iter().zip(&hi_q).map(|(a, b)| a.max(*b)).collect();
        let span = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let min_std = p.min_std().min(q.min_std());
        let (per_std, cap) = if p.dim() == 1 {
            (AUTO_POINTS_PER_STD_1D, AUTO_MAX_POINTS_1D)
        } else {
            (AUTO_POINTS_PER_STD_2D, AUTO_MAX_POINTS_2D)
        };
        let points = ((span / min_std * per_std).ceil() as usize + 1).clamp(33, cap);
        Self { lo, hi, points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMethod {
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub method: DistanceMethod,
    /// Grid: refinement change plus uncovered mass. Monte Carlo: standard error.
    pub tolerance: f64,
    pub grid: Option<GridSpec>,
    pub n_mc: Option<usize>,
}

/// Trapezoidal quadrature of `|p - q|` over the grid box.
pub fn grid_distance(p: &GaussianMixture, q: &GaussianMixture, grid: &GridSpec) -> Result<DistanceEstimate, TheoryError> {
    let d = p.dim();
    if q.dim() != d {
        return Err(TheoryError::DimensionMismatch);
    }
    if d > 2 {
        return Err(TheoryError::DimensionTooHigh(d));
    }
    if grid.points < 2 || grid.lo.len() != d || grid.hi.len() != d || grid.lo.iter().zip(&grid.hi).any(|(l, h)| !(l < h)) {
        return Err(TheoryError::InvalidGrid);
    }
    let cov_p = p.mass_in_box(&grid.lo, &grid.hi);
    let cov_q = q.mass_in_box(&grid.lo, &grid.hi);
    let covered = cov_p.min(cov_q);
    if covered < REQUIRED_COVERAGE {
        return Err(TheoryError::GridCoverage { covered, required: REQUIRED_COVERAGE });
    }

    let n_fine = 2 * grid.points - 1;
    let axis = |i: usize| -> (Vec<f64>, f64) {
        let h = (grid.hi[i] - grid.lo[i]) / (n_fine - 1) as f64;
        ((0..n_fine).map(|j| grid.lo[i] + j as f64 * h).collect(), h)
    };
    let trap = |j: usize, n: usize| if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
    let gap = |x: &[f64]| (p.density(x) - q.density(x)).abs();

    // Each coarse node is every second fine node, so one pass yields both sums.
    let (fine, coarse) = if d == 1 {
        let (xs, h) = axis(0);
        let (f, c) = xs
            .par_iter()
            .enumerate()
            .map(|(j, x)| {
                let v = gap(&[*x]);
                let c = if j % 2 == 0 { trap(j / 2, grid.points) * v } else { 0.0 };
                (trap(j, n_fine) * v, c)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        (f * h, c * 2.0 * h)
    } else {
        let (xs, hx) = axis(0);
        let (ys, hy) = axis(1);
        let (f, c) = (0..n_fine)
            .into_par_iter()
            .map(|i| {
                let mut f = 0.0;
                let mut c = 0.0;
                for (j, y) in ys.iter().enumerate() {
                    let v = gap(&[xs[i], *y]);
                    f += trap(i, n_fine) * trap(j, n_fine) * v;
                    if i % 2 == 0 && j % 2 == 0 {
                        c += trap(i / 2, grid.points) * trap(j / 2, grid.points) * v;
                    }
                }
                (f, c)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        (f * hx * hy, c * 4.0 * hx * hy)
    };
    let tolerance = (fine - coarse).abs() + (1.0 - cov_p) + (1.0 - cov_q);
    Ok(DistanceEstimate {
        value: fine,
        method: DistanceMethod::Grid,
        tolerance,
        grid: Some(grid.clone()),
        n_mc: None,
    })
}

/// Monte-Carlo estimate of `integral |p - q|`: draws from `(p + q) / 2` and
/// averages `2 |p - q| / (p + q)`. Draw `i` uses its own derived seed.
pub fn mc_distance(p: &GaussianMixture, q: &GaussianMixture, n_mc: usize, seed: u64) -> Result<DistanceEstimate, TheoryError> {
    if p.dim() != q.dim() {
        return Err(TheoryError::DimensionMismatch);
    }
    let n = n_mc.max(1);
    let (sum, sum_sq) = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "mc-distance", i, 0));
            let x = if rng.gen_bool(0.5) { p.sample(&mut rng) } else { q.sample(&mut rng) };
            let (a, b) = (p.density(&x), q.density(&x));
            let v = if a + b > 0.0 { 2.0 * (a - b).abs() / (a + b) } else { 0.0 };
            (v, v * v)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    Ok(DistanceEstimate {
        value: mean,
        method: DistanceMethod::MonteCarlo,
        tolerance: (var / nf).sqrt(),
        grid: None,
        n_mc: Some(n),
    })
}

/// Grid-oracle distance between the world's real distribution and an
/// induced distribution. `grid = None` picks automatic bounds.
pub fn distance_grid(
    world: &WorldSpec,
    induced: &InducedDistribution,
    grid: Option<&GridSpec>,
) -> Result<DistanceEstimate, TheoryError> {
    let real = world.real_mixture();
    let auto;
    let grid = match grid {
        Some(g) => g,
        None => {
            if world.d > 2 {
                return Err(TheoryError::DimensionTooHigh(world.d));
            }
            auto = GridSpec::auto(&real, induced.mixture());
            &auto
        }
    };
    grid_distance(&real, induced.mixture(), grid)
}

pub fn distance_mc(
    world: &WorldSpec,
    induced: &InducedDistribution,
    n_mc: usize,
    seed: u64,
) -> Result<DistanceEstimate, TheoryError> {
    mc_distance(&world.real_mixture(), induced.mixture(), n_mc, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::{normal_cdf, Component};

    fn gauss(m: f64) -> GaussianMixture {
        GaussianMixture::gaussian(vec![m], 1.0)
    }

    #[test]
    fn identical_distributions() {
        let p = gauss(0.0);
        let g = grid_distance(&p, &p, &GridSpec::auto(&p, &p)).unwrap();
        assert!(g.value.abs() < 1e-6);
        assert_eq!(mc_distance(&p, &p, 1000, 1).unwrap().value, 0.0);
    }

    #[test]
    fn disjoint_supports() {
        let (p, q) = (gauss(0.0), gauss(25.0));
        let g = grid_distance(&p, &q, &GridSpec::auto(&p, &q)).unwrap();
        assert!((g.value - 2.0).abs() < 1e-4, "{g:?}");
    }

    #[test]
    fn shifted_unit_gaussians() {
        let exact = 2.0 * (2.0 * normal_cdf(0.5) - 1.0);
        assert!((exact - 0.76585).abs() < 1e-5);
        let (p, q) = (gauss(0.0), gauss(1.0));
        let g = grid_distance(&p, &q, &GridSpec::auto(&p, &q)).unwrap();
        assert!((g.value - exact).abs() < 1e-5, "{g:?}");
        assert!(g.tolerance < 1e-4);
        let m = mc_distance(&p, &q, 200_000, 7).unwrap();
        assert!((m.value - 0.766).abs() < 0.01, "{m:?}");
    }

    #[test]
    fn two_dimensional_closed_form() {
        // Isotropic shift along one axis reduces to the 1-D case.
        let p = GaussianMixture::gaussian(vec![0.0, 0.0], 1.0);
        let q = GaussianMixture::gaussian(vec![1.0, 0.0], 1.0);
        let g = grid_distance(&p, &q, &GridSpec::auto(&p, &q)).unwrap();
        let err = (g.value - 2.0 * (2.0 * normal_cdf(0.5) - 1.0)).abs();
        assert!(err < 1e-3 && err <= g.tolerance, "{g:?}");
    }

    #[test]
    fn symmetry_and_range() {
        let p = GaussianMixture::new(
            2,
            vec![
                Component { mean: vec![0.0, 1.0], var: 0.5, weight: 0.4 },
                Component { mean: vec![2.0, -1.0], var: 1.5, weight: 0.6 },
            ],
        );
        let q = GaussianMixture::gaussian(vec![1.0, 0.5], 0.8);
        let grid = GridSpec::auto(&p, &q);
        let a = grid_distance(&p, &q, &grid).unwrap();
        let b = grid_distance(&q, &p, &grid).unwrap();
        assert_eq!(a.value, b.value);
        assert!(a.value >= 0.0 && a.value <= 2.0 + a.tolerance);
        let ma = mc_distance(&p, &q, 50_000, 3).unwrap();
        let mb = mc_distance(&q, &p, 50_000, 4).unwrap();
        assert!((ma.value - mb.value).abs() <= 2.0 * (ma.tolerance.powi(2) + mb.tolerance.powi(2)).sqrt());
    }

    #[test]
    fn grid_errors() {
        let p = GaussianMixture::gaussian(vec![0.0, 0.0, 0.0], 1.0);
        let g = GridSpec { lo: vec![-5.0; 3], hi: vec![5.0; 3], points: 10 };
        assert_eq!(grid_distance(&p, &p, &g), Err(TheoryError::DimensionTooHigh(3)));
        let p = gauss(0.0);
        let narrow = GridSpec { lo: vec![-1.0], hi: vec![1.0], points: 100 };
        assert!(matches!(grid_distance(&p, &p, &narrow), Err(TheoryError::GridCoverage { .. })));
    }
}
