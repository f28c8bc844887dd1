//! Ready-made worlds: the fixed polysemy world used by the accuracy
//! experiments and seeded random families for the statistical suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassSpec, Mode, Polysemy, WorldSpec};

const BACKGROUNDS: [&str; 12] = [
    "grass", "snow", "water", "sand", "forest", "street", "kitchen", "field", "garden", "beach", "rocks", "stage",
];
const BEHAVIORS: [&str; 12] = [
    "running", "sitting", "swimming", "flying", "sleeping", "eating", "jumping", "standing", "climbing", "hiding",
    "playing", "resting",
];
const CLASS_NAMES: [&str; 4] = ["tench", "springer", "chainsaw", "parachute"];

/// Lowercase letter-only word for index `i` (`a`, `b`, ..., `z`, `ba`, ...).
fn letters(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (i % 26) as u8);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

fn mode(mean: Vec<f64>, weight: f64, bg: &str, bh: &str) -> Mode {
    Mode { mean, weight, background_token: bg.to_string(), behavior_token: bh.to_string() }
}

/// Two single-mode classes at `-sep` and `+sep` on a line, unit sigma.
pub fn symmetric_1d(sep: f64) -> WorldSpec {
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

/// The designated polysemy world: four classes, three modes each, in the
/// plane. The twelve modes sit on a circle of radius 8 with the classes
/// interleaved (class `c` owns positions `c`, `c + 4`, `c + 8`), sigma 1.5,
/// mode weights 0.6 / 0.1 / 0.3. Modes 0 and 1 of a class share a
/// background, so a coarse caption leaves them ambiguous and overstates the
/// light mode 1 where it overlaps its neighbours. Every class name is
/// polysemous with probability `p`; its confuser is mode 0 of the next
/// class.
pub fn polysemy_world(p: f64) -> WorldSpec {
    let radius = 8.0;
    let weights = [0.6, 0.1, 0.3];
    let pos = |c: usize, j: usize| {
        let angle = 2.0 * std::f64::consts::PI * (c + 4 * j) as f64 / 12.0;
        vec![radius * angle.cos(), radius * angle.sin()]
    };
    let modes_of = |c: usize| -> Vec<Mode> {
        (0..3)
            .map(|j| {
                let bg = BACKGROUNDS[3 * c + usize::from(j == 2)];
                mode(pos(c, j), weights[j], bg, BEHAVIORS[3 * c + j])
            })
            .collect()
    };
    let classes = (0..4)
        .map(|c| {
            let next = (c + 1) % 4;
            ClassSpec {
                name: CLASS_NAMES[c].to_string(),
                modes: modes_of(c),
                polysemy: Some(Polysemy { confuser: modes_of(next).swap_remove(0), p }),
            }
        })
        .collect();
    WorldSpec { d: 2, sigma: 1.5, classes, seed: 0, drift: 0.0 }
}

/// Parameters of the random world family.
#[derive(Debug, Clone, Copy)]
pub struct RandomWorldParams {
    pub d: usize,
    pub max_classes: usize,
    pub max_modes: usize,
    /// Means are drawn uniformly from `[-spread, spread]^d`.
    pub spread: f64,
    pub sigma_range: (f64, f64),
    pub polysemy_prob: f64,
    pub max_drift: f64,
}

impl Default for RandomWorldParams {
    fn default() -> Self {
        Self {
            d: 2,
            max_classes: 5,
            max_modes: 3,
            spread: 6.0,
            sigma_range: (0.6, 1.5),
            polysemy_prob: 0.5,
            max_drift: 0.5,
        }
    }
}

/// A seeded random world: 2..=max_classes classes with 1..=max_modes modes,
/// random non-uniform weights, random polysemy.
pub fn random_world(seed: u64, params: RandomWorldParams) -> WorldSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=params.max_classes.max(2));
    let sigma = rng.gen_range(params.sigma_range.0..=params.sigma_range.1);
    let mut counter = 0usize;
    let mut fresh_mode = |rng: &mut ChaCha8Rng, weight: f64| {
        let mean = (0..params.d).map(|_| rng.gen_range(-params.spread..=params.spread)).collect();
        counter += 1;
        mode(mean, weight, &format!("bg{}", letters(counter)), &format!("bh{}", letters(counter)))
    };
    let classes = (0..k)
        .map(|c| {
            let n = rng.gen_range(1..=params.max_modes);
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut modes: Vec<Mode> = raw.iter().map(|w| fresh_mode(&mut rng, w / total)).collect();
            // Renormalize exactly so the weights sum to one in floating point.
            let last: f64 = modes[..n - 1].iter().map(|m| m.weight).sum();
            modes[n - 1].weight = 1.0 - last;
            let polysemy = if rng.gen_bool(params.polysemy_prob) {
                Some(Polysemy { confuser: fresh_mode(&mut rng, 1.0), p: rng.gen_range(0.0..0.8) })
            } else {
                None
            };
            ClassSpec { name: format!("class{}", letters(c)), modes, polysemy }
        })
        .collect();
    let drift = if params.max_drift > 0.0 { rng.gen_range(0.0..params.max_drift) } else { 0.0 };
    WorldSpec { d: params.d, sigma, classes, seed, drift }
}

/// A world from the guidance-sweep family: the polysemy layout with sigma
/// 1.5, drift 0.15 and unequal mode weights. Mode 0 of each class is heavy
/// (weight 0.6) and jittered; mode 2 is light (weight about 0.1) and sits
/// about one sigma from the next class's heavy mode, so the real Bayes rule
/// hands most of its region to that neighbour. Synthetic sets generated at
/// high guidance lose the overlap and carve the light mode out wrongly,
/// while low guidance drifts off the caption: accuracy peaks in between.
pub fn sweep_world(seed: u64) -> WorldSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = polysemy_world(0.5);
    w.seed = seed;
    w.sigma = 1.5;
    w.drift = 0.15;
    let k = w.classes.len();
    let heavy: Vec<Vec<f64>> = w
        .classes
        .iter()
        .map(|c| c.modes[0].mean.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect())
        .collect();
    for c in 0..k {
        let next = &heavy[(c + 1) % k];
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (ux, uy) = (next[0] / norm, next[1] / norm);
        let angle: f64 = rng.gen_range(-0.6..0.6);
        let (rx, ry) = (ux * angle.cos() - uy * angle.sin(), ux * angle.sin() + uy * angle.cos());
        let dist = w.sigma * rng.gen_range(0.8..1.2);
        let light = vec![next[0] + dist * rx, next[1] + dist * ry];
        let class = &mut w.classes[c];
        class.modes[0].mean = heavy[c].clone();
        for v in &mut class.modes[1].mean {
            *v += rng.gen_range(-0.5..0.5);
        }
        class.modes[2].mean = light;
        let light_weight = 0.1 * rng.gen_range(0.7..1.3);
        class.modes[0].weight = 0.6;
        class.modes[2].weight = light_weight;
        class.modes[1].weight = 1.0 - 0.6 - light_weight;
    }
    // Confusers follow the jittered mode they imitate.
    for (c, class) in w.classes.iter_mut().enumerate() {
        if let Some(poly) = &mut class.polysemy {
            poly.confuser.mean = heavy[(c + 1) % k].clone();
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        symmetric_1d(2.0).validate().unwrap();
        polysemy_world(0.5).validate().unwrap();
        for s in 0..50 {
            random_world(s, RandomWorldParams::default()).validate().unwrap();
            sweep_world(s).validate().unwrap();
        }
    }

    #[test]
    fn polysemy_world_shape() {
        let w = polysemy_world(0.5);
        assert_eq!(w.k(), 4);
        assert!(w.classes.iter().all(|c| c.modes.len() == 3));
        assert_eq!(w.classes[0].polysemy.as_ref().unwrap().confuser.mean, w.classes[1].modes[0].mean);
        assert_eq!(w.classes[2].modes[0].background_token, w.classes[2].modes[1].background_token);
    }

    #[test]
    fn letter_words() {
        assert_eq!(letters(0), "a");
        assert_eq!(letters(25), "z");
        assert_eq!(letters(26), "ba");
    }

    #[test]
    fn random_worlds_are_seeded() {
        let p = RandomWorldParams::default();
        assert_eq!(random_world(7, p), random_world(7, p));
        assert_ne!(random_world(7, p), random_world(8, p));
    }
}
