use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Mode, PipelineConfig, Strategy};
use super::reference::{reference_lookup, REFERENCE_NOTE};
use super::run::{run_in_memory, run_pipeline, RunOptions, RunOutcome};
use super::PipelineError;
use crate::dataman::derive_seed;

/// Guidance scales of the reference protocol.
pub const DEFAULT_GUIDANCE_GRID: [f64; 9] = [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_grid")]
    pub guidance: Vec<f64>,
    pub strategies: Vec<Strategy>,
    #[serde(default = "one")]
    pub repeats: usize,
    /// Dataset name for annotating rows with published numbers.
    #[serde(default)]
    pub reference_dataset: Option<String>,
    /// Run cells without per-cell directories (feature-vector worlds only).
    #[serde(default)]
    pub in_memory: bool,
}

fn default_grid() -> Vec<f64> {
    DEFAULT_GUIDANCE_GRID.to_vec()
}

fn one() -> usize {
    1
}

impl SweepSpec {
    pub fn new(strategies: Vec<Strategy>) -> Self {
        Self { guidance: default_grid(), strategies, repeats: 1, reference_dataset: None, in_memory: false }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.guidance.is_empty() || self.strategies.is_empty() {
            return bad("sweep needs at least one guidance value and one strategy");
        }
        if self.repeats == 0 {
            return bad("sweep repeats must be at least 1");
        }
        if self.guidance.iter().any(|g| !(g.is_finite() && *g >= 1.0)) {
            return bad("guidance values must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub strategy: Strategy,
    pub guidance: f64,
    pub repeat: usize,
    pub global_seed: u64,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub guidance: f64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Published accuracy in percent, for annotation only.
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report_version: u32,
    pub guidance: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub repeats: usize,
    pub rows: Vec<SweepRow>,
    /// Best guidance per strategy by mean accuracy.
    pub best: Vec<(Strategy, f64)>,
    pub cells: Vec<SweepCell>,
    pub reference_note: Option<String>,
    pub runtime_secs: f64,
}

impl SweepReport {
    pub fn row(&self, strategy: Strategy, guidance: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.guidance == guidance)
    }

    /// Fixed-width table: one line per strategy, one column per guidance.
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<15}", "strategy");
        for g in &self.guidance {
            let _ = write!(out, "{:>14}", format!("gs {g}"));
        }
        out.push('\n');
        for s in &self.strategies {
            let _ = write!(out, "{:<15}", s.name());
            for g in &self.guidance {
                let cell = match self.row(*s, *g) {
                    Some(SweepRow { mean: Some(m), std: Some(sd), .. }) => {
                        format!("{:.2}±{:.2}", 100.0 * m, 100.0 * sd)
                    }
                    _ => "failed".into(),
                };
                let best = self.best.iter().any(|(bs, bg)| bs == s && bg == g);
                let _ = write!(out, "{:>14}", if best { format!("*{cell}") } else { cell });
            }
            out.push('\n');
        }
        if let Some(note) = &self.reference_note {
            let _ = writeln!(out, "{note}");
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cell_config(base: &PipelineConfig, strategy: Strategy, guidance: f64, repeat: usize) -> PipelineConfig {
    let mut cfg = base.clone();
    let tag = format!("sweep:{}:{guidance}", strategy.name());
    cfg.global_seed = derive_seed(base.global_seed, &tag, repeat as u64, 0);
    cfg.generation.guidance_scale = guidance;
    cfg.output_dir = base.output_dir.join("cells").join(format!("{}-g{guidance}-r{repeat}", strategy.name()));
    match cfg.world.as_mut() {
        Some(w) => {
            w.strategy = strategy;
            // Cells of one repeat share the real sample and the evaluation
            // draws, so strategies and guidance values are compared paired.
            w.sample_seed = Some(derive_seed(w.sample_seed.unwrap_or(base.global_seed), "sweep-sample", repeat as u64, 0));
        }
        None => {
            cfg.mode = match strategy {
                Strategy::Basic => Mode::Basic,
                Strategy::Cip => Mode::Cip,
                Strategy::ZeroShotCip => Mode::ZeroShotCip,
                Strategy::CipLlm => Mode::CipLlm,
            };
        }
    }
    cfg
}

/// Runs every (strategy, guidance, repeat) cell in parallel. A failing cell
/// is recorded with its error and the sweep goes on.
pub fn run_sweep(spec: &SweepSpec, base: &PipelineConfig) -> Result<SweepReport, PipelineError> {
    spec.validate()?;
    let started = Instant::now();
    let mut jobs = Vec::new();
    for &s in &spec.strategies {
        for &g in &spec.guidance {
            for r in 0..spec.repeats {
                jobs.push((s, g, r));
            }
        }
    }
    for &(s, g, r) in &jobs {
        cell_config(base, s, g, r).validate()?;
    }
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|&(strategy, guidance, repeat)| {
            let cfg = cell_config(base, strategy, guidance, repeat);
            let t = Instant::now();
            let result = if spec.in_memory {
                run_in_memory(&cfg).map(|(_, report)| report)
            } else {
                run_pipeline(&cfg, RunOptions { resume: true, stop_after: None }).map(|o| match o {
                    RunOutcome::Completed { report, .. } => report,
                    RunOutcome::Stopped { .. } => unreachable!("no stop point is set"),
                })
            };
            let (accuracy, error) = match result {
                Ok(report) => match report.evaluation.accuracy() {
                    Some(a) => (Some(a), None),
                    None => (None, report.evaluation.reason.clone()),
                },
                Err(e) => (None, Some(e.to_string())),
            };
            SweepCell {
                strategy,
                guidance,
                repeat,
                global_seed: cfg.global_seed,
                accuracy,
                error,
                runtime_secs: t.elapsed().as_secs_f64(),
            }
        })
        .collect();

    let mut rows = Vec::new();
    for &s in &spec.strategies {
        for &g in &spec.guidance {
            let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.strategy == s && c.guidance == g).collect();
            let accs: Vec<f64> = mine.iter().filter_map(|c| c.accuracy).collect();
            let (mean, std) = if accs.is_empty() { (None, None) } else {
                let (m, sd) = mean_std(&accs);
                (Some(m), Some(sd))
            };
            let reference = spec.reference_dataset.as_deref().and_then(|d| reference_lookup(d, reference_name(s), g));
            rows.push(SweepRow { strategy: s, guidance: g, mean, std, n_ok: accs.len(), n_failed: mine.len() - accs.len(), reference });
        }
    }
    let best = spec
        .strategies
        .iter()
        .filter_map(|&s| {
            rows.iter()
                .filter(|r| r.strategy == s)
                .filter_map(|r| r.mean.map(|m| (r.guidance, m)))
                .fold(None, |acc: Option<(f64, f64)>, (g, m)| match acc {
                    Some((_, bm)) if bm >= m => acc,
                    _ => Some((g, m)),
                })
                .map(|(g, _)| (s, g))
        })
        .collect();
    Ok(SweepReport {
        report_version: super::run::REPORT_VERSION,
        guidance: spec.guidance.clone(),
        strategies: spec.strategies.clone(),
        repeats: spec.repeats,
        rows,
        best,
        cells,
        reference_note: spec.reference_dataset.as_ref().map(|_| REFERENCE_NOTE.to_string()),
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// Row name of a strategy in the published tables.
fn reference_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Basic => "basic",
        Strategy::Cip => "cip-blip2",
        Strategy::ZeroShotCip => "cip-zero-shot",
        Strategy::CipLlm => "cip-blip2-llm",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_nine_values() {
        assert_eq!(DEFAULT_GUIDANCE_GRID.len(), 9);
        assert_eq!(SweepSpec::new(vec![Strategy::Basic]).guidance, DEFAULT_GUIDANCE_GRID.to_vec());
        let parsed: SweepSpec = serde_json::from_str(r#"{"strategies":["cip"]}"#).unwrap();
        assert_eq!((parsed.guidance.len(), parsed.repeats), (9, 1));
    }

    #[test]
    fn spec_validation() {
        assert!(SweepSpec { strategies: vec![], ..SweepSpec::new(vec![]) }.validate().is_err());
        assert!(SweepSpec { guidance: vec![0.5], ..SweepSpec::new(vec![Strategy::Cip]) }.validate().is_err());
        assert!(SweepSpec { repeats: 0, ..SweepSpec::new(vec![Strategy::Cip]) }.validate().is_err());
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn cell_seeds_differ_and_samples_pair() {
        let mut base = PipelineConfig::new(Mode::Synthworld, "/tmp/sweep");
        base.world = Some(crate::pipeline::WorldConfig {
            world: crate::pipeline::WorldSource::Preset(crate::pipeline::WorldPreset::Polysemy { p: 0.5 }),
            strategy: Strategy::Cip,
            captioner: crate::synthworld::CaptionerQuality::Fine,
            rewriter: Default::default(),
            n_real: 10,
            n_eval: 10,
            sample_seed: None,
            baseline_real: false,
        });
        let a = cell_config(&base, Strategy::Cip, 1.5, 0);
        let b = cell_config(&base, Strategy::Basic, 2.0, 0);
        let c = cell_config(&base, Strategy::Basic, 2.0, 1);
        assert_ne!(a.global_seed, b.global_seed);
        assert_eq!(a.world.as_ref().unwrap().sample_seed, b.world.as_ref().unwrap().sample_seed);
        assert_ne!(b.world.as_ref().unwrap().sample_seed, c.world.as_ref().unwrap().sample_seed);
        assert!(a.output_dir.ends_with("cells/cip-g1.5-r0"));
    }
}
