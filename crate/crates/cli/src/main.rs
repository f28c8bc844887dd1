use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cip_core::dataman::derive_seed;
use cip_core::pipeline::{
    run_in_memory, run_pipeline, run_sweep, Mode, PipelineConfig, PipelineError, PipelineReport, RunOptions,
    RunOutcome, Stage, Strategy, SweepReport, SweepSpec, WorldConfig, WorldPreset, WorldSource, REPORT_VERSION,
};
use cip_core::synthworld::CaptionerQuality;
use cip_core::theory::{run_bound_suite, BoundSuiteReport, BoundSuiteSpec, TheoryError};
use cip_core::trainer::{ModelKind, TrainConfig, TrainError};

const SWEEP_REPORT_FILE: &str = "sweep_report.json";
const BOUND_REPORT_FILE: &str = "bound_report.json";
const WORLD_REPORT_FILE: &str = "world_report.json";

#[derive(Parser)]
#[command(name = "cip", version, about = "Caption-in-prompt synthetic training pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Pipeline config file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Pipeline mode, or the strategy of a synthworld config.
    #[arg(long, global = true, value_name = "M")]
    mode: Option<String>,
    /// Classifier-free guidance scale.
    #[arg(long, global = true, value_name = "G")]
    guidance: Option<f64>,
    /// Serve backend requests from this replay store.
    #[arg(long, global = true, value_name = "PATH")]
    replay: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Continue the run found in the output directory.
    #[arg(long, global = true)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run through the caption stage.
    Caption,
    /// Run through the prompt stage.
    Prompts,
    /// Run through the rewrite stage.
    Rewrite,
    /// Run through the generation stage.
    Generate,
    /// Run through the training stage.
    Train,
    /// Finish a run and evaluate it.
    Eval,
    /// Run the full pipeline.
    Run,
    /// Sweep strategies over guidance values.
    Sweep(SweepArgs),
    /// Check the risk bound on random toy worlds.
    VerifyBound(BoundArgs),
    /// Paired toy-world experiment across strategies and captioners.
    World(WorldArgs),
    /// Render a JSON report as a table.
    Report {
        path: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec file (JSON); replaces the flags below.
    #[arg(long, value_name = "PATH")]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    /// Guidance grid; defaults to the standard grid.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Run cells without per-cell directories (toy worlds only).
    #[arg(long)]
    in_memory: bool,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 200)]
    configs: usize,
    #[arg(long, default_value_t = 50_000)]
    n_mc: usize,
    #[arg(long, default_value_t = 200)]
    max_prompts: usize,
    #[arg(long, default_value_t = 3.0)]
    n_sigma: f64,
    /// Share of configs that must hold for exit code 0.
    #[arg(long, default_value_t = 0.99)]
    min_share: f64,
}

#[derive(Args)]
struct WorldArgs {
    /// polysemy, symmetric-1d or sweep; defaults to the config's world, else polysemy.
    #[arg(long)]
    preset: Option<String>,
    /// Polysemy probability of the polysemy preset.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Class separation of the symmetric-1d preset.
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    /// Seed of the sweep preset.
    #[arg(long, default_value_t = 0)]
    world_seed: u64,
    /// Arm as strategy[:captioner]; repeatable.
    #[arg(long = "arm", default_values_t = ["cip:fine".to_string(), "cip:coarse".to_string(), "basic".to_string()])]
    arms: Vec<String>,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 1000)]
    n_real: usize,
    #[arg(long, default_value_t = 20_000)]
    n_eval: usize,
}

/// An error carrying its process exit code.
#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn config_error(message: impl Into<String>) -> anyhow::Error {
    Exit { code: 2, message: message.into() }.into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(x) = e.downcast_ref::<Exit>() {
        return x.code;
    }
    if let Some(p) = e.downcast_ref::<PipelineError>() {
        return p.exit_code() as u8;
    }
    match e.downcast_ref::<TheoryError>() {
        Some(TheoryError::World(_) | TheoryError::Train(TrainError::InvalidConfig(_))) => 2,
        Some(_) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes their parent already prints.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out = format!("{out}: {text}");
        }
    }
    out
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Caption => stage_command(g, Stage::Caption),
        Command::Prompts => stage_command(g, Stage::Prompts),
        Command::Rewrite => stage_command(g, Stage::Rewrite),
        Command::Generate => stage_command(g, Stage::Generate),
        Command::Train => stage_command(g, Stage::Train),
        Command::Eval => {
            let cfg = load_config(g)?;
            finish(run_pipeline(&cfg, RunOptions { resume: true, stop_after: None })?)
        }
        Command::Run => {
            let cfg = load_config(g)?;
            finish(run_pipeline(&cfg, RunOptions { resume: g.resume, stop_after: None })?)
        }
        Command::Sweep(args) => sweep(g, &args),
        Command::VerifyBound(args) => verify_bound(g, &args),
        Command::World(args) => world(g, &args),
        Command::Report { path } => report(&path),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn write_report<T: Serialize>(dir: &Path, file: &str, report: &T) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    let path = dir.join(file);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// The config file (or `--mode` and `--out` alone) with the global flags
/// applied on top.
fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::from_json(&read_text(path)?)?,
        None => {
            let name = g.mode.as_deref().ok_or_else(|| config_error("--config or --mode is required"))?;
            let mode = Mode::from_name(name).ok_or_else(|| config_error(format!("unknown mode {name}")))?;
            let out = g.out.clone().ok_or_else(|| config_error("--config or --out is required"))?;
            PipelineConfig::new(mode, out)
        }
    };
    if let Some(name) = &g.mode {
        match (&mut cfg.world, Strategy::from_name(name)) {
            (Some(w), Some(s)) if cfg.mode == Mode::Synthworld => w.strategy = s,
            _ => cfg.mode = Mode::from_name(name).ok_or_else(|| config_error(format!("unknown mode {name}")))?,
        }
    }
    if let Some(seed) = g.seed {
        cfg.global_seed = seed;
    }
    if let Some(guidance) = g.guidance {
        cfg.generation.guidance_scale = guidance;
    }
    if let Some(replay) = &g.replay {
        cfg.replay = Some(replay.clone());
        cfg.record = None;
    }
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage_command(g: &GlobalArgs, stage: Stage) -> Result<()> {
    let cfg = load_config(g)?;
    let strategy = cfg.strategy()?;
    if !strategy.runs_stage(stage) {
        return Err(config_error(format!("strategy {} has no {stage} stage", strategy.name())));
    }
    match run_pipeline(&cfg, RunOptions { resume: true, stop_after: Some(stage) })? {
        RunOutcome::Stopped { after } => {
            println!("checkpointed {} in {}", after.file(), cfg.output_dir.display());
            Ok(())
        }
        done => finish(done),
    }
}

fn finish(outcome: RunOutcome) -> Result<()> {
    match outcome {
        RunOutcome::Completed { report, .. } => print!("{}", render_pipeline(&report)),
        RunOutcome::Stopped { after } => println!("stopped after {after}"),
    }
    Ok(())
}

fn render_pipeline(r: &PipelineReport) -> String {
    let mut out = String::new();
    let mut row = |k: &str, v: String| {
        let _ = writeln!(out, "{k:<16}{v}");
    };
    row("mode", r.mode.name().into());
    row("strategy", r.strategy.name().into());
    row("seed", r.global_seed.to_string());
    row("guidance", r.guidance_scale.to_string());
    row("replicas", r.replicas_per_prompt.to_string());
    let c = &r.counts;
    let opt = |n: Option<usize>| n.map_or("-".to_string(), |n| n.to_string());
    row(
        "records",
        format!(
            "real {} preliminary {} captions {} rewrites {} prompts {} synthetic {}",
            c.real,
            opt(c.preliminary),
            opt(c.captions),
            opt(c.rewrites),
            c.prompts,
            c.synthetic
        ),
    );
    row("labels", format!("{:?}", r.label_counts));
    for (route, id) in &r.backends {
        row(route, id.clone());
    }
    row("synthetic sha", r.synthetic_sha256.clone());
    let e = &r.evaluation;
    match &e.risk {
        Some(risk) => row(
            "accuracy",
            format!("{:.4} +- {:.4} (n = {}, {:?})", risk.accuracy, risk.std_error, risk.n_eval, risk.eval_kind),
        ),
        None => row("accuracy", format!("not evaluated: {}", e.reason.as_deref().unwrap_or("-"))),
    }
    if let Some(real) = &e.real_baseline {
        row("real baseline", format!("{:.4} +- {:.4}", real.accuracy, real.std_error));
    }
    out
}

fn sweep(g: &GlobalArgs, args: &SweepArgs) -> Result<()> {
    let base = load_config(g)?;
    let spec = match &args.spec {
        Some(path) => serde_json::from_str(&read_text(path)?).map_err(|e| config_error(format!("sweep spec: {e}")))?,
        None => {
            let strategies = args
                .strategies
                .iter()
                .map(|s| Strategy::from_name(s).ok_or_else(|| config_error(format!("unknown strategy {s}"))))
                .collect::<Result<Vec<_>>>()?;
            let mut spec = SweepSpec::new(strategies);
            if !args.grid.is_empty() {
                spec.guidance = args.grid.clone();
            }
            spec.repeats = args.repeats;
            spec.in_memory = args.in_memory;
            spec
        }
    };
    let report = run_sweep(&spec, &base)?;
    write_report(&base.output_dir, SWEEP_REPORT_FILE, &report)?;
    print!("{}", report.render_table());
    Ok(())
}

fn verify_bound(g: &GlobalArgs, args: &BoundArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.min_share) {
        return Err(config_error("--min-share must lie in [0, 1]"));
    }
    let spec = BoundSuiteSpec {
        configs: args.configs,
        seed: g.seed.unwrap_or(1),
        n_mc: args.n_mc,
        max_prompts: args.max_prompts,
        n_sigma: args.n_sigma,
        ..BoundSuiteSpec::default()
    };
    let report = run_bound_suite(&spec)?;
    if let Some(out) = &g.out {
        write_report(out, BOUND_REPORT_FILE, &report)?;
    }
    print!("{}", render_bound(&report));
    if report.share_held() < args.min_share {
        return Err(Exit {
            code: 4,
            message: format!("bound held in {}/{} configs, below {}", report.held, report.cases.len(), args.min_share),
        }
        .into());
    }
    Ok(())
}

fn render_bound(r: &BoundSuiteReport) -> String {
    let mut out = format!(
        "bound held within {} sigma in {}/{} configs ({:.1}s)\n",
        r.spec.n_sigma,
        r.held,
        r.cases.len(),
        r.runtime_secs
    );
    for c in r.cases.iter().filter(|c| !c.holds) {
        let _ = writeln!(
            out,
            "  violated: seed {} R_D {:.4} > R_DC {:.4} + d {:.4} (sigma {:.4})",
            c.seed, c.r_d, c.r_dc, c.distance, c.sigma_total
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WorldReport {
    report_version: u32,
    world: WorldSource,
    guidance: f64,
    seeds: Vec<u64>,
    arms: Vec<ArmResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArmResult {
    strategy: Strategy,
    captioner: CaptionerQuality,
    accuracies: Vec<f64>,
    mean: f64,
    std_error: f64,
    /// Mean and standard error of the per-seed difference to the first arm.
    paired_diff: Option<(f64, f64)>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn parse_arm(text: &str) -> Result<(Strategy, CaptionerQuality)> {
    let (s, q) = text.split_once(':').unwrap_or((text, "fine"));
    let strategy = Strategy::from_name(s).ok_or_else(|| config_error(format!("unknown strategy {s}")))?;
    let quality = serde_json::from_value(serde_json::Value::String(q.into()))
        .map_err(|_| config_error(format!("unknown captioner {q}")))?;
    Ok((strategy, quality))
}

fn world_base(g: &GlobalArgs, args: &WorldArgs) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(_) => load_config(g)?,
        None => {
            let mut cfg = PipelineConfig::new(Mode::Synthworld, g.out.clone().unwrap_or_default());
            cfg.replicas_per_prompt = 4;
            cfg.train = TrainConfig {
                epochs: 40,
                lr_decay_every: 10,
                model: ModelKind::Mlp { hidden: 64 },
                ..TrainConfig::default()
            };
            cfg
        }
    };
    if cfg.mode != Mode::Synthworld {
        return Err(config_error("the world runner needs a synthworld config"));
    }
    let preset = match args.preset.as_deref() {
        Some("polysemy") => Some(WorldPreset::Polysemy { p: args.p }),
        Some("symmetric-1d") => Some(WorldPreset::Symmetric1d { separation: args.separation }),
        Some("sweep") => Some(WorldPreset::Sweep { seed: args.world_seed }),
        Some(other) => return Err(config_error(format!("unknown preset {other}"))),
        None => None,
    };
    let world = match (preset, &cfg.world) {
        (Some(p), _) => WorldSource::Preset(p),
        (None, Some(w)) => w.world.clone(),
        (None, None) => WorldSource::Preset(WorldPreset::Polysemy { p: args.p }),
    };
    let keep = cfg.world.take();
    cfg.world = Some(WorldConfig {
        world,
        strategy: Strategy::Cip,
        captioner: CaptionerQuality::Fine,
        rewriter: keep.as_ref().map(|w| w.rewriter).unwrap_or_default(),
        n_real: args.n_real,
        n_eval: args.n_eval,
        sample_seed: None,
        baseline_real: false,
    });
    if let Some(seed) = g.seed {
        cfg.global_seed = seed;
    }
    if let Some(guidance) = g.guidance {
        cfg.generation.guidance_scale = guidance;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn world(g: &GlobalArgs, args: &WorldArgs) -> Result<()> {
    if args.seeds == 0 || args.arms.is_empty() {
        return Err(config_error("the world runner needs at least one seed and one arm"));
    }
    let base = world_base(g, args)?;
    let arms = args.arms.iter().map(|a| parse_arm(a)).collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..args.seeds).map(|i| derive_seed(base.global_seed, "world-runner", i, 0)).collect();
    let mut results: Vec<ArmResult> = Vec::new();
    for &(strategy, captioner) in &arms {
        let mut accuracies = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let mut cfg = base.clone();
            cfg.global_seed = seed;
            let w = cfg.world.as_mut().expect("set by world_base");
            w.strategy = strategy;
            w.captioner = captioner;
            let (_, report) = run_in_memory(&cfg)?;
            let acc = report.evaluation.accuracy().ok_or_else(|| Exit {
                code: 4,
                message: format!("{} run with seed {seed} was not evaluated", strategy.name()),
            })?;
            accuracies.push(acc);
        }
        let (mean, std_error) = mean_se(&accuracies);
        let paired_diff = results.first().map(|first| {
            let diffs: Vec<f64> = accuracies.iter().zip(&first.accuracies).map(|(a, b)| a - b).collect();
            mean_se(&diffs)
        });
        results.push(ArmResult { strategy, captioner, accuracies, mean, std_error, paired_diff });
    }
    let report = WorldReport {
        report_version: REPORT_VERSION,
        world: base.world.expect("set by world_base").world,
        guidance: base.generation.guidance_scale,
        seeds,
        arms: results,
    };
    if let Some(out) = &g.out {
        write_report(out, WORLD_REPORT_FILE, &report)?;
    }
    print!("{}", render_world(&report));
    Ok(())
}

fn render_world(r: &WorldReport) -> String {
    let mut out = format!("{:<15}{:<10}{:>16}{:>22}\n", "strategy", "captioner", "accuracy", "vs first arm");
    for a in &r.arms {
        let q = match a.strategy.uses_captions() {
            true => serde_json::to_value(a.captioner).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            false => "-".into(),
        };
        let diff = a.paired_diff.map_or("-".to_string(), |(d, se)| format!("{d:+.4} +- {se:.4}"));
        let acc = format!("{:.4} +- {:.4}", a.mean, a.std_error);
        let _ = writeln!(out, "{:<15}{:<10}{:>16}{:>22}", a.strategy.name(), q, acc, diff);
    }
    let _ = writeln!(out, "{} paired seeds, guidance {}", r.seeds.len(), r.guidance);
    out
}

fn report(path: &Path) -> Result<()> {
    let text = read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let parse_err = |e: serde_json::Error| config_error(format!("{}: {e}", path.display()));
    if value.get("cases").is_some() {
        let r: BoundSuiteReport = serde_json::from_value(value).map_err(parse_err)?;
        print!("{}", render_bound(&r));
        return Ok(());
    }
    let version = value.get("report_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(REPORT_VERSION)) {
        return Err(config_error(format!("{}: unsupported report_version {version:?}", path.display())));
    }
    let rendered = if value.get("arms").is_some() {
        render_world(&serde_json::from_value(value).map_err(parse_err)?)
    } else if value.get("rows").is_some() {
        serde_json::from_value::<SweepReport>(value).map_err(parse_err)?.render_table()
    } else {
        render_pipeline(&serde_json::from_value(value).map_err(parse_err)?)
    };
    print!("{rendered}");
    Ok(())
}
