use std::fs;
use std::sync::Arc;

use cip_core::backends::{BackendEndpoint, EndpointKind, RewriterMode, StubServer, WorldBackend};
use cip_core::dataman::{load_manifest, save_manifest, Provenance};
use cip_core::pipeline::{
    run_in_memory, run_pipeline, run_sweep, Mode, PipelineConfig, RunOptions, RunOutcome, Stage, Strategy, SweepSpec,
    WorldConfig, WorldPreset, WorldSource,
};
use cip_core::synthworld::presets::polysemy_world;
use cip_core::synthworld::CaptionerQuality;
use cip_core::trainer::{ModelKind, TrainConfig};

fn quick_train() -> TrainConfig {
    TrainConfig { epochs: 20, lr_decay_every: 5, model: ModelKind::Mlp { hidden: 16 }, ..TrainConfig::default() }
}

fn world_cfg(preset: WorldPreset, strategy: Strategy, dir: impl Into<std::path::PathBuf>) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(Mode::Synthworld, dir);
    cfg.global_seed = 41;
    cfg.train = quick_train();
    cfg.world = Some(WorldConfig {
        world: WorldSource::Preset(preset),
        strategy,
        captioner: CaptionerQuality::Fine,
        rewriter: RewriterMode::Preserve,
        n_real: 200,
        n_eval: 5000,
        sample_seed: None,
        baseline_real: false,
    });
    cfg
}

#[test]
fn degenerate_world_matches_real_baseline() {
    // One mode per class, no polysemy, g = 1: basic prompts reproduce the
    // real distribution, so synthetic training is as good as real training.
    let mut cfg = world_cfg(WorldPreset::Symmetric1d { separation: 1.0 }, Strategy::Basic, "unused");
    cfg.generation.guidance_scale = 1.0;
    cfg.train = TrainConfig::default();
    let w = cfg.world.as_mut().unwrap();
    w.n_real = 2000;
    w.n_eval = 20_000;
    w.baseline_real = true;
    let (_, report) = run_in_memory(&cfg).unwrap();
    let synth = report.evaluation.risk.unwrap();
    let real = report.evaluation.real_baseline.unwrap();
    let sigma = (synth.std_error.powi(2) + real.std_error.powi(2)).sqrt();
    assert!((synth.accuracy - real.accuracy).abs() <= 3.0 * sigma, "{synth:?} vs {real:?}");
}

#[test]
fn disk_and_memory_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world_cfg(WorldPreset::Polysemy { p: 0.5 }, Strategy::Cip, tmp.path().join("run"));
    let RunOutcome::Completed { synthetic, report } = run_pipeline(&cfg, RunOptions::default()).unwrap() else {
        panic!("run stopped early");
    };
    let (mem_synthetic, mem_report) = run_in_memory(&cfg).unwrap();
    assert_eq!(synthetic, mem_synthetic);
    assert_eq!(report, mem_report);
    assert!(report.evaluation.evaluated);
    assert!(report.classifier_sha256.is_some());
    assert_eq!(report.backends["/v1/caption"], "world:captioner:fine");
    assert!(synthetic.records.iter().all(|r| r.sample_ref.starts_with("vec:")));
    assert!(synthetic.records.iter().all(|r| r.provenance == Provenance::SyntheticCip));
    for stage in Stage::ALL {
        assert_eq!(tmp.path().join("run").join(stage.file()).exists(), Strategy::Cip.runs_stage(stage), "{stage}");
    }
}

#[test]
fn world_resume_at_each_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let cfg = world_cfg(WorldPreset::Polysemy { p: 0.5 }, Strategy::ZeroShotCip, &full);
    run_pipeline(&cfg, RunOptions::default()).unwrap();
    for stage in Stage::ALL {
        assert_eq!(full.join(stage.file()).exists(), Strategy::ZeroShotCip.runs_stage(stage), "{stage}");
    }
    let reference = fs::read(full.join("report.json")).unwrap();
    for stage in Stage::ALL {
        let dir = tmp.path().join(stage.name());
        let mut cfg = cfg.clone();
        cfg.output_dir = dir.clone();
        run_pipeline(&cfg, RunOptions { resume: false, stop_after: Some(stage) }).unwrap();
        run_pipeline(&cfg, RunOptions { resume: true, stop_after: None }).unwrap();
        assert_eq!(fs::read(dir.join("report.json")).unwrap(), reference, "{stage}");
        assert_eq!(fs::read(dir.join("classifier.txt")).unwrap(), fs::read(full.join("classifier.txt")).unwrap());
    }
}

#[test]
fn strategies_change_the_synthetic_set() {
    let mut accs = Vec::new();
    for strategy in [Strategy::Basic, Strategy::Cip, Strategy::ZeroShotCip, Strategy::CipLlm] {
        let cfg = world_cfg(WorldPreset::Polysemy { p: 0.5 }, strategy, "unused");
        let (synthetic, report) = run_in_memory(&cfg).unwrap();
        assert_eq!(synthetic.len(), 200);
        assert_eq!(report.strategy, strategy);
        accs.push(report.evaluation.accuracy().unwrap());
    }
    // Caption-grounded prompts avoid the confusers that basic prompts hit.
    assert!(accs[1] > accs[0] + 0.1, "{accs:?}");
}

#[test]
fn destroying_rewriter_loses_the_caption() {
    let mut cfg = world_cfg(WorldPreset::Polysemy { p: 0.5 }, Strategy::CipLlm, "unused");
    let preserved = run_in_memory(&cfg).unwrap().1.evaluation.accuracy().unwrap();
    cfg.world.as_mut().unwrap().rewriter = RewriterMode::Destroy;
    let (synthetic, report) = run_in_memory(&cfg).unwrap();
    assert!(synthetic.records.iter().all(|r| r.prompt.as_deref().unwrap().contains("where")));
    assert!(report.evaluation.accuracy().unwrap() < preserved, "{report:?}");
}

#[test]
fn one_cell_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let base = world_cfg(WorldPreset::Polysemy { p: 0.5 }, Strategy::Cip, tmp.path().join("sweep"));
    let spec = SweepSpec { guidance: vec![1.5], ..SweepSpec::new(vec![Strategy::Basic]) };
    let report = run_sweep(&spec, &base).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.best, vec![(Strategy::Basic, 1.5)]);
    let row = report.row(Strategy::Basic, 1.5).unwrap();
    assert_eq!((row.n_ok, row.n_failed, row.std), (1, 0, Some(0.0)));
    let table = report.render_table();
    assert_eq!(table.lines().count(), 2, "{table}");
    assert!(table.lines().nth(1).unwrap().starts_with("basic"));
    assert!(tmp.path().join("sweep/cells/basic-g1.5-r0/report.json").exists());
    // Re-running resumes every finished cell.
    assert_eq!(run_sweep(&spec, &base).unwrap().rows, report.rows);
}

#[test]
fn sweep_records_failing_cells() {
    let mut base = world_cfg(WorldPreset::Polysemy { p: 0.5 }, Strategy::Cip, "unused");
    base.train = TrainConfig { lr: 1e6, ..TrainConfig::default() };
    let spec = SweepSpec { guidance: vec![1.5, 3.0], in_memory: true, ..SweepSpec::new(vec![Strategy::Cip]) };
    let report = run_sweep(&spec, &base).unwrap();
    assert!(report.cells.iter().all(|c| c.accuracy.is_none() && c.error.is_some()));
    assert!(report.best.is_empty());
    assert!(report.render_table().contains("failed"));
}

#[test]
fn manifest_mode_over_http_records_and_replays() {
    let world = polysemy_world(0.5);
    let tmp = tempfile::tempdir().unwrap();
    save_manifest(&world.sample_real(30, 5).unwrap(), tmp.path().join("real.jsonl")).unwrap();
    save_manifest(&world.sample_real(500, 6).unwrap(), tmp.path().join("test.jsonl")).unwrap();
    let backend = WorldBackend::new(world, CaptionerQuality::Fine, RewriterMode::Preserve).unwrap();
    let server = StubServer::serve(Arc::new(backend)).unwrap();

    let mut cfg = PipelineConfig::new(Mode::CipLlm, tmp.path().join("live"));
    cfg.input_manifest = Some(tmp.path().join("real.jsonl"));
    cfg.test_manifest = Some(tmp.path().join("test.jsonl"));
    cfg.train = quick_train();
    cfg.record = Some(tmp.path().join("store"));
    let endpoint = |kind| Some(BackendEndpoint::new(server.url(), kind));
    cfg.backends.caption = endpoint(EndpointKind::Caption);
    cfg.backends.generate = endpoint(EndpointKind::Generate);
    cfg.backends.rewrite = endpoint(EndpointKind::Rewrite);
    let RunOutcome::Completed { report, .. } = run_pipeline(&cfg, RunOptions::default()).unwrap() else {
        panic!("run stopped early");
    };
    assert!(report.evaluation.evaluated);
    assert_eq!(report.evaluation.risk.as_ref().unwrap().n_eval, 500);
    assert!(server.hits() >= 90);
    drop(server);

    let mut replay = cfg.clone();
    replay.output_dir = tmp.path().join("replayed");
    replay.record = None;
    replay.replay = Some(tmp.path().join("store"));
    replay.backends = Default::default();
    run_pipeline(&replay, RunOptions::default()).unwrap();
    for file in ["synthetic.jsonl", "report.json", "classifier.txt"] {
        assert_eq!(
            fs::read(tmp.path().join("live").join(file)).unwrap(),
            fs::read(tmp.path().join("replayed").join(file)).unwrap(),
            "{file}"
        );
    }
    let prompts = load_manifest(tmp.path().join("replayed/prompts.jsonl")).unwrap();
    assert!(prompts.records.iter().all(|r| r.prompt.as_deref().unwrap().starts_with("A photo of ")));
}
