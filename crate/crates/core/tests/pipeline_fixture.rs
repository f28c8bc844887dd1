use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cip_core::backends::{caption_sample, rewrite_caption, ReplayTransport, RewriteParams};
use cip_core::dataman::{load_manifest, Provenance};
use cip_core::pipeline::{
    build_imagenette_fixture, imagenette_config, run_cip, run_llm_variant, run_pipeline, run_zero_shot, Mode,
    RunOptions, RunOutcome, Stage, IMAGENETTE_GUIDANCE, PRELIMINARY_GUIDANCE,
};
use cip_core::promptkit::rewrite_request;

fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/imagenette")
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Set CIP_REGENERATE_FIXTURES=1 to rewrite the committed fixture.
#[test]
fn committed_fixture_is_current() {
    if std::env::var_os("CIP_REGENERATE_FIXTURES").is_some() {
        let _ = fs::remove_dir_all(fixture_root());
        build_imagenette_fixture(&fixture_root()).unwrap();
    }
    let tmp = tempfile::tempdir().unwrap();
    build_imagenette_fixture(tmp.path()).unwrap();
    let fresh = tree(tmp.path());
    let committed = tree(&fixture_root());
    assert_eq!(fresh.keys().collect::<Vec<_>>(), committed.keys().collect::<Vec<_>>());
    for (name, bytes) in &fresh {
        assert!(committed[name] == *bytes, "{name} differs from the committed fixture");
    }
}

#[test]
fn replayed_captions_and_rewrites() {
    let replay = ReplayTransport::open(fixture_root().join("replay")).unwrap();
    assert_eq!(
        caption_sample(&replay, "imagenette/n01440764/0.jpg").unwrap(),
        "a fish laying on the grass in the grass"
    );
    let req = rewrite_request("tench", "a fish laying on the grass in the grass").unwrap();
    let text = rewrite_caption(&replay, &req, &RewriteParams::default()).unwrap();
    assert!(text.contains("A man proudly displays a caught tench"), "{text}");
    assert_eq!(text, rewrite_caption(&replay, &req, &RewriteParams::default()).unwrap());
}

#[test]
fn cip_prompts_match_caption_goldens() {
    let out = tempfile::tempdir().unwrap();
    let cfg = imagenette_config(Mode::Cip, &fixture_root(), out.path().join("run"));
    let (synthetic, report) = run_cip(&cfg).unwrap();
    let expected = [
        "A photo of tench, a fish laying on the grass in the grass",
        "A photo of tench, a man kneeling down holding a large fish",
        "A photo of tench, a man holding a fish on a river bank",
        "A photo of English Springer Spaniel, a dog sitting on the grass with a leash",
        "A photo of English Springer Spaniel, a brown and white dog sitting on a wooden bench",
        "A photo of English Springer Spaniel, a dog wearing a santa hat",
        "A photo of golf ball, a golf ball on a tee with a green background",
        "A photo of golf ball, golf ball and driver on green grass",
        "A photo of golf ball, a box of golf balls with different logos on them",
    ];
    let prompts = load_manifest(out.path().join("run/prompts.jsonl")).unwrap();
    let got: Vec<&str> = prompts.records.iter().map(|r| r.prompt.as_deref().unwrap()).collect();
    assert_eq!(got, expected);
    assert_eq!(synthetic.len(), 9);
    assert_eq!(report.counts.real, 9);
    assert_eq!(report.counts.captions, Some(9));
    assert_eq!(report.label_counts, vec![3, 3, 3]);
    assert!(synthetic.records.iter().all(|r| r.provenance == Provenance::SyntheticCip));
    assert!(synthetic.records.iter().all(|r| r.sample_ref.ends_with(".png")));
    assert!(!report.evaluation.evaluated, "image payloads are not trained on here");
    assert_eq!(report.backends["/v1/caption"], "blip2");
}

#[test]
fn llm_prompts_carry_rewrites() {
    let out = tempfile::tempdir().unwrap();
    let cfg = imagenette_config(Mode::CipLlm, &fixture_root(), out.path().join("run"));
    let (synthetic, _) = run_llm_variant(&cfg).unwrap();
    let first = synthetic.records[0].prompt.as_deref().unwrap();
    assert!(
        first == "A photo of tench, A man proudly displays a caught tench fish on the grass surrounded by nature"
            || first.starts_with("A photo of tench, A heartwarming scene"),
        "{first}"
    );
    for r in &synthetic.records {
        let p = r.prompt.as_deref().unwrap();
        assert!(p.chars().skip("A photo of ".len()).all(|c| c.is_alphabetic() || c == ' ' || c == ','), "{p}");
        assert_eq!(r.provenance, Provenance::SyntheticLlm);
    }
    let again = tempfile::tempdir().unwrap();
    let cfg2 = imagenette_config(Mode::CipLlm, &fixture_root(), again.path().join("run"));
    assert_eq!(run_llm_variant(&cfg2).unwrap().0, synthetic, "candidate selection is seeded");
}

#[test]
fn zero_shot_uses_basic_preliminary_pass() {
    let out = tempfile::tempdir().unwrap();
    let cfg = imagenette_config(Mode::ZeroShotCip, &fixture_root(), out.path().join("run"));
    let (synthetic, report) = run_zero_shot(&cfg).unwrap();
    let pre = load_manifest(out.path().join("run/preliminary.jsonl")).unwrap();
    assert_eq!(pre.len(), 9);
    assert_eq!(pre.records[0].prompt.as_deref(), Some("A photo of tench"));
    assert!(pre.records.iter().all(|r| r.provenance == Provenance::SyntheticBasic));
    for r in &pre.records {
        let bytes = fs::read(out.path().join("run").join(&r.sample_ref)).unwrap();
        assert!(String::from_utf8_lossy(&bytes).contains(&format!("guidance {PRELIMINARY_GUIDANCE:?}")));
    }
    assert_eq!(synthetic.records[1].prompt.as_deref(), Some("A photo of tench, a large fish laying on some rocks"));
    assert!(synthetic.records.iter().all(|r| r.provenance == Provenance::SyntheticZeroshot));
    assert_eq!(report.guidance_scale, IMAGENETTE_GUIDANCE);
    assert_eq!(report.counts.preliminary, Some(9));
}

fn final_bytes(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    (fs::read(dir.join("synthetic.jsonl")).unwrap(), fs::read(dir.join("report.json")).unwrap())
}

#[test]
fn resume_at_every_stage_boundary_is_byte_identical() {
    for mode in [Mode::Basic, Mode::Cip, Mode::ZeroShotCip, Mode::CipLlm] {
        let tmp = tempfile::tempdir().unwrap();
        let full = tmp.path().join("full");
        let cfg = imagenette_config(mode, &fixture_root(), &full);
        assert!(matches!(run_pipeline(&cfg, RunOptions::default()).unwrap(), RunOutcome::Completed { .. }));
        let reference = final_bytes(&full);

        let repeat = tmp.path().join("repeat");
        run_pipeline(&imagenette_config(mode, &fixture_root(), &repeat), RunOptions::default()).unwrap();
        assert_eq!(final_bytes(&repeat), reference, "{mode:?} repeated run");

        for stage in Stage::ALL {
            let dir = tmp.path().join(format!("stop-{stage}"));
            let cfg = imagenette_config(mode, &fixture_root(), &dir);
            let first = run_pipeline(&cfg, RunOptions { resume: false, stop_after: Some(stage) }).unwrap();
            if stage != Stage::Eval && dir.join(stage.file()).exists() {
                assert_eq!(first, RunOutcome::Stopped { after: stage }, "{mode:?} {stage}");
            }
            run_pipeline(&cfg, RunOptions { resume: true, stop_after: None }).unwrap();
            assert_eq!(final_bytes(&dir), reference, "{mode:?} resumed after {stage}");
        }
    }
}

#[test]
fn torn_generation_checkpoint_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    run_pipeline(&imagenette_config(Mode::Cip, &fixture_root(), &full), RunOptions::default()).unwrap();

    let dir = tmp.path().join("torn");
    let cfg = imagenette_config(Mode::Cip, &fixture_root(), &dir);
    run_pipeline(&cfg, RunOptions { resume: false, stop_after: Some(Stage::Generate) }).unwrap();
    let path = dir.join("synthetic.jsonl");
    let bytes = fs::read(&path).unwrap();
    // Keep four full records and half of the fifth line.
    let cut = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(4).unwrap().0 + 30;
    fs::write(&path, &bytes[..cut]).unwrap();
    run_pipeline(&cfg, RunOptions { resume: true, stop_after: None }).unwrap();
    assert_eq!(final_bytes(&dir), final_bytes(&full));
}

#[test]
fn occupied_output_dir_needs_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = imagenette_config(Mode::Basic, &fixture_root(), tmp.path().join("run"));
    run_pipeline(&cfg, RunOptions::default()).unwrap();
    let err = run_pipeline(&cfg, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let mut other = cfg.clone();
    other.global_seed += 1;
    assert_eq!(run_pipeline(&other, RunOptions { resume: true, stop_after: None }).unwrap_err().exit_code(), 2);
}

#[test]
fn replay_miss_is_a_backend_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = imagenette_config(Mode::Cip, &fixture_root(), tmp.path().join("run"));
    cfg.global_seed += 1;
    let err = run_pipeline(&cfg, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert_eq!(err.stage(), Some(Stage::Generate));
}
